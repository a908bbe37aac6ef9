//! Entity extraction with each inference backend.

use std::fmt;
use std::str::FromStr;

use crate::crf::{crf_viterbi, TagSequence};
use crate::error::{Error, Result};
use crate::features::Model;
use crate::filtered::{build_graph, filter_segments, FilteredGraph};
use crate::semicrf::{semicrf_unit_null_mask, semicrf_viterbi};
use crate::types::{entities_of, EntitySet, LabelSet, ScoreSet, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Linear-chain CRF over width-1 scores; runs of one entity label form
    /// an entity.
    Crf,
    /// Full semi-Markov CRF.
    SemiCrf,
    /// Semi-Markov CRF where null segments must have width 1.
    SemiCrfUnitNull,
    /// Semi-Markov CRF restricted to the filtered graph.
    FSemiCrf,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::Crf, Backend::SemiCrf, Backend::SemiCrfUnitNull, Backend::FSemiCrf];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Crf => "crf",
            Backend::SemiCrf => "semicrf",
            Backend::SemiCrfUnitNull => "semicrf-unitnull",
            Backend::FSemiCrf => "fsemicrf",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownBackend(s.to_string()))
    }
}

/// Maximal runs of equal non-null tags.
pub fn tags_to_entities(tags: &TagSequence, labels: &LabelSet) -> Result<EntitySet> {
    let mut out: Vec<Segment> = Vec::new();
    for (k, &y) in tags.0.iter().enumerate() {
        if labels.is_null(y) {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.label == y && last.end == k => last.end = k + 1,
            _ => out.push(Segment::new(k + 1, k + 1, y)),
        }
    }
    EntitySet::new(out)
}

/// Filters, builds the graph and returns it.
pub fn filtered_graph(scores: &ScoreSet, labels: &LabelSet) -> Result<FilteredGraph> {
    build_graph(&filter_segments(scores, labels)?, scores)
}

/// Highest-scoring entities under `backend`.
pub fn decode_scores(backend: Backend, scores: &ScoreSet, labels: &LabelSet) -> Result<EntitySet> {
    labels.require_null()?;
    if labels.len() != scores.num_labels() {
        return Err(Error::LengthMismatch {
            expected: scores.num_labels(),
            actual: labels.len(),
        });
    }
    match backend {
        Backend::Crf => tags_to_entities(&crf_viterbi(scores).0, labels),
        Backend::SemiCrf => Ok(entities_of(&semicrf_viterbi(scores).0, labels)),
        Backend::SemiCrfUnitNull => {
            let masked = semicrf_unit_null_mask(scores, labels)?;
            Ok(entities_of(&semicrf_viterbi(&masked).0, labels))
        }
        Backend::FSemiCrf => filtered_graph(scores, labels)?.decode().0.to_entity_set(),
    }
}

impl Model {
    /// Scores and decodes one sentence. Empty input yields no entities.
    pub fn decode(&self, tokens: &[String], backend: Backend) -> Result<EntitySet> {
        if tokens.is_empty() {
            return Ok(EntitySet::empty());
        }
        decode_scores(backend, &self.score(tokens)?, &self.labels)
    }
}
