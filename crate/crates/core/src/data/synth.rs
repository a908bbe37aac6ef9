use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conll::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::types::{EntitySet, LabelSet, Segment};

/// Parameters of a synthetic tagged corpus.
///
/// Every entity type draws its tokens from its own block of
/// `entity_vocab` words; outside tokens come from a shared block of
/// `other_vocab` words. Consecutive entities are separated by at least one
/// outside token, and entity widths are uniform in `1..=max_entity_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub num_types: usize,
    /// Target fraction of tokens inside entities. The separator rule caps
    /// what is reachable at `w̄ / (w̄ + 1)` for mean width `w̄`.
    pub density: f64,
    pub max_entity_width: usize,
    pub other_vocab: usize,
    pub entity_vocab: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 1000,
            min_len: 8,
            max_len: 30,
            num_types: 4,
            density: 0.15,
            max_entity_width: 3,
            other_vocab: 200,
            entity_vocab: 30,
            seed: 0,
        }
    }
}

/// Entity type names: `LOC`, `MISC`, `ORG`, `PER`, then `T04`, `T05`, ...
/// The list is sorted, so a corpus written to disk and read back gets the
/// same label ids.
fn type_names(n: usize) -> Vec<String> {
    let base = ["LOC", "MISC", "ORG", "PER"];
    (0..n)
        .map(|k| base.get(k).map_or_else(|| format!("T{k:02}"), |s| s.to_string()))
        .collect()
}

pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus> {
    let c = config;
    if !(0.0..=1.0).contains(&c.density) {
        return Err(Error::Config("`density` must lie in [0, 1]".into()));
    }
    if c.min_len == 0 || c.min_len > c.max_len {
        return Err(Error::Config("need 1 <= min_len <= max_len".into()));
    }
    if c.num_types == 0 || c.max_entity_width == 0 || c.other_vocab == 0 || c.entity_vocab == 0 {
        return Err(Error::Config("type count, widths and vocabularies must be positive".into()));
    }
    let names = type_names(c.num_types);
    let labels = LabelSet::with_null("O", names.clone())?;
    let lower: Vec<String> = names.iter().map(|n| n.to_lowercase()).collect();
    let mean_width = (1 + c.max_entity_width) as f64 / 2.0;
    let start_prob = if c.density >= 1.0 {
        1.0
    } else {
        (c.density / (mean_width * (1.0 - c.density))).min(1.0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut sentences = Vec::with_capacity(c.sentences);
    for _ in 0..c.sentences {
        let len = rng.random_range(c.min_len..=c.max_len);
        let mut tokens = Vec::with_capacity(len);
        let mut entities = Vec::new();
        let mut after_entity = false;
        while tokens.len() < len {
            let pos = tokens.len() + 1;
            if !after_entity && rng.random_bool(start_prob) {
                let width = rng.random_range(1..=c.max_entity_width);
                if pos + width - 1 <= len {
                    let t = rng.random_range(0..c.num_types);
                    for _ in 0..width {
                        tokens.push(format!("{}{}", lower[t], rng.random_range(0..c.entity_vocab)));
                    }
                    entities.push(Segment::new(pos, pos + width - 1, t + 1));
                    after_entity = true;
                    continue;
                }
            }
            tokens.push(format!("w{}", rng.random_range(0..c.other_vocab)));
            after_entity = false;
        }
        sentences.push(Sentence {
            tokens,
            entities: EntitySet::new(entities)?,
        });
    }
    Ok(Corpus { labels, sentences })
}
