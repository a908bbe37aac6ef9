use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bio::{bio_decode, bio_encode};
use crate::error::{Error, Result};
use crate::types::{EntitySet, LabelSet, Segment};

/// Tokens with their raw tags, as read from a two-column file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub entities: EntitySet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// `O` at index 0 followed by the entity types.
    pub labels: LabelSet,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn entity_sets(&self) -> Vec<EntitySet> {
        self.sentences.iter().map(|s| s.entities.clone()).collect()
    }
}

fn parse_lines(text: &str, path: &Path, columns: &[usize]) -> Result<Vec<Vec<Vec<String>>>> {
    let mut sentences = Vec::new();
    let mut current: Vec<Vec<String>> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if !columns.contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: format!("expected {columns:?} tab-separated non-empty columns, found {}", fields.len()),
            });
        }
        current.push(fields);
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Parses `token<TAB>tag` lines. Blank lines separate sentences and lines
/// starting with `#` are skipped.
pub fn parse_conll(text: &str, path: &Path) -> Result<Vec<TaggedSentence>> {
    Ok(parse_lines(text, path, &[2])?
        .into_iter()
        .map(|rows| {
            let (tokens, tags) = rows.into_iter().map(|mut r| (r.remove(0), r.remove(0))).unzip();
            TaggedSentence { tokens, tags }
        })
        .collect())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Entity types mentioned by a set of tags, sorted.
fn entity_types<'a>(tags: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    tags.into_iter()
        .filter_map(|t| t.split_once('-').map(|(_, name)| name.to_string()))
        .collect()
}

fn decode_all(tagged: Vec<TaggedSentence>, labels: &LabelSet, path: &Path) -> Result<Vec<Sentence>> {
    tagged
        .into_iter()
        .map(|s| {
            let entities = bio_decode(&s.tags, labels).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: e.to_string(),
            })?;
            Ok(Sentence {
                tokens: s.tokens,
                entities,
            })
        })
        .collect()
}

/// Reads a corpus, deriving the label set from the tags it contains.
pub fn read_conll(path: &Path) -> Result<Corpus> {
    let tagged = parse_conll(&read_text(path)?, path)?;
    let types = entity_types(tagged.iter().flat_map(|s| &s.tags));
    let labels = LabelSet::with_null("O", types)?;
    let sentences = decode_all(tagged, &labels, path)?;
    Ok(Corpus { labels, sentences })
}

/// Reads a corpus against a fixed label set; unknown types are errors.
pub fn read_conll_with(path: &Path, labels: &LabelSet) -> Result<Corpus> {
    let tagged = parse_conll(&read_text(path)?, path)?;
    let sentences = decode_all(tagged, labels, path)?;
    Ok(Corpus {
        labels: labels.clone(),
        sentences,
    })
}

/// Token sequences from a file with one token per line, optionally followed
/// by a tab and a tag that is ignored.
pub fn read_tokens(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(parse_lines(&read_text(path)?, path, &[1, 2])?
        .into_iter()
        .map(|rows| rows.into_iter().map(|mut r| r.swap_remove(0)).collect())
        .collect())
}

pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.sentences {
        let tags = bio_encode(&s.entities, s.tokens.len(), &corpus.labels);
        for (tok, tag) in s.tokens.iter().zip(tags) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&tag);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// One line of a predictions file: tokens and `[start, end, label]` triples
/// with 1-based inclusive spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub tokens: Vec<String>,
    pub entities: Vec<(usize, usize, String)>,
}

impl PredictionRecord {
    pub fn new(tokens: Vec<String>, entities: &EntitySet, labels: &LabelSet) -> Self {
        let entities = entities
            .iter()
            .map(|e| (e.start, e.end, labels.name(e.label).to_string()))
            .collect();
        PredictionRecord { tokens, entities }
    }

    pub fn to_entities(&self, labels: &LabelSet) -> Result<EntitySet> {
        let mut out = Vec::with_capacity(self.entities.len());
        for (i, j, name) in &self.entities {
            let label = labels
                .index_of(name)
                .ok_or_else(|| Error::InvalidLabels(format!("unknown entity type `{name}`")))?;
            let s = Segment::new(*i, *j, label);
            s.check_bounds(self.tokens.len())?;
            out.push(s);
        }
        EntitySet::new(out)
    }
}

pub fn write_predictions(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# doc 1\nJohn\tB-PER\nlives\tO\nin\tO\nNew\tB-LOC\nYork\tI-LOC\n\n\nHi\tO\r\n";

    #[test]
    fn parse_and_decode() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.conll");
        std::fs::write(&p, SAMPLE).unwrap();
        let c = read_conll(&p).unwrap();
        assert_eq!(c.labels.names(), &["O", "LOC", "PER"]);
        assert_eq!(c.sentences.len(), 2);
        assert_eq!(
            c.sentences[0].entities.as_slice(),
            &[Segment::new(1, 1, 2), Segment::new(4, 5, 1)]
        );
        assert!(c.sentences[1].entities.is_empty());
        assert_eq!(read_tokens(&p).unwrap()[0][3], "New");
        // write/read round trip
        let q = dir.path().join("b.conll");
        std::fs::write(&q, write_conll(&c)).unwrap();
        assert_eq!(read_conll(&q).unwrap(), c);
    }

    #[test]
    fn bad_column_count_is_an_error_with_line() {
        let err = parse_conll("a\tO\nb O\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_conll("a\tO\tX\n", Path::new("x")).is_err());
    }

    #[test]
    fn fixed_label_set_rejects_new_types() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.conll");
        std::fs::write(&p, SAMPLE).unwrap();
        let labels = LabelSet::with_null("O", ["PER"]).unwrap();
        assert!(read_conll_with(&p, &labels).is_err());
        assert!(read_conll(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let labels = LabelSet::with_null("O", ["LOC"]).unwrap();
        let ents = EntitySet::new(vec![Segment::new(2, 3, 1)]).unwrap();
        let rec = PredictionRecord::new(vec!["a".into(), "b".into(), "c".into()], &ents, &labels);
        let text = write_predictions(std::slice::from_ref(&rec));
        assert_eq!(text, "{\"tokens\":[\"a\",\"b\",\"c\"],\"entities\":[[2,3,\"LOC\"]]}\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        std::fs::write(&p, text).unwrap();
        let back = read_predictions(&p).unwrap();
        assert_eq!(back, vec![rec.clone()]);
        assert_eq!(back[0].to_entities(&labels).unwrap(), ents);
        let bad = PredictionRecord {
            tokens: vec!["a".into()],
            entities: vec![(1, 2, "LOC".into())],
        };
        assert!(bad.to_entities(&labels).is_err());
    }
}
