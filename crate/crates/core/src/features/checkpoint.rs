use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::Featurizer;
use crate::error::{Error, Result};
use crate::types::{LabelSet, ScoreSet};

/// First line of every checkpoint file.
pub const CHECKPOINT_MAGIC: &str = "segchain-model v1";

/// Token vocabulary. Unknown tokens map to id `len()`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (k, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(['\n', '\r']) {
                return Err(Error::Config(format!("invalid vocabulary entry {t:?}")));
            }
            if index.insert(t.clone(), k).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Sorted distinct tokens of `sentences`.
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let set: BTreeSet<&String> = sentences.into_iter().flatten().collect();
        Vocab::new(set.into_iter().cloned().collect()).expect("distinct tokens")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.tokens.len())
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// A trained scorer with everything needed to run it on raw tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub labels: LabelSet,
    pub vocab: Vocab,
    pub max_width: usize,
    pub featurizer: Featurizer,
}

impl Model {
    pub fn new(labels: LabelSet, vocab: Vocab, max_width: usize, featurizer: Featurizer) -> Result<Self> {
        if featurizer.vocab_size() != vocab.len() || featurizer.num_labels() != labels.len() {
            return Err(Error::Config("featurizer does not match vocabulary or labels".into()));
        }
        if max_width == 0 {
            return Err(Error::Config("`max_width` must be at least 1".into()));
        }
        Ok(Model {
            labels,
            vocab,
            max_width,
            featurizer,
        })
    }

    /// Scores of a non-empty token sequence.
    pub fn score(&self, tokens: &[String]) -> Result<ScoreSet> {
        self.featurizer.score_sequence(&self.vocab.encode(tokens), self.max_width)
    }

    /// Text serialization. Floats use the shortest representation that
    /// parses back to the same bits.
    pub fn to_text(&self) -> String {
        let f = &self.featurizer;
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(out, "max_width {}", self.max_width).unwrap();
        writeln!(out, "dim {}", f.dim()).unwrap();
        match self.labels.null_id() {
            Some(n) => writeln!(out, "labels {} null {n}", self.labels.len()).unwrap(),
            None => writeln!(out, "labels {} null -", self.labels.len()).unwrap(),
        }
        for name in self.labels.names() {
            writeln!(out, "{name}").unwrap();
        }
        writeln!(out, "vocab {}", self.vocab.len()).unwrap();
        for t in self.vocab.tokens() {
            writeln!(out, "{t}").unwrap();
        }
        let rows = f.rows();
        let y = f.num_labels();
        let d = f.dim();
        let arrays = [
            ("content", rows, d),
            ("left_context", rows, d),
            ("right_context", rows, d),
            ("w_local", y, d),
            ("w_global", y, d),
            ("transitions", y, y),
        ];
        let mut offset = 0;
        for (name, r, c) in arrays {
            writeln!(out, "array {name} {r} {c}").unwrap();
            for row in f.params()[offset..offset + r * c].chunks(c) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
            offset += r * c;
        }
        out
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        let err = |line: usize, msg: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            msg,
        };
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
        };
        let (n, magic) = next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(err(n, format!("expected `{CHECKPOINT_MAGIC}`")));
        }
        let field = |(n, line): (usize, &str), key: &str| -> Result<Vec<String>> {
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(err(n, format!("expected `{key}`")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let int = |n: usize, s: &str| s.parse::<usize>().map_err(|_| err(n, format!("invalid integer `{s}`")));

        let l = next("max_width")?;
        let max_width = int(l.0, field(l, "max_width")?.first().map_or("", |s| s))?;
        let l = next("dim")?;
        let dim = int(l.0, field(l, "dim")?.first().map_or("", |s| s))?;
        let l = next("labels")?;
        let parts = field(l, "labels")?;
        if parts.len() != 3 || parts[1] != "null" {
            return Err(err(l.0, "expected `labels <count> null <id|->`".into()));
        }
        let num_labels = int(l.0, &parts[0])?;
        let null = if parts[2] == "-" { None } else { Some(int(l.0, &parts[2])?) };
        let mut names = Vec::with_capacity(num_labels);
        for _ in 0..num_labels {
            names.push(next("label name")?.1.to_string());
        }
        let labels = LabelSet::new(names, null)?;
        let l = next("vocab")?;
        let vocab_len = int(l.0, field(l, "vocab")?.first().map_or("", |s| s))?;
        let mut tokens = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            tokens.push(next("vocabulary entry")?.1.to_string());
        }
        let vocab = Vocab::new(tokens)?;

        let rows = vocab_len + 2;
        let expected = [
            ("content", rows, dim),
            ("left_context", rows, dim),
            ("right_context", rows, dim),
            ("w_local", num_labels, dim),
            ("w_global", num_labels, dim),
            ("transitions", num_labels, num_labels),
        ];
        let mut params = Vec::new();
        for (name, r, c) in expected {
            let l = next("array")?;
            let parts = field(l, "array")?;
            if parts.len() != 3 || parts[0] != name || int(l.0, &parts[1])? != r || int(l.0, &parts[2])? != c {
                return Err(err(l.0, format!("expected `array {name} {r} {c}`")));
            }
            for _ in 0..r {
                let (n, row) = next("array row")?;
                let before = params.len();
                for v in row.split(' ') {
                    let x: f64 = v.parse().map_err(|_| err(n, format!("invalid number `{v}`")))?;
                    params.push(x);
                }
                if params.len() - before != c {
                    return Err(err(n, format!("expected {c} values")));
                }
            }
        }
        if let Some((n, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(err(n, "trailing content".into()));
        }
        let featurizer = Featurizer::from_params(vocab_len, dim, num_labels, params)?;
        Model::new(labels, vocab, max_width, featurizer)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_text(&text, path)
    }
}
