use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{total_loss, Featurizer, Model, Objective, Vocab};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::types::{EntitySet, LabelSet};

/// Hyper-parameters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub max_width: usize,
    pub beta: f64,
    pub learning_rate_encoder: f64,
    pub learning_rate_head: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub objective: Objective,
    /// Worker threads for per-sentence losses within a batch.
    pub parallel: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            max_width: 8,
            beta: 0.25,
            learning_rate_encoder: 0.02,
            learning_rate_head: 0.02,
            batch_size: 16,
            epochs: 8,
            seed: 0,
            init_scale: 0.1,
            objective: Objective::Joint,
            parallel: 1,
        }
    }
}

impl TrainConfig {
    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "dim" => self.dim = num(key, value)?,
            "max_width" => self.max_width = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "learning_rate_encoder" => self.learning_rate_encoder = num(key, value)?,
            "learning_rate_head" => self.learning_rate_head = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "init_scale" => self.init_scale = num(key, value)?,
            "objective" => self.objective = value.parse()?,
            "parallel" => self.parallel = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("max_width", self.max_width),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("parallel", self.parallel),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be at least 1")));
            }
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config("`beta` must lie in (0, 1]".into()));
        }
        for (name, v) in [
            ("learning_rate_encoder", self.learning_rate_encoder),
            ("learning_rate_head", self.learning_rate_head),
            ("init_scale", self.init_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("`{name}` must be finite and positive")));
            }
        }
        Ok(())
    }
}

/// A sentence as token ids with its gold entities.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub tokens: Vec<usize>,
    pub gold: EntitySet,
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean per-sentence loss over the batch.
    pub loss: f64,
    /// Mean node count of the unconstrained filtered graphs in the batch.
    pub graph_nodes: f64,
    /// Mean edge count (terminal edges included) of the same graphs.
    pub graph_edges: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub featurizer: Featurizer,
    pub log: Vec<StepRecord>,
}

impl TrainOutcome {
    /// The training log as CSV.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("step,loss,graph_nodes,graph_edges,epoch\n");
        for r in &self.log {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.loss, r.graph_nodes, r.graph_edges, r.epoch
            ));
        }
        out
    }
}

/// Adam with separate learning rates for a leading and a trailing block of
/// parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Parameters before `split` use `lr_a`, the rest `lr_b`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], split: usize, lr_a: f64, lr_b: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let lr = if k < split { lr_a } else { lr_b };
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

/// Trains a featurizer with mini-batch Adam. Batches are drawn from a seeded
/// shuffle each epoch; per-sentence gradients are reduced in batch order, so
/// results do not depend on `parallel`.
pub fn train(
    examples: &[TrainExample],
    vocab_size: usize,
    labels: &LabelSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let null = labels.require_null()?;
    let usable: Vec<&TrainExample> = examples.iter().filter(|e| !e.tokens.is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut featurizer = Featurizer::random(vocab_size, config.dim, labels.len(), config.init_scale, &mut rng)?;
    let mut adam = Adam::new(featurizer.params().len());
    let split = featurizer.encoder_len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let run = |&k: &usize| {
                let ex = usable[k];
                total_loss(
                    &ex.tokens,
                    &ex.gold,
                    &featurizer,
                    labels,
                    config.max_width,
                    config.beta,
                    config.objective,
                )
            };
            let results: Vec<_> = if config.parallel > 1 {
                pool.install(|| batch.par_iter().map(run).collect::<Result<Vec<_>>>())?
            } else {
                batch.iter().map(run).collect::<Result<Vec<_>>>()?
            };
            let n = results.len() as f64;
            let mut grad = vec![0.0; featurizer.params().len()];
            let (mut loss, mut nodes, mut edges) = (0.0, 0.0, 0.0);
            for (report, g) in &results {
                loss += report.loss;
                nodes += report.graph_nodes as f64;
                edges += report.graph_edges as f64;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            for g in &mut grad {
                *g /= n;
            }
            adam.step(
                featurizer.params_mut(),
                &grad,
                split,
                config.learning_rate_encoder,
                config.learning_rate_head,
            );
            log.push(StepRecord {
                step,
                epoch,
                loss: loss / n,
                graph_nodes: nodes / n,
                graph_edges: edges / n,
            });
            step += 1;
        }
    }

    if config.objective == Objective::LocalOnly {
        // decode with local log-odds against null; no learned transitions
        let null_row = featurizer.w_local(null).to_vec();
        for y in 0..labels.len() {
            let row: Vec<f64> = featurizer.w_local(y).iter().zip(&null_row).map(|(a, b)| a - b).collect();
            featurizer.set_row(true, y, &row);
        }
        featurizer.clear_transitions();
    }
    Ok(TrainOutcome { featurizer, log })
}

/// Builds the vocabulary from `corpus`, trains, and packages the result.
pub fn train_model(corpus: &Corpus, config: &TrainConfig) -> Result<(Model, TrainOutcome)> {
    let vocab = Vocab::from_sentences(corpus.sentences.iter().map(|s| s.tokens.as_slice()));
    let examples: Vec<TrainExample> = corpus
        .sentences
        .iter()
        .map(|s| TrainExample {
            tokens: vocab.encode(&s.tokens),
            gold: s.entities.clone(),
        })
        .collect();
    let outcome = train(&examples, vocab.len(), &corpus.labels, config)?;
    let model = Model::new(corpus.labels.clone(), vocab, config.max_width, outcome.featurizer.clone())?;
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Segment;

    fn toy() -> (Vec<TrainExample>, LabelSet) {
        // token 1 is always an entity of type A, token 2 of type B
        let labels = LabelSet::with_null("O", ["A", "B"]).unwrap();
        let mut examples = Vec::new();
        for k in 0..24 {
            let a = 1 + k % 3;
            let tokens = vec![0, 1, 0, 2, 2, 0][..3 + a].to_vec();
            let mut ents = vec![Segment::new(2, 2, 1)];
            if a >= 2 {
                ents.push(Segment::new(4, 3 + a.min(2), 2));
            }
            examples.push(TrainExample {
                tokens,
                gold: EntitySet::new(ents).unwrap(),
            });
        }
        (examples, labels)
    }

    #[test]
    fn config_parsing() {
        let cfg = TrainConfig::from_kv("# comment\nbeta = 0.5\n\nepochs=3\nobjective = local\n").unwrap();
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.objective, Objective::LocalOnly);
        assert_eq!(cfg.dim, TrainConfig::default().dim);
        assert!(TrainConfig::from_kv("nope = 1").is_err());
        assert!(TrainConfig::from_kv("beta").is_err());
        assert!(TrainConfig::from_kv("beta = -1").is_err());
        assert!(TrainConfig::from_kv("beta = 0").is_err());
        assert!(TrainConfig::from_kv("beta = 1.5").is_err());
        assert_eq!(TrainConfig::from_kv("beta = 1").unwrap().beta, 1.0);
        assert!(TrainConfig::from_kv("batch_size = 0").is_err());
        assert!(TrainConfig::from_kv("epochs = x").is_err());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, 1.0, 1.0];
        adam.step(&mut p, &[2.0, -0.5, 0.0], 2, 0.1, 0.01);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn loss_decreases_on_toy_data() {
        let (examples, labels) = toy();
        let cfg = TrainConfig {
            dim: 8,
            max_width: 3,
            epochs: 15,
            batch_size: 4,
            learning_rate_encoder: 0.05,
            learning_rate_head: 0.05,
            ..TrainConfig::default()
        };
        let out = train(&examples, 3, &labels, &cfg).unwrap();
        let first = out.log[0].loss;
        let last = out.log.last().unwrap().loss;
        assert!(last < 0.1 * first, "{first} -> {last}");
        assert!(out.log_csv().starts_with("step,loss,graph_nodes,graph_edges"));
    }

    #[test]
    fn parallel_training_is_bit_identical() {
        let (examples, labels) = toy();
        let base = TrainConfig {
            dim: 4,
            max_width: 3,
            epochs: 2,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let a = train(&examples, 3, &labels, &base).unwrap();
        let b = train(&examples, 3, &labels, &TrainConfig { parallel: 4, ..base.clone() }).unwrap();
        assert_eq!(a.featurizer, b.featurizer);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let labels = LabelSet::with_null("O", ["A"]).unwrap();
        let empty = [TrainExample {
            tokens: vec![],
            gold: EntitySet::empty(),
        }];
        assert!(matches!(
            train(&empty, 1, &labels, &TrainConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }
}
