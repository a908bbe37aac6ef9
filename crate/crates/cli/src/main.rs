use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use segchain::bench::{run_bench, to_csv};
use segchain::data::{
    bio_decode, parse_conll, read_conll, read_predictions, read_tokens, span_f1, synth_corpus, write_conll,
    write_predictions, PredictionRecord, SynthConfig,
};
use segchain::decode::Backend;
use segchain::features::{train_model, Model, TrainConfig};
use segchain::LabelSet;

const SEED_VAR: &str = "SEGCHAIN_SEED";

#[derive(Parser)]
#[command(name = "segchain", version, about = "Sequence segmentation with filtered semi-Markov CRFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a two-column corpus.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-step metrics CSV [default: <out>.metrics.csv]
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Worker threads for per-sentence gradients
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Decode a token file to JSON-lines predictions.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "fsemicrf")]
        backend: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact-match span precision, recall and F1.
    Eval {
        /// Two-column gold corpus
        #[arg(long)]
        gold: PathBuf,
        /// JSON-lines predictions or a two-column corpus
        #[arg(long)]
        pred: PathBuf,
    },
    /// Time scoring and decoding per backend and write CSV.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "crf,semicrf,semicrf-unitnull,fsemicrf")]
        backends: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        /// Token file to benchmark on; a synthetic shard is used otherwise
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Write a synthetic two-column corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    sentences: usize,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    #[arg(long, default_value_t = 4)]
    types: usize,
    #[arg(long, default_value_t = 0.15)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SynthArgs {
    fn config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            sentences: self.sentences,
            min_len: self.min_len,
            max_len: self.max_len,
            num_types: self.types,
            density: self.density,
            seed: seed_override()?.unwrap_or(self.seed),
            ..SynthConfig::default()
        })
    }
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(v) => Ok(Some(
            v.trim()
                .parse()
                .map_err(|_| segchain::Error::Config(format!("{SEED_VAR} must be an unsigned integer, got `{v}`")))?,
        )),
        Err(_) => Ok(None),
    }
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path).map_err(|e| segchain::Error::io(path, e))?)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    Ok(std::fs::write(path, contents).map_err(|e| segchain::Error::io(path, e))?)
}

fn train(config: &Path, corpus: &Path, out: &Path, metrics: Option<PathBuf>, parallel: Option<usize>) -> Result<()> {
    let mut cfg = TrainConfig::from_kv(&read(config)?)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    if let Some(p) = parallel {
        cfg.parallel = p;
        cfg.validate()?;
    }
    let corpus = read_conll(corpus)?;
    let (model, outcome) = train_model(&corpus, &cfg)?;
    model.save(out)?;
    let metrics = metrics.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".metrics.csv");
        PathBuf::from(p)
    });
    write(&metrics, &outcome.log_csv())?;
    let last = outcome.log.last().expect("at least one step");
    eprintln!(
        "trained {} steps on {} sentences; final loss {:.4}; model {}; metrics {}",
        outcome.log.len(),
        corpus.sentences.len(),
        last.loss,
        out.display(),
        metrics.display()
    );
    Ok(())
}

fn decode(model: &Path, backend: &str, input: &Path, out: &Path) -> Result<()> {
    let backend: Backend = backend.parse()?;
    let model = Model::load(model)?;
    let mut records = Vec::new();
    for tokens in read_tokens(input)? {
        let entities = model.decode(&tokens, backend)?;
        records.push(PredictionRecord::new(tokens, &entities, &model.labels));
    }
    write(out, &write_predictions(&records))?;
    Ok(())
}

fn read_pred(path: &Path) -> Result<Vec<PredictionRecord>> {
    if read(path)?.trim_start().starts_with('{') {
        return Ok(read_predictions(path)?);
    }
    let corpus = read_conll(path)?;
    Ok(corpus
        .sentences
        .into_iter()
        .map(|s| PredictionRecord::new(s.tokens, &s.entities, &corpus.labels))
        .collect())
}

fn eval(gold: &Path, pred: &Path) -> Result<()> {
    let gold_tagged = parse_conll(&read(gold)?, gold)?;
    let pred = read_pred(pred)?;
    if gold_tagged.len() != pred.len() {
        bail!("misaligned files: {} gold sentences, {} predicted", gold_tagged.len(), pred.len());
    }
    let mut types: BTreeSet<String> = gold_tagged
        .iter()
        .flat_map(|s| &s.tags)
        .filter_map(|t| t.split_once('-').map(|(_, n)| n.to_string()))
        .collect();
    types.extend(pred.iter().flat_map(|p| p.entities.iter().map(|e| e.2.clone())));
    let labels = LabelSet::with_null("O", types)?;
    let mut gold_sets = Vec::new();
    let mut pred_sets = Vec::new();
    for (k, (g, p)) in gold_tagged.iter().zip(&pred).enumerate() {
        if g.tokens.len() != p.tokens.len() {
            bail!(
                "misaligned files: sentence {} has {} gold tokens but {} predicted",
                k + 1,
                g.tokens.len(),
                p.tokens.len()
            );
        }
        gold_sets.push(bio_decode(&g.tags, &labels)?);
        pred_sets.push(p.to_entities(&labels)?);
    }
    let prf = span_f1(&gold_sets, &pred_sets)?;
    println!("precision {:.4}", prf.precision);
    println!("recall    {:.4}", prf.recall);
    println!("f1        {:.4}", prf.f1);
    println!("{}", serde_json::to_string(&prf)?);
    Ok(())
}

fn bench(
    model: &Path,
    backends: &str,
    reps: usize,
    out: &Path,
    corpus: Option<PathBuf>,
    synth: &SynthArgs,
    parallel: usize,
) -> Result<()> {
    let backends: Vec<Backend> = backends
        .split(',')
        .map(|b| b.trim().parse())
        .collect::<segchain::Result<_>>()?;
    if backends.is_empty() {
        bail!("at least one backend is required");
    }
    if parallel == 0 {
        return Err(segchain::Error::Config("--parallel must be at least 1".into()).into());
    }
    let model = Model::load(model)?;
    let sentences = match corpus {
        Some(path) => read_tokens(&path)?,
        None => synth_corpus(&synth.config()?)?
            .sentences
            .into_iter()
            .map(|s| s.tokens)
            .collect(),
    };
    let rows = run_bench(&model, &sentences, &backends, reps, parallel)?;
    write(out, &to_csv(&rows, &backends))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            corpus,
            out,
            metrics,
            parallel,
        } => train(&config, &corpus, &out, metrics, parallel),
        Command::Decode {
            model,
            backend,
            input,
            out,
        } => decode(&model, &backend, &input, &out),
        Command::Eval { gold, pred } => eval(&gold, &pred),
        Command::Bench {
            model,
            backends,
            reps,
            out,
            corpus,
            synth,
            parallel,
        } => bench(&model, &backends, reps, &out, corpus, &synth, parallel),
        Command::Synth { out, synth } => {
            let corpus = synth_corpus(&synth.config()?)?;
            write(&out, &write_conll(&corpus))
        }
    }
}

/// Usage, configuration and I/O problems exit with 2; anything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    use segchain::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Io { .. } | E::Parse { .. } | E::Config(_) | E::UnknownBackend(_) | E::EmptyCorpus) => 2,
        _ if err.chain().any(|c| c.is::<std::io::Error>()) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
