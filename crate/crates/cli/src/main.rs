//! `recheck`: train, rank, evaluate and serve second-annotation queues.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when input data is
//! missing or invalid.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use recheck_core::corpus::{Split, SplitRatios};
use recheck_core::experiment::Threshold;

#[derive(Parser)]
#[command(name = "recheck", version, about = "Find the single-annotated NER sentences most worth a second look")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair adjudicated and pre-adjudicated CoNLL files and assign splits.
    Split(SplitArgs),
    /// Train a CRF tagger on one annotation version of a corpus.
    Train(TrainArgs),
    /// Tag sentences, writing predictions with confidences as JSON lines.
    Tag(TagArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Rank a pool of sentences for second annotation.
    Rank(RankArgs),
    /// Score a ranking against the sentences whose two versions disagree.
    RankEval(RankEvalArgs),
    /// Run a gap, ranking or retraining experiment from a TOML config.
    Simulate(SimulateArgs),
    /// Write a synthetic parallel corpus with known corruptions.
    Synth(SynthArgs),
    /// Serve the triage queue over HTTP.
    Serve(ServeArgs),
}

/// Comma-separated split names.
#[derive(Clone, Debug)]
struct Splits(Vec<Split>);

impl FromStr for Splits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = Split::parse_list(s).map_err(|e| e.to_string())?;
        if v.is_empty() {
            return Err("no split given".into());
        }
        Ok(Splits(v))
    }
}

/// Comma-separated thresholds.
#[derive(Clone, Debug)]
struct Thresholds(Vec<Threshold>);

impl FromStr for Thresholds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Threshold::parse_list(s).map(Thresholds)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Version {
    Pre,
    Adj,
}

#[derive(Args)]
struct SplitArgs {
    /// Adjudicated CoNLL file (`-` for stdin).
    #[arg(long)]
    input: PathBuf,
    /// Pre-adjudicated CoNLL file with the same sentences in the same order.
    #[arg(long)]
    pre: Option<PathBuf>,
    /// Train, dev, test1 and test2 proportions.
    #[arg(long, default_value = "0.4,0.4,0.1,0.1")]
    ratios: SplitRatios,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus prefix or directory.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "adj")]
    annotation: Version,
    #[arg(long, default_value = "train")]
    split: Splits,
    /// TOML file of training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    /// CoNLL file to tag (`-` for stdin); labels are ignored.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    input: Option<PathBuf>,
    /// Corpus prefix; tags the sentences of `--split`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "test2")]
    split: Splits,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Gold CoNLL file, or a corpus prefix whose adjudicated `--split` is used.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value = "test2")]
    split: Splits,
    /// Predictions as CoNLL or JSON lines, detected from the content.
    #[arg(long)]
    pred: PathBuf,
    /// Score only this entity type.
    #[arg(long = "type")]
    entity_type: Option<String>,
    /// Also write the score as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Random,
    Confidence,
    Similarity,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Alignment,
    Embedding,
}

#[derive(Clone, Copy, ValueEnum)]
enum Agg {
    Max,
    Mean,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "train,dev")]
    pool: Splits,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence: prediction file covering the pool.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Confidence: model to decode the pool with. Similarity: model whose
    /// errors on `--error-split` are the query sentences.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Rank by per-token log confidence.
    #[arg(long)]
    length_normalize: bool,
    /// Similarity: file of error sentence ids, one per line.
    #[arg(long, conflicts_with = "model")]
    errors: Option<PathBuf>,
    #[arg(long, default_value = "test1")]
    error_split: Split,
    /// Entity type considered when collecting errors.
    #[arg(long = "type")]
    entity_type: Option<String>,
    #[arg(long, value_enum, default_value = "alignment")]
    similarity: SimKind,
    #[arg(long, value_enum, default_value = "max")]
    aggregation: Agg,
    /// `word1<TAB>word2<TAB>score` lexical resource.
    #[arg(long)]
    resource: Option<PathBuf>,
    /// Word vectors in text format.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Stopword list replacing the bundled English one.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = recheck_core::similarity::DEFAULT_VECTOR_THRESHOLD)]
    vector_threshold: f64,
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct RankEvalArgs {
    #[arg(long)]
    ranking: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Counts or pool percentages such as `20%`.
    #[arg(long, default_value = "100,200,500")]
    thresholds: Thresholds,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Gap,
    Ranking,
    Retraining,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.15)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also add spurious mentions to some corrupted sentences.
    #[arg(long)]
    spurious: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    ranking: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Adjudication log; replayed on start. Defaults to
    /// `adjudications.jsonl` next to the ranking.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Predictions shown alongside the queue.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// TOML training settings for retraining.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long = "type")]
    entity_type: Option<String>,
}

/// An error the user fixes by changing flags rather than data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Tag(a) => commands::tag(a),
        Command::Eval(a) => commands::eval(a),
        Command::Rank(a) => commands::rank(a),
        Command::RankEval(a) => commands::rank_eval(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Synth(a) => commands::synth(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// Joins the cause chain, dropping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !out.contains(&c) {
            out.push_str(": ");
            out.push_str(&c);
        }
    }
    out
}
