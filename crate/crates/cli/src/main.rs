//! Command-line entry point: ingestion, training, explanation, auditing, and
//! report rendering as reproducible, config-driven runs.
//!
//! Exit codes: 0 success, 2 input/environment error, 64 usage error.

mod commands;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "contexthate", version, about = "Train, explain, and audit hate-speech classifiers")]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Load raw corpora, build splits, or generate synthetic/adversarial sets.
    Ingest(IngestArgs),
    /// Train a classifier from a config file and write a checkpoint.
    Train(TrainArgs),
    /// Explain documents with occlusion or SOC and optionally render a report.
    Explain(ExplainArgs),
    /// Produce metrics, rank-shift, tradeoff, or cross-domain reports.
    Audit(AuditArgs),
    /// Aggregate per-run metric records into mean ± std summaries.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Input format: ghc, sentence, or corpus (the tool's own record format).
    #[arg(long, conflicts_with_all = ["synthetic", "adversarial"])]
    format: Option<String>,
    /// Input file for --format.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate the seeded synthetic experiment corpora ("biased").
    #[arg(long)]
    synthetic: Option<String>,
    /// Build an adversarial set from a corpus-format document stream.
    #[arg(long)]
    adversarial: bool,
    /// Source corpus for --adversarial.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Lexicon name (ghc25, stormfront10) or file path.
    #[arg(long)]
    lexicon: Option<String>,
    /// Per-term document quota for --adversarial.
    #[arg(long, default_value_t = 500)]
    quota: usize,
    /// Hold out this fraction into a train/test split.
    #[arg(long)]
    split: Option<f64>,
    /// Stratify the split by this tag name.
    #[arg(long)]
    stratify: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value training configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    train: PathBuf,
    /// Validation corpus (required for the transformer schedule).
    #[arg(long)]
    val: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Lexicon for regularization or word removal.
    #[arg(long)]
    lexicon: Option<String>,
    /// Context language model spec for SOC regularization.
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Second checkpoint for a before/after comparison report.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Plain text file, one document per line.
    #[arg(long, conflicts_with = "corpus")]
    input: Option<PathBuf>,
    /// Corpus-format file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "soc")]
    method: String,
    /// Context language model spec (required for soc).
    #[arg(long)]
    lm: Option<PathBuf>,
    /// Context window N.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Sample count K.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a self-contained HTML report.
    #[arg(long)]
    render: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
#[command(group(
    clap::ArgGroup::new("mode")
        .required(true)
        .multiple(false)
        .args(["table2", "rank_shift", "tradeoff", "cross_domain"])
))]
struct AuditArgs {
    /// Metrics table: precision/recall/F1 and adversarial accuracy.
    #[arg(long)]
    table2: bool,
    /// Word-importance rank shifts between two checkpoints.
    #[arg(long)]
    rank_shift: bool,
    /// Identifier-removal tradeoff curve (retrains the bag-of-words model).
    #[arg(long)]
    tradeoff: bool,
    /// Evaluate a checkpoint on a foreign-domain test set.
    #[arg(long)]
    cross_domain: bool,

    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    before: Option<PathBuf>,
    #[arg(long)]
    after: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    adversarial: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<String>,
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long, default_value = "soc")]
    method: String,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    min_occurrences: usize,
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, default_value_t = 25)]
    max_size: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Model retrained per tradeoff point: bow (default) or transformer.
    #[arg(long, default_value = "bow")]
    model: String,
    /// Training config for the retrained tradeoff model.
    #[arg(long)]
    bow_config: Option<PathBuf>,
    /// Validation corpus for --tradeoff with the transformer model.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Row label in rendered tables.
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Directory of per-run metrics TSV files.
    #[arg(long)]
    runs_dir: PathBuf,
    /// Row label for the summary table.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }

    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Train(args) => commands::train(args),
        Command::Explain(args) => commands::explain(args),
        Command::Audit(args) => commands::audit(args),
        Command::Summarize(args) => commands::summarize(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
