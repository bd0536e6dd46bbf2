//! Command-line harness around the core library: generate corpora, train
//! and evaluate translation models in both training regimes, lift raw
//! sentences, run the domain-transfer experiment, and execute the property
//! suite that doubles as the acceptance gate.
//!
//! Exit codes are part of the interface: 0 success, 1 usage or
//! configuration error, 2 malformed input data (corpus, checkpoint, tagger
//! file), 3 violated internal invariant.

pub mod commands;
pub mod metrics;
pub mod properties;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tlforce_core::datagen::GenError;
use tlforce_core::lifting::LiftError;
use tlforce_core::ltl::ParseError;
use tlforce_core::model::ModelError;

/// What went wrong, bucketed by who has to fix it.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration values; the caller's command line.
    Usage(String),
    /// Input files that do not honor the data contract.
    Data(String),
    /// The library broke one of its own guarantees; a bug.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> CliError {
        match e {
            GenError::TooManyProps { .. } | GenError::UnknownDomain(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        match e {
            ModelError::InvariantViolated(_) => CliError::Internal(e.to_string()),
            ModelError::LengthExceeded | ModelError::EmptySource => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LiftError> for CliError {
    fn from(e: LiftError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tlforce",
    about = "Grammar-constrained translation of natural language into temporal logic",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic JSONL corpus of labeled commands.
    Datagen(DatagenArgs),
    /// Train a translation model on a corpus and save a checkpoint.
    Train(TrainArgs),
    /// Translate one lifted (or raw, with a tagger) sentence.
    Translate(TranslateArgs),
    /// Train a span tagger, or apply one to a sentence.
    Lift(LiftArgs),
    /// Evaluate a checkpoint on a corpus and print metrics as JSON.
    Eval(EvalArgs),
    /// Run the held-one-domain-out transfer grid and write a report.
    ExperimentOod(OodArgs),
    /// Run the library's property suite; one PASS/FAIL line per property.
    PropertySuite(PropertyArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// Output JSONL path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    #[arg(long, default_value_t = 3)]
    pub max_depth: u32,
    #[arg(long, default_value_t = 5)]
    pub max_aps: u32,
    /// "blocks", "grid", "robot", or "all".
    #[arg(long, default_value = "all")]
    pub domain: String,
    /// Emit concatenated multi-proposition commands instead of singles,
    /// with this many distinct propositions at least.
    #[arg(long)]
    pub concat_min_aps: Option<u32>,
    /// Upper bound for --concat-min-aps mode.
    #[arg(long, default_value_t = 15)]
    pub concat_max_aps: u32,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input corpus (JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output checkpoint path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// "standard" or "grammar-forced".
    #[arg(long, default_value = "grammar-forced")]
    pub mode: String,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub d_emb: usize,
    #[arg(long, default_value_t = 64)]
    pub d_hidden: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long, default_value_t = 5)]
    pub max_props: u32,
    /// Cap on each batch gradient's L2 norm; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Optional per-step loss curve, written as CSV with header step,loss.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Model checkpoint path.
    #[arg(long)]
    pub model: PathBuf,
    /// Sentence to translate. Lifted form unless --tagger is given.
    #[arg(long)]
    pub sentence: String,
    /// With a tagger, the sentence is raw text: it is tagged, lifted,
    /// translated, and grounded back into domain propositions.
    #[arg(long)]
    pub tagger: Option<PathBuf>,
    /// Decode without the grammar constraint.
    #[arg(long)]
    pub unconstrained: bool,
    /// "unicode" or "ascii" operator spelling for the output.
    #[arg(long, default_value = "unicode")]
    pub notation: String,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    /// Train a tagger on this corpus (JSONL) instead of applying one.
    #[arg(long)]
    pub train_from: Option<PathBuf>,
    /// Where to save the trained tagger.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
    /// Apply this tagger to --sentence and print the lifting as JSON.
    #[arg(long)]
    pub tagger: Option<PathBuf>,
    #[arg(long)]
    pub sentence: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub unconstrained: bool,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct OodArgs {
    /// Report output path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 100)]
    pub count_per_domain: usize,
    #[arg(long, default_value_t = 48)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.25)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub d_emb: usize,
    #[arg(long, default_value_t = 32)]
    pub d_hidden: usize,
    /// Maximum formula nesting depth in the generated corpora.
    #[arg(long, default_value_t = 3)]
    pub max_depth: u32,
    /// Cap on each batch gradient's L2 norm; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
}

#[derive(Debug, Args)]
pub struct PropertyArgs {
    /// Run only the named property (by number or name substring).
    #[arg(long)]
    pub only: Option<String>,
}

/// Parse arguments and run; the binary maps the result to an exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Datagen(args) => commands::cmd_datagen(&args),
        Command::Train(args) => commands::cmd_train(&args),
        Command::Translate(args) => commands::cmd_translate(&args),
        Command::Lift(args) => commands::cmd_lift(&args),
        Command::Eval(args) => commands::cmd_eval(&args),
        Command::ExperimentOod(args) => commands::cmd_experiment_ood(&args),
        Command::PropertySuite(args) => commands::cmd_property_suite(&args),
    }
}
