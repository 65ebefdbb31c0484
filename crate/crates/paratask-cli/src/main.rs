//! Command-line front end for the paratask library.
//!
//! Exit codes: 0 on success (including --help and --version), 1 for usage
//! errors, 2 for data or runtime errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use paratask::embed::{BuiltinConfig, ProviderConfig, RemoteConfig};

/// Fallback for `--embedder remote` when no URL is given inline.
const EMBEDDER_URL_ENV: &str = "PARATASK_EMBEDDER_URL";

/// Parsed form of the --embedder flag: `builtin`, `precomputed:PATH`,
/// `remote:URL`, or bare `remote` (URL taken from PARATASK_EMBEDDER_URL).
#[derive(Debug, Clone)]
pub struct EmbedderSpec(pub ProviderConfig);

impl FromStr for EmbedderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<EmbedderSpec, String> {
        if s == "builtin" {
            return Ok(EmbedderSpec(ProviderConfig::Builtin(
                BuiltinConfig::default(),
            )));
        }
        if let Some(path) = s.strip_prefix("precomputed:") {
            if path.is_empty() {
                return Err("precomputed embedder needs a file path".into());
            }
            return Ok(EmbedderSpec(ProviderConfig::Precomputed {
                path: PathBuf::from(path),
            }));
        }
        if let Some(url) = s.strip_prefix("remote:") {
            if url.is_empty() {
                return Err("remote embedder needs a URL".into());
            }
            return Ok(EmbedderSpec(ProviderConfig::Remote(RemoteConfig::new(
                url,
            ))));
        }
        if s == "remote" {
            return match std::env::var(EMBEDDER_URL_ENV) {
                Ok(url) if !url.is_empty() => {
                    Ok(EmbedderSpec(ProviderConfig::Remote(RemoteConfig::new(url))))
                }
                _ => Err(format!(
                    "--embedder remote needs remote:URL or {EMBEDDER_URL_ENV} set"
                )),
            };
        }
        Err(format!(
            "unknown embedder {s:?}; expected builtin, precomputed:PATH, remote:URL, or remote"
        ))
    }
}

/// Rendering target for the report command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

/// Taxonomy listing filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassFilter {
    Equivalent,
    Similar,
}

#[derive(Debug, Parser)]
#[command(
    name = "paratask",
    version,
    about = "Profile paraphrase corpora by the task that produced each pair"
)]
struct Cli {
    /// Worker threads for parallel stages (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read raw corpora via descriptors into one canonical pair file.
    Ingest(IngestArgs),
    /// Draw a task-balanced, dataset-balanced training sample.
    Sample(SampleArgs),
    /// Build a feature schema and vectorize a pair file.
    Featurize(FeaturizeArgs),
    /// Train a random forest on a feature file.
    Train(TrainArgs),
    /// Score a labeled feature file by holdout or cross-validation.
    Evaluate(EvaluateArgs),
    /// Predict tasks for unlabeled pairs and report the distribution.
    Profile(ProfileArgs),
    /// Render a JSON artifact as text or CSV.
    Report(ReportArgs),
    /// Produce a blinded annotation sheet and its hidden key.
    AnnotateSample(AnnotateSampleArgs),
    /// Score a filled annotation sheet against its key.
    AnnotateScore(AnnotateScoreArgs),
    /// List or look up registered paraphrasing tasks.
    Taxonomy(TaxonomyArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus descriptor TOML; repeat for several corpora.
    #[arg(long = "descriptor", required = true)]
    pub descriptors: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Canonical pair file; repeat to pool several.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Pairs to draw per task, split evenly over its datasets.
    #[arg(long, default_value_t = 10_000)]
    pub per_task: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Canonical pair file.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep a POS n-gram only if at least this many pairs contain it.
    #[arg(long, default_value_t = 5)]
    pub min_count: u32,
    /// builtin, precomputed:PATH, remote:URL, or remote.
    #[arg(long, default_value = "builtin")]
    pub embedder: EmbedderSpec,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature file from featurize.
    #[arg(long)]
    pub input: PathBuf,
    /// Schema to cross-check against the feature file's schema hash.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trees: u32,
    #[arg(long, default_value_t = 15)]
    pub max_depth: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Feature file from featurize.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trees: u32,
    #[arg(long, default_value_t = 15)]
    pub max_depth: u32,
    /// Stratified k-fold cross-validation instead of an 80:20 holdout.
    #[arg(long, value_name = "K")]
    pub cv: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Record in the manifest whether micro-F1 left the 0.70..0.90 band
    /// expected of a full-protocol run.
    #[arg(long)]
    pub replication_band: bool,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Canonical pair file to profile.
    #[arg(long)]
    pub input: PathBuf,
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Schema the model was trained under.
    #[arg(long)]
    pub schema: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// builtin, precomputed:PATH, remote:URL, or remote.
    #[arg(long, default_value = "builtin")]
    pub embedder: EmbedderSpec,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON artifact from evaluate, profile, or annotate-score.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Write to a directory instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AnnotateSampleArgs {
    /// Canonical pair file; repeat to pool several.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Rows to draw per task, split evenly over its datasets.
    #[arg(long, default_value_t = 100)]
    pub per_task: usize,
    /// Shortest text length eligible for the sheet, in characters.
    #[arg(long, default_value_t = 100)]
    pub min_chars: usize,
    /// Longest text length eligible for the sheet, in characters.
    #[arg(long, default_value_t = 180)]
    pub max_chars: usize,
    /// Equal-width mean-length bins balanced within each task.
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AnnotateScoreArgs {
    /// Filled annotation sheet CSV.
    #[arg(long)]
    pub sheet: PathBuf,
    /// Hidden key CSV produced next to the sheet.
    #[arg(long)]
    pub key: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TaxonomyArgs {
    /// Only list tasks of this equivalence class.
    #[arg(long, value_enum)]
    pub class: Option<ClassFilter>,
    /// Show one entry in full instead of the listing.
    #[arg(long)]
    pub name: Option<String>,
}

fn dispatch(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest(args) => commands::cmd_ingest(args),
        Command::Sample(args) => commands::cmd_sample(args),
        Command::Featurize(args) => commands::cmd_featurize(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Profile(args) => commands::cmd_profile(args),
        Command::Report(args) => commands::cmd_report(args),
        Command::AnnotateSample(args) => commands::cmd_annotate_sample(args),
        Command::AnnotateScore(args) => commands::cmd_annotate_score(args),
        Command::Taxonomy(args) => commands::cmd_taxonomy(args),
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed; real
            // usage errors go to stderr with exit code 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .unwrap_or_else(|e| {
            eprintln!("error: cannot build thread pool: {e}");
            std::process::exit(2);
        });
    if let Err(e) = pool.install(|| dispatch(&cli.command)) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}
