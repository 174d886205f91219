//! `multiverse`: the pipeline, experiment harnesses and study service.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, config, input
//! schema), 2 runtime failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "multiverse", version, about = "Cross-lingual evidence features for fake news detection")]
pub struct Cli {
    /// Pipeline config (TOML). `MULTIVERSE_*` variables override its scalars.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; artifacts go to `features/`, `reports/`, `models/`, `manifests/`.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and write it as JSON lines, optionally split.
    Ingest(IngestArgs),
    /// Translate an article title and fetch evidence per language.
    Retrieve(RetrieveArgs),
    /// Similarity and source rank for retrieved evidence.
    Score(ScoreArgs),
    /// Build a feature matrix from stored evidence.
    Featurize(FeaturizeArgs),
    /// Fit a classifier on a feature matrix.
    Train(TrainArgs),
    /// Score a saved model on a feature matrix.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation of one feature combination.
    Cv(CvArgs),
    /// Cross-validate several combinations on the same folds.
    Ablate(AblateArgs),
    /// Grid-search the cosine support threshold against gold pairs.
    TuneTheta(TuneThetaArgs),
    /// Render the evidence report for one article.
    Report(ReportArgs),
    /// Steps 1 to 5 over a whole dataset.
    Run(RunArgs),
    /// Annotation study: create, serve, stats.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Write the offline fixture corpus and a ready config.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Auto,
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub path: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
    /// Skip malformed rows instead of failing on the first one.
    #[arg(long)]
    pub lenient: bool,
    /// Also write a seeded 70/20/10 train/test/dev split.
    #[arg(long)]
    pub split: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Provider {
    Fixture,
    Live,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub article: String,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated language tags.
    #[arg(long, value_delimiter = ',')]
    pub langs: Option<Vec<String>>,
    #[arg(long)]
    pub top: Option<usize>,
    /// Must agree with the configured search binding.
    #[arg(long, value_enum)]
    pub provider: Option<Provider>,
    /// Capture search results as snapshots here.
    #[arg(long)]
    pub snapshot_dir: Option<PathBuf>,
    /// Print the outcome as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Cosine,
    Nli,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Scores every dataset article when omitted.
    #[arg(long)]
    pub article: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerArg>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// `+`-joined block slugs, e.g. `ce-emb-rank+ne-pop`.
    #[arg(long)]
    pub blocks: String,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Fit on a seeded train split and also write the test matrix.
    #[arg(long)]
    pub split: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Boosted,
    Logistic,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV written by `featurize`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Boosted)]
    pub model: ModelArg,
    /// Feature importances to print.
    #[arg(long, default_value_t = 10)]
    pub top_features: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub blocks: String,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Evidence directory; defaults to `<out>/features/evidence`.
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Boosted)]
    pub model: ModelArg,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated combinations, each a `+`-joined list of block slugs.
    #[arg(long, value_delimiter = ',')]
    pub combos: Vec<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Index of the combination the others are tested against.
    #[arg(long, default_value_t = 0)]
    pub baseline: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Boosted)]
    pub model: ModelArg,
}

#[derive(Debug, Args)]
pub struct TuneThetaArgs {
    /// CSV with `sim,gold` columns; gold is `support` or anything else.
    #[arg(long)]
    pub gold: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormatArg {
    Md,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub article: String,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormatArg::Md)]
    pub format: ReportFormatArg,
    /// Rows per language.
    #[arg(long)]
    pub top: Option<usize>,
    /// Attach the verdict of this model.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Build a study definition from retrieved evidence.
    Create(StudyCreateArgs),
    /// Serve the study API until interrupted.
    Serve(StudyServeArgs),
    /// Agreement, accuracy and answer distributions.
    Stats(StudyStatsArgs),
}

#[derive(Debug, Args)]
pub struct StudyCreateArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub annotators: Vec<String>,
    #[arg(long)]
    pub per_annotator: usize,
    #[arg(long)]
    pub per_article: usize,
    /// Evidence per language shown to annotators.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyServeArgs {
    /// Study definition files.
    #[arg(long = "study", required = true)]
    pub studies: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Where `<id>.records.jsonl` logs live; defaults to each definition's directory.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsFormat {
    Json,
    Md,
}

#[derive(Debug, Args)]
pub struct StudyStatsArgs {
    #[arg(long)]
    pub study: PathBuf,
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StatsFormat::Md)]
    pub format: StatsFormat,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    pub dir: PathBuf,
    /// Also write a synthetic corpus of this many articles with evidence under `<dir>/h1`.
    #[arg(long)]
    pub h1: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 1,
                CliError::Runtime(_) => 2,
            })
        }
    }
}
