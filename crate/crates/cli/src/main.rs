mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{error, info};

/// Exam-based evaluation of retrieval and generation systems.
#[derive(Debug, Parser)]
#[command(name = "exam-eval", version)]
pub struct Cli {
    /// Key-value file with defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More logging (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an exam question bank from queries.
    Generate(GenerateArgs),
    /// Grade pooled passages against the question bank.
    Grade(GradeArgs),
    /// EXAM Cover of one run, per query and mean.
    Cover(CoverArgs),
    /// Write relevance labels derived from grades as a qrels file.
    Qrels(QrelsArgs),
    /// Score several runs and correlate with official ranks.
    Leaderboard(LeaderboardArgs),
    /// Rank correlation between two leaderboard files.
    Correlate(CorrelateArgs),
    /// Confusion tables and Cohen's kappa against manual judgments.
    Agreement(AgreementArgs),
    /// Compare two question banks and list label flips.
    Diff(DiffArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// OpenAI-compatible completions endpoint.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_input_tokens: Option<usize>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long)]
    pub requests_per_second: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    /// Use the mock backend with this fixture file, or `lexical` for the built-in heuristics.
    #[arg(long, value_name = "FIXTURE")]
    pub mock: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TemplateArg {
    Dl,
    Car,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON array of queries.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum)]
    pub template: TemplateArg,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Qa,
    Rate,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Directory of run files; every regular file is read.
    #[arg(long)]
    pub runs: PathBuf,
    /// Official judgments; judged passages join the pool.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Passage texts as JSON lines.
    #[arg(long)]
    pub passages: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Grade store (gzip JSON lines); appended to, never rewritten.
    #[arg(long)]
    pub store: PathBuf,
    /// Pool depth per run.
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct CoverArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub grades: PathBuf,
    /// `qa` or `rate:<n>`, optionally `+min-answers=<n>`.
    #[arg(long)]
    pub policy: String,
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QrelsArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub grades: PathBuf,
    #[arg(long)]
    pub policy: String,
    /// Emit the highest self-rating instead of a 0/1 label.
    #[arg(long)]
    pub graded: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LeaderboardArgs {
    /// `cover` or `p<k>` such as `p20`.
    #[arg(long)]
    pub metric: String,
    /// Directory of run files.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub grades: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<String>,
    /// Qrels to score `p<k>` against; without it labels come from the grades.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Minimum qrels grade counted as relevant for `p<k>`.
    #[arg(long, default_value_t = 1)]
    pub level_for_rel: u32,
    /// Cover depth.
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    /// JSON object mapping run tag to official rank.
    #[arg(long)]
    pub official: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Qrels derived from grades.
    #[arg(long)]
    pub labels: PathBuf,
    /// Official judgments.
    #[arg(long)]
    pub judgments: PathBuf,
    /// Comma-separated: graded, lenient, strict, binary or custom:<labels>:<judgments>.
    #[arg(long, default_value = "graded,lenient,strict")]
    pub collapse: String,
    /// Lowest judgment counted as relevant.
    #[arg(long, default_value_t = 1)]
    pub judgment_level: u32,
    /// Comma-separated min-answers values for a sweep; needs --bank, --grades and --policy.
    #[arg(long)]
    pub min_answers: Option<String>,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub grades: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<String>,
    /// Text tables; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    #[arg(long)]
    pub grades: PathBuf,
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let (argv, config) = match config::merge_config(argv, &Cli::command()) {
        Ok(merged) => merged,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(commands::exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(path) = &cli.config {
        info!("config {}: {config:?}", path.display());
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
