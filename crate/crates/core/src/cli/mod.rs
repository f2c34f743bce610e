//! The `ctxtrack` command-line front end.

mod commands;
mod manifest;
mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::{load_section, RunConfig, RunManifest};
pub use selftest::{run_selftest, SelftestItem};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "CTXTRACK_OUT";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal error
  2  bad arguments
  3  unreadable or invalid configuration
  4  unreadable or invalid dataset
  5  unreadable or incompatible checkpoint
  6  training produced a non-finite value
  7  file system error
  8  selftest failure

Outputs go to --out, or to $CTXTRACK_OUT/<command> (default root: ./runs).";

#[derive(Debug, Parser)]
#[command(name = "ctxtrack", version, about = "Cross-embodiment active tracking: data, training, evaluation", after_help = EXIT_CODES)]
pub struct Cli {
    /// Worker threads for rollouts and data generation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Config file with [datagen], [train] and [eval] sections, or a run
    /// manifest to repeat.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration (defaults, file, then flags) and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out the noisy scripted expert over an embodiment grid.
    GenData(GenDataArgs),
    /// Train one agent variant on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint over the evaluation grid.
    Eval(EvalArgs),
    /// Train and evaluate every ablation variant and tabulate them.
    Ablate(AblateArgs),
    /// Evaluate a non-learned baseline over the evaluation grid.
    Baseline(BaselineArgs),
    /// Run gradient and metric self-checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Embodiment grid file (heights, v_max, base).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Episodes per grid cell.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Action noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Generation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Ablation: none, no_context_id, no_consistency, no_context or no_lstm.
    #[arg(long)]
    pub ablate: Option<String>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gradient steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Evaluation grid file (heights, speeds, ...).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Episodes per grid cell.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Evaluation seed (for ablate, also the training seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one JSON-lines trace per episode.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by train.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also write the context vectors of the first episode of every cell.
    #[arg(long)]
    pub export_context: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineType {
    Pid,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Baseline controller.
    #[arg(long = "type", value_enum)]
    pub kind: BaselineType,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Run all five variants (the only supported selection).
    #[arg(long, required = true)]
    pub all: bool,
    /// Dataset written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Gradient steps per variant.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{0}")]
    Io(String),
    #[error("{0} selftest check(s) failed")]
    Selftest(usize),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Checkpoint(_) => 5,
            CliError::Diverged(_) => 6,
            CliError::Io(_) => 7,
            CliError::Selftest(_) => 8,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, command: Vec<String>) -> Result<(), CliError> {
    let threads = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = commands::Context {
        command,
        dump_config: cli.dump_config,
    };
    pool.install(|| match cli.command {
        None if cli.dump_config => {
            print!("{}", base.to_toml());
            Ok(())
        }
        None => Err(CliError::Usage("no command given (see --help)".into())),
        Some(Command::GenData(a)) => commands::gen_data(&ctx, base, a),
        Some(Command::Train(a)) => commands::train(&ctx, base, a),
        Some(Command::Eval(a)) => commands::eval(&ctx, base, a),
        Some(Command::Ablate(a)) => commands::ablate(&ctx, base, a),
        Some(Command::Baseline(a)) => commands::baseline(&ctx, base, a),
        Some(Command::Selftest) => commands::selftest(&ctx),
    })
}

/// `$CTXTRACK_OUT/<name>`, or `runs/<name>` when the variable is unset.
pub fn default_out(name: &str) -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV)
        .map_or_else(|| PathBuf::from("runs"), PathBuf::from)
        .join(name)
}
