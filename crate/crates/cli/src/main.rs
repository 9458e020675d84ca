use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod report;
mod trees;

use error::{CliError, CliResult};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O error
  2  configuration or usage error
  3  data or shape error
  4  verification failure";

/// Multiclass log-loss classifiers from binary ones: data generation,
/// training, evaluation and regret verification.
#[derive(Parser, Debug)]
#[command(name = "logloss-mc", version, after_help = EXIT_CODES, args_override_self = true)]
struct Cli {
    /// key=value file supplying flag values; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/test datasets (Gaussian mixture or MNIST conversion).
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Train one method and write its model and run manifest.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Report log-loss, error and regret of a trained model.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Run the regret checks.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Print and validate a class tree.
    #[command(args_override_self = true)]
    Tree(TreeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Softmax,
    Ova,
    Hierarchical,
    Leveraged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Delimited,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "a")]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    /// Isotropic noise level of every class.
    #[arg(long, default_value_t = 1.8)]
    pub sigma: f64,
    /// Scale of the random class-specific covariance term (scenario B).
    #[arg(long, default_value_t = 0.1)]
    pub alpha_scale: f64,
    #[arg(long, default_value_t = 100_000)]
    pub train_n: usize,
    #[arg(long, default_value_t = 20_000)]
    pub test_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convert MNIST IDX files from this directory instead of sampling.
    #[arg(long, value_name = "DIR")]
    pub mnist_dir: Option<PathBuf>,
    /// Margin pixels removed from each side of MNIST images.
    #[arg(long, default_value_t = 4)]
    pub crop: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory holding train.ds.
    #[arg(long, value_name = "DIR", required_unless_present = "manifest")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "manifest")]
    pub method: Option<Method>,
    /// Tree for hierarchical and leveraged methods.
    #[arg(long, long_help = trees::TREE_SOURCES)]
    pub tree: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Epochs for the softmax baseline of a leveraged run (defaults to --epochs).
    #[arg(long)]
    pub baseline_epochs: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Return the best end-of-epoch checkpoint by training loss.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub keep_best: bool,
    /// Output directory (defaults to the dataset directory).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Re-run exactly the configuration recorded in a run manifest.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["data", "method", "tree", "baseline_epochs"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset directory holding train.ds and/or test.ds.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Evaluate model-<method>.mdl from the model directory.
    #[arg(long, value_enum, required_unless_present = "model")]
    pub method: Option<Method>,
    /// Model file to evaluate.
    #[arg(long, value_name = "FILE", conflicts_with = "method")]
    pub model: Option<PathBuf>,
    /// Directory holding the models (defaults to the dataset directory).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Also write the report to this file.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Comma-separated checks; `all` runs every check that needs no data.
    #[arg(long, default_value = "all", long_help = commands::verify::SUITE_HELP)]
    pub suite: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inject a defect (negative control).
    #[arg(long, value_enum, default_value = "none")]
    pub fault: FaultArg,
    /// Dataset directory for the data-driven checks (uses test.ds).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Model for the data-driven checks.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Tree for the conditional decomposition of models without one.
    #[arg(long, default_value = "cova")]
    pub tree: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Write the JSON report to this file.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    None,
    RotateNodeEstimates,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    #[arg(long, long_help = trees::TREE_SOURCES)]
    pub tree: String,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
}

fn run(args: Vec<OsString>) -> CliResult<()> {
    let args = config::merge_config(&Cli::command(), args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code == 0 {
                return Ok(());
            }
            return Err(CliError::Config("invalid arguments".into()));
        }
    };
    match cli.command {
        Command::Gen(a) => commands::gen::run(&a),
        Command::Train(a) => commands::train::run(&a),
        Command::Eval(a) => commands::eval::run(&a),
        Command::Verify(a) => commands::verify::run(&a),
        Command::Tree(a) => commands::tree::run(&a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("logloss-mc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
