//! `roadsight` command-line tool.

mod cmd;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;
use crate::error::{CliError, EXIT_USAGE};

/// Vehicle-detection evaluation and road-network traffic counting.
///
/// Settings come from, in order: flags, environment variables, the settings
/// file (--config), built-in defaults.
///
/// Exit codes: 0 success, 1 I/O error, 2 usage error, 3 parse error, 4 data
/// error.
#[derive(Debug, Parser)]
#[command(name = "roadsight", version)]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true, env = "ROADSIGHT_CONFIG")]
    config: Option<PathBuf>,
    /// Print a JSON summary on stdout instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
    /// More log output (repeat for debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a directory of PASCAL VOC XML files to YOLO TXT labels.
    Convert(cmd::dataset::ConvertArgs),
    /// Assign manifest images to train/valid/test.
    Split(cmd::dataset::SplitArgs),
    /// Evaluate detections against the test split.
    Evaluate(cmd::evaluate::EvaluateArgs),
    /// Build the results table from per-class metric rows.
    Report(cmd::evaluate::ReportArgs),
    /// Generate synthetic camera event streams.
    Simulate(cmd::traffic::SimulateArgs),
    /// Run the ingestion server until interrupted.
    Serve(cmd::traffic::ServeArgs),
    /// Replay an event file into a graph and write a snapshot.
    Replay(cmd::traffic::ReplayArgs),
    /// Query traffic flow from a snapshot.
    Query(cmd::traffic::QueryArgs),
}

/// Flags shared by commands that build a traffic graph.
#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Graph definition file (`node` / `edge` lines).
    #[arg(long, env = "ROADSIGHT_GRAPH")]
    pub graph: Option<PathBuf>,
    /// Start from this snapshot instead of a definition.
    #[arg(long, conflicts_with = "graph")]
    pub restore: Option<PathBuf>,
    /// Class list, one name per line [default: the 15 vehicle classes].
    #[arg(long, env = "ROADSIGHT_CLASSES")]
    pub classes: Option<PathBuf>,
    /// Tumbling window width in milliseconds [default: 60000].
    #[arg(long, env = "ROADSIGHT_WINDOW_MS")]
    pub window_ms: Option<i64>,
    /// Lateness horizon in milliseconds [default: 300000].
    #[arg(long, env = "ROADSIGHT_LATENESS_MS")]
    pub lateness_ms: Option<i64>,
    /// Detections below this confidence are not counted [default: 0.25].
    #[arg(long, env = "ROADSIGHT_CUTOFF")]
    pub cutoff: Option<f64>,
}

pub struct Context {
    pub file: FileConfig,
    pub json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context {
        file: FileConfig::load(cli.config.as_deref())?,
        json: cli.json,
    };
    match cli.command {
        Command::Convert(a) => cmd::dataset::convert(&ctx, a),
        Command::Split(a) => cmd::dataset::split(&ctx, a),
        Command::Evaluate(a) => cmd::evaluate::evaluate(&ctx, a),
        Command::Report(a) => cmd::evaluate::report(&ctx, a),
        Command::Simulate(a) => cmd::traffic::simulate(&ctx, a),
        Command::Serve(a) => cmd::traffic::serve(&ctx, a),
        Command::Replay(a) => cmd::traffic::replay(&ctx, a),
        Command::Query(a) => cmd::traffic::query(&ctx, a),
    }
}
