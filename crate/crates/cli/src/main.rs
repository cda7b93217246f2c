mod batch;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CliError, SolveArgs};

/// Three-phase power flow and infeasibility analysis.
#[derive(Debug, Parser)]
#[command(name = "tpia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one network. Exit code 0: feasible, 2: infeasible, 1: failure.
    Run(RunArgs),
    /// Solve every `.json` / `.glm` network in a directory.
    Batch(BatchArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    input: PathBuf,
    #[command(flatten)]
    solve: SolveArgs,
    /// All reports of the run as one JSON document.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Node-phase table; `name.<mode>.csv` when several modes run.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Graphviz heat map; `name.<mode>.dot` when several modes run.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BatchArgs {
    dir: PathBuf,
    #[command(flatten)]
    solve: SolveArgs,
    /// Directory for per-case JSON documents (and `summary.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregate JSON path. Without it or `--out`, the aggregate goes to stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<u8, CliError> {
    let settings = args.solve.settings()?;
    let mut config = args.solve.config_for(&args.input, &settings);
    config.json = args.json;
    config.csv = args.csv;
    config.dot = args.dot;
    run::run(&config)
}

fn batch(args: BatchArgs) -> Result<u8, CliError> {
    let report = batch::batch(&args.dir, &args.solve, args.out.as_deref())?;
    let mut text = serde_json::to_string_pretty(&report).expect("batch reports serialize");
    text.push('\n');
    let summary = args.summary.or_else(|| args.out.as_ref().map(|o| o.join("summary.json")));
    match summary {
        Some(path) => {
            run::write_atomic(&path, &text)?;
            print!("{}", batch::batch_table(&report));
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Batch(args) => batch(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
