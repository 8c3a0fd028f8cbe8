//! `bits`: sequential experimental design for activity-coefficient
//! surrogates, with phase-equilibrium and column post-processing.

mod commands;
mod config;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::Provider;

#[derive(Parser)]
#[command(name = "bits", version, about)]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the design loop on the Wilson oracle and write the history.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace an existing history in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Write bubble/dew curves for a thermodynamic model.
    Phase {
        #[arg(long)]
        config: PathBuf,
        /// wilson, ideal or surrogate:<iteration>.
        #[arg(long, default_value = "wilson")]
        provider: Provider,
        /// Posterior realizations for a surrogate provider.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Step off McCabe-Thiele stages on one or more equilibrium curves.
    Column {
        #[arg(long)]
        config: PathBuf,
        /// Phase table CSV, optionally as name=path. Repeatable.
        #[arg(long = "curve", required = true)]
        curves: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise the hyperparameter chains of one iteration.
    Diagnose {
        #[arg(long)]
        history: PathBuf,
        /// Defaults to the last iteration.
        #[arg(long)]
        iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the predictive entropy of one iteration on a regular grid.
    EntropyMap {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        iter: usize,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run { config, force } => commands::run(&config, force),
        Command::Phase {
            config,
            provider,
            samples,
            out,
        } => commands::phase(&config, provider, samples, out),
        Command::Column {
            config,
            curves,
            out,
        } => commands::column(&config, &curves, out),
        Command::Diagnose { history, iter, out } => commands::diagnose(&history, iter, out),
        Command::EntropyMap {
            history,
            iter,
            grid,
            out,
        } => commands::entropy_map(&history, iter, grid, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code: u8 = if e.is_user_error() { 2 } else { 3 };
            let record = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": code }
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
