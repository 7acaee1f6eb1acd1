use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser};
use lstm_relevance::Error;

mod commands;
mod output;

static QUIET: AtomicBool = AtomicBool::new(false);

/// Progress message on stderr, silenced by `--quiet`.
macro_rules! note {
    ($($arg:tt)*) => {
        if !$crate::QUIET.load(std::sync::atomic::Ordering::Relaxed) {
            eprintln!($($arg)*);
        }
    };
}
pub(crate) use note;

#[derive(Parser)]
#[command(
    name = "lstm-relevance",
    version,
    about = "Explain LSTM predictions and evaluate attribution methods",
    after_help = "Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input, \
                  3 non-finite values, 4 too few models converged (partial results are still written)."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: commands::Command,
}

#[derive(Args)]
pub struct GlobalArgs {
    /// Directory for all outputs. Defaults to a fresh `<command>-<UTC time>`
    /// directory under $LSTM_RELEVANCE_OUT, or under ./runs when that is unset.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (0 or unset: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Master seed; every data, initialisation and sampling seed derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        Error::NonFinite(_) => 3,
        Error::ConvergenceBudget { .. } => 4,
        Error::Shape(_) | Error::InvalidArgument(_) | Error::Format(_) | Error::UnknownTokens(_) | Error::Json(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    QUIET.store(cli.global.quiet, Ordering::Relaxed);
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
