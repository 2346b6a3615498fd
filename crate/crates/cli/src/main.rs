//! `quotescrub`: build corpus sketches, scan and scrub model responses, and
//! score them against references.

mod build_index;
mod config;
mod error;
mod eval;
mod io;
mod manifest;
mod scan;
mod scrub;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliResult, Classify, Kind};

#[derive(Debug, Parser)]
#[command(name = "quotescrub", version, about = "Detect and rewrite verbatim corpus quotes in model output")]
struct Cli {
    /// TOML file with [index], [scrub], [eval] and [http] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the extraction sketch and the metric sketches from a JSONL corpus.
    BuildIndex(build_index::Args),
    /// Report the corpus quotes found in each response.
    Scan(scan::Args),
    /// Rewrite responses until no quote reaches the threshold.
    Scrub(scrub::Args),
    /// Score responses against references and compare methods.
    Eval(eval::Args),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> CliResult<()> {
    let file = config::load(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(error::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .or_kind(Kind::Usage, || "configuring the worker pool".into())?;
    }
    match cli.command {
        Command::BuildIndex(args) => build_index::run(args, &file),
        Command::Scan(args) => scan::run(args),
        Command::Scrub(args) => scrub::run(args, &file),
        Command::Eval(args) => eval::run(args, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Kind::Usage.code()) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
