mod args;
mod cache_log;
mod commands;
mod error;
mod input;

use std::process::ExitCode;

use clap::Parser;
use log::info;

use gbspe_core::HafnianCache;

use crate::args::{Cli, Command};
use crate::cache_log::CacheLog;
use crate::error::{CliError, CliResult};

/// Caps the worker pool; results do not depend on it.
const THREADS_VAR: &str = "GBSPE_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::config(format!("{THREADS_VAR}: `{value}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let cache = HafnianCache::new();
    let uses_cache = !matches!(cli.command, Command::Advantage(_) | Command::Sweep { .. } | Command::HybridPlan { .. });
    let mut log = match (&cli.cache, uses_cache) {
        (Some(path), true) => {
            let log = CacheLog::open(path, &cache)?;
            info!("loaded {} cached hafnians from {}", log.len(), path.display());
            Some(log)
        }
        (Some(_), false) => {
            info!("--cache is ignored by this subcommand (every matrix is freshly drawn)");
            None
        }
        _ => None,
    };
    let outcome = commands::run(cli.command, &cache);
    if let Some(log) = log.as_mut() {
        let added = log.persist(&cache)?;
        info!("appended {added} hafnians to the cache log");
    }
    outcome
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gbspe: {e}");
            e.exit_code()
        }
    }
}
