//! Experiment runner for the nevlab engines: TOML configs in, JSON reports,
//! CSV tables and SVG plots out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod svg;
pub mod table;

pub use error::{CliError, Result};
pub use report::{plot_csv, run, validate, PlotRequest, RunSummary};

/// Environment variable holding the worker thread count.
pub const THREADS_VAR: &str = "NEVLAB_THREADS";

/// Sizes the global worker pool from [`THREADS_VAR`] when it is set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
