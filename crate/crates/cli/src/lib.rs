//! Experiment runner for the `lifschitz-core` laboratory.
//!
//! A run resolves a [`config::RunConfig`], computes every table in memory,
//! writes the CSV files and finally `manifest.json` with their checksums.

// `!(x > 0.0)` guards reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use config::RunConfig;
pub use error::RunError;
use output::Manifest;

/// A completed run; `failed` names checks that did not pass.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub failed: Vec<String>,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs the experiment on a pool of `cfg.workers` threads and writes its outputs.
pub fn execute(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let started = output::unix_now();
    let dir = cfg.out();
    output::prepare_dir(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or_else(default_workers))
        .build()
        .map_err(|e| RunError::Usage(format!("workers: {e}")))?;
    let outcome = pool.install(|| experiments::run(cfg))?;
    let manifest = output::write_run(dir, cfg, &outcome.tables, started)?;
    Ok(RunReport {
        manifest,
        failed: outcome.failed,
    })
}
