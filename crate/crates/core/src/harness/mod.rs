//! Experiment drivers: convergence curves, user-count and weight sweeps,
//! the run-time benchmark, their CSV/SVG outputs and the `jcas` CLI.
//!
//! Sweep cells run in parallel on the rayon pool; results are collected in
//! job order so every output except the wall-time columns is reproducible
//! from the [`ExperimentSpec`] and its seeds. The benchmark runs sequentially.

pub mod cli;
pub mod experiments;
pub mod plot;
pub mod spec;
pub mod table;

pub use experiments::{
    export_convergence, export_sweep, resolve_delta_params, resolve_params, run_benchmark, run_convergence,
    run_delta_sweep, run_k_sweep, train_for,
};
pub use spec::{ExperimentSpec, ModeRun, Sweep};
pub use table::{ConvergenceTable, ResultRow, ResultTable, SummaryRow};

use crate::error::{JcasError, Result};

/// Sizes the global rayon pool from `JCAS_THREADS`, if set.
///
/// Returns the requested count. Has no effect once the pool exists.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var("JCAS_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| JcasError::InvalidConfig(format!("JCAS_THREADS={raw:?} is not a thread count")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}
