//! Configuration, metrics, experiment drivers, and file emission.
//!
//! Experiments run paired per-seed: the accelerated (or comparison-policy)
//! run is always measured against the unaccelerated baseline with the same
//! seed. Reports are JSON lines, per-step tables are CSV, and raw vectors
//! are little-endian f64 blobs with a JSON sidecar. Identical configurations
//! produce byte-identical reports except for the wall-time field.

mod config;
mod convergence;
mod experiments;
mod io;
mod metrics;

pub use config::{DenoiserConfig, ExperimentKind, RunConfig, SeedSpec};
pub use convergence::{
    convergence_study, fit_log_slope, slope_for, ConvergenceRow, ConvergenceScheme,
    DEFAULT_RESOLUTIONS,
};
pub use experiments::{
    compare_policies, run_experiment, CompareSummary, ModeCounts, RunReport,
};
pub use io::{
    read_reports_jsonl, read_vector_blob, write_convergence_csv, write_reports_jsonl,
    write_vector_blob,
};
pub use metrics::{compute_psnr, mse, rel_l2, PSNR_SENTINEL_DB};
