//! Repeated-simulation experiment harness: study configuration, tolerance
//! and weight calibration, replicate orchestration, and bias/coverage
//! metrics over the persisted chains.

pub mod calibrate;
pub mod config;
pub mod experiment;
pub mod metrics;

pub use calibrate::{epsilon_from_pool, tune_bsl_m, BSL_TUNING_REPEATS};
pub use config::{ExperimentConfig, MethodId, ModelId, PriorComponent, Transform};
pub use experiment::{
    calibrate_experiment, metrics_from_dir, report_names, run_experiment, simulate_to_file,
    to_report, Calibration, ReplicateExclusion, RunManifest,
};
pub use metrics::{
    compute_metrics, CredibleInterval, MetricsRow, MetricsTable, ReplicateResult, COVERAGE_LEVELS,
};
