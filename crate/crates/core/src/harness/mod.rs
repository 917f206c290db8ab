//! Experiment orchestration: configs, sweeps, reports and audits.

mod audit;
mod config;
mod report;
mod run;

pub use audit::{audit, audit_files, AuditConstraint, AuditReport};
pub use config::{Approach, ExperimentConfig, Hyper, HyperGrid, IdealGrid};
pub use report::{
    aggregate, emit, mean_se, raw_from_bytes, raw_to_bytes, summary_to_bytes, timings_to_csv, write_atomic,
    Format, RunRecord, SummaryRow, Timing,
};
pub use run::{
    ideal_theta_grid, load_dataset, run_experiment, run_on_dataset, Experiment, ModelFile, TrainedModel,
};
