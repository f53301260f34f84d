//! Replicated benchmark experiments: TOML configuration, method catalogue,
//! runner and CSV/SVG reporting.

mod config;
mod method;
mod report;
mod runner;

pub use config::{ExperimentConfig, MethodSection, ModelKind, ModelSection, Reference, RunSection};
pub use method::Method;
pub use report::{
    read_metrics_csv, render_svg, report_from_dir, write_metrics_csv, write_outputs,
    ExperimentManifest,
};
pub use runner::{run_experiment, ExperimentReport, ReplicateFailure};
