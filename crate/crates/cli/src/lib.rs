//! Experiment orchestration for tokenlens: declarative grids over domains,
//! tokenizer families, vocabulary sizes and training sizes, with cached
//! per-cell results and plot-ready reports.

pub mod config;
pub mod manifest;
pub mod report;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use manifest::{CellStatus, RunManifest};
pub use report::{emit_report, ReportFormat};
pub use runner::{run_experiment, RunOptions};
