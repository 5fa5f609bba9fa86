//! End-to-end pipeline driver behind the `eafpca` binary: simulate, fit,
//! eigen-decompose, estimate eigenvalue fields, cluster and evaluate.

pub mod config;
pub mod pipeline;
pub mod svg;

pub use config::PipelineConfig;
pub use pipeline::{run_in_memory, Fit, Metrics, RunOutput, Stage};
