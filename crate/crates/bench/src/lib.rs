//! Experiment harness around the `pivchol` library: CSV ingestion, synthetic
//! datasets, the preconditioning and regression grids, and CSV/SVG output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod svg;
pub mod synth;

pub use config::{Defaults, ExperimentConfig, Settings};
pub use error::{BenchError, Result};
pub use experiment::{
    load_dataset, run_precond_experiment, run_regression_experiment, run_trace_bounds, NamedDataset, PrecondRow,
    RegressionRow, TraceBoundCsvRow,
};
pub use synth::SynthSpec;
