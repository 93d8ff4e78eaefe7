//! Configuration, CSV records, metrics and the end-to-end comparison run.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod records;

pub use config::Config;
pub use metrics::{phase_average, r2, rmse, PhaseAveragedCurve};
pub use pipeline::{run_pipeline, PipelineOutcome};
pub use records::SampleRecord;
