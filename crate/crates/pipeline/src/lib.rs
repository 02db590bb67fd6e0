//! Batch pipeline: cached stages, run manifest, reports and ablations.

pub mod ablation;
pub mod cache;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod stages;

pub use ablation::{run_ablation, Knob};
pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use report::Summary;
pub use run::{run_pipeline, Manifest, RunOptions, RunOutcome};
pub use stages::Stage;
