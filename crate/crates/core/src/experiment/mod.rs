//! Configuration, orchestration, sweeps and plot-data emission.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod sweep;

pub use config::{RunConfig, OUTPUT_ENV};
pub use pipeline::{run_pipeline, Artifacts, Corpus};
pub use plot::emit_plotdata;
pub use sweep::{sweep, ExperimentRecord, Scheme};
