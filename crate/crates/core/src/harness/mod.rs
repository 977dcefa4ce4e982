//! Experiment configuration, Monte Carlo BER sweeps and the mode pipeline
//! that writes CSV artifacts.

pub mod config;
pub mod pipeline;
pub mod sweep;

pub use config::{DetectorKind, ExperimentConfig, Mode};
pub use pipeline::{run_pipeline, RunArtifacts};
pub use sweep::{run_ber_sweep, wilson_interval, SweepResult, SweepRow};
