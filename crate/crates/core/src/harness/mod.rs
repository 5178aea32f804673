//! Seed-sweep experiment runner for machine teachers.

pub mod config;
pub mod emit;
pub mod run;
pub mod summary;
pub mod tune;

pub use config::{ExperimentConfig, LearnerKind, TaskConfig};
pub use emit::{emit, load_csv, read_csv, write_csv, Manifest, OutputFormat};
pub use run::{run_experiment, stream_rng, IrlWorld, LinearWorld, Metric, MetricTrace, RunOutput, Stream};
pub use summary::{summarize, Summary};
pub use tune::{tune_beta, BetaTuning};
