//! Config-driven experiments: dataset generation, training with either
//! objective, multi-seed evaluation and report merging.

pub mod config;
pub mod eval;
pub mod experiment;
pub mod objective;
pub mod report;
pub mod train;

pub use config::{ExperimentConfig, Objective};
pub use eval::{evaluate, predict, PredictionRow};
pub use experiment::{generate_dataset, load_train_data, run_experiment, MeanSd, MetricsReport};
pub use report::report;
pub use train::{train, LogRow, TrainData, TrainOptions, TrainOutcome};
