//! Configuration, toy data, experiment orchestration and file emission.

pub mod checks;
pub mod compare;
pub mod config;
pub mod dataset;
pub mod emit;
pub mod experiment;
pub mod metrics;
pub mod views;

pub use compare::{compare_activations, run_comparison, ComparisonRow};
pub use config::{CompareSpec, ExperimentConfig, ToyDatasetSpec};
pub use dataset::{gen_toy_dataset, init_weights};
pub use experiment::{initial_network, run_toy_experiment, train_toy, RunReport};
pub use metrics::{batch_classification_error, classification_error};
