//! Experiment configuration, baselines, sweeps, evaluation and export.

pub mod config;
pub mod export;
pub mod oracle;
pub mod run;

pub use config::{Controller, ExperimentConfig, Fairness, Mode, OracleConfig, SweepConfig, SweepVariable};
pub use oracle::{oracle_search, OracleResult};
pub use run::{aggregate, evaluate_policy, evaluate_random, rate_oma, run_sweep, train_policy, MetricRow, SweepOutput};
