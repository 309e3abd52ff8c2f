//! Experiment orchestration: config files, seeded runs, sweeps, the mean
//! best episode reward metric, replay rendering and a quick self-test.

mod config;
mod metric;
mod render;
mod run;
mod selftest;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{default_config_text, ExperimentConfig, KEYS};
pub use metric::{
    mean_best_episode_reward, windowed_means, EvalPoint, MetricRow, MetricTable, RunLog,
};
pub use render::render_replay;
pub use run::{
    run_experiment, run_seed, seed_dir, sweep, worker_pool, ExperimentReport, SeedFailure,
    REWARDS_HEADER, TRAIN_LOG_HEADER,
};
pub use selftest::{run_selftest, CheckResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Train(#[from] crate::mappo::TrainError),
}
