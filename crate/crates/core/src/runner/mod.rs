//! Scenario execution: seeded episodes, aggregation, impact studies,
//! training and evaluation, plus the files they leave behind.

pub mod config;
pub mod episode;
pub mod experiments;
pub mod output;

use thiserror::Error;

pub use config::{registry, ScenarioConfig, StartPolicy, TwapSide, SCENARIOS};
pub use episode::{run_episode, EpisodeOutput, EpisodeSetup, EpisodeStats, RlStats, TwapStats};
pub use experiments::{
    evaluate_policy, impact_study, policy_for, run_scenario, train_frl, train_policy, EvaluationReport, ImpactStudy, ScenarioResult,
    TrainingOutput,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("agent fault: {0}")]
    Agent(String),
    #[error(transparent)]
    Hawkes(#[from] crate::hawkes::HawkesError),
    #[error(transparent)]
    Lob(#[from] crate::lob::LobError),
    #[error(transparent)]
    Rl(#[from] crate::rl::RlError),
    #[error(transparent)]
    Log(#[from] crate::eventlog::LogError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<crate::agent::AgentError> for RunError {
    fn from(e: crate::agent::AgentError) -> Self {
        RunError::Agent(e.to_string())
    }
}
