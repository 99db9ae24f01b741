//! Experiment harness: datasets, the prior-statistics phase, benchmark,
//! ablation and sweep runs, the interpretability analysis and the speed
//! comparison. Every report is plain serde data that embeds the resolved
//! [`ExperimentConfig`], so rerunning from a report reproduces it.

mod ablation;
mod analysis;
mod backend;
mod bench;
mod config;
mod dataset;
mod prior;
mod speed;
mod sweep;

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::blocks::BlocksError;
use crate::policy::PolicyError;
use crate::reward::RewardError;
use crate::search::SearchError;

pub use ablation::{ablation_ladder, run_ablation, AblationReport, AblationRow};
pub use analysis::{analyze_edges, Bin, FactorCorrelation, InterpretabilityReport, MIN_EDGES};
pub use backend::build_policies;
pub use bench::{
    instance_seed, resolve_stats, run_benchmark, run_benchmark_on, run_benchmark_streaming, solve_instance,
    BenchReport, BenchSummary, Edge, GroupRow, RunRecord,
};
pub use config::{
    AnalysisSpec, BackendKind, BackendSpec, DatasetSpec, ExperimentConfig, PriorSpec, RemoteBackends, StepGroup,
};
pub use dataset::{generate_dataset, load_dataset, load_or_generate, Instance};
pub use prior::{prior_problems, run_prior_phase, PriorReport, MIN_PRIOR_SAMPLES};
pub use speed::{run_speed, SpeedReport, SpeedRow};
pub use sweep::{run_sweep, SweepParam, SweepReport, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error(transparent)]
    Blocks(BlocksError),
    #[error(transparent)]
    Policy(PolicyError),
    #[error(transparent)]
    Reward(RewardError),
    #[error(transparent)]
    Search(SearchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for an
    /// unreachable backend, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Backend(_) => 3,
            _ => 1,
        }
    }
}

impl From<BlocksError> for HarnessError {
    fn from(e: BlocksError) -> Self {
        HarnessError::Blocks(e)
    }
}

impl From<PolicyError> for HarnessError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::BackendUnavailable(m) => HarnessError::Backend(m),
            e => HarnessError::Policy(e),
        }
    }
}

impl From<RewardError> for HarnessError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::Policy(p) => p.into(),
            RewardError::InvalidConfig(m) | RewardError::InvalidStats(m) => HarnessError::Config(m),
            e => HarnessError::Reward(e),
        }
    }
}

impl From<SearchError> for HarnessError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Policy(p) => p.into(),
            SearchError::Reward(r) => r.into(),
            SearchError::Blocks(b) => b.into(),
            SearchError::InvalidConfig(m) => HarnessError::Config(m),
            e => HarnessError::Search(e),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub(crate) fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match jobs {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}
