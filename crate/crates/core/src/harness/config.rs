use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::blocks::{Difficulty, GeneratorConfig, TemplateKind};
use crate::policy::{RemoteConfig, SyntheticPolicyConfig};
use crate::reward::CompositeRewardConfig;
use crate::search::SearchConfig;

/// Number of instances with a given minimum plan length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepGroup {
    pub steps: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub groups: Vec<StepGroup>,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub max_attempts: usize,
    /// Load instances from this file instead of generating them.
    pub path: Option<PathBuf>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let group = |steps, count| StepGroup { steps, count };
        Self {
            groups: vec![group(2, 100), group(4, 100), group(6, 100), group(8, 50), group(10, 50), group(12, 50)],
            difficulty: Difficulty::Easy,
            seed: 0,
            min_blocks: 3,
            max_blocks: 6,
            max_attempts: 20_000,
            path: None,
        }
    }
}

impl DatasetSpec {
    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig { min_blocks: self.min_blocks, max_blocks: self.max_blocks, max_attempts: self.max_attempts }
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteBackends {
    pub expert: RemoteConfig,
    pub amateur: RemoteConfig,
    /// Separate speculative draft; the amateur is shared when absent.
    pub draft: Option<RemoteConfig>,
    pub template: TemplateKind,
}

impl Default for RemoteBackends {
    fn default() -> Self {
        Self {
            expert: RemoteConfig::default(),
            amateur: RemoteConfig { cost: 0.05, ..Default::default() },
            draft: None,
            template: TemplateKind::Easy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub expert: SyntheticPolicyConfig,
    pub amateur: SyntheticPolicyConfig,
    /// Separate speculative draft; the amateur is shared when absent.
    pub draft: Option<SyntheticPolicyConfig>,
    pub remote: RemoteBackends,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            kind: BackendKind::Synthetic,
            expert: SyntheticPolicyConfig { fidelity: 0.7, ..Default::default() },
            amateur: SyntheticPolicyConfig { fidelity: 0.2, cost: 0.05, ..Default::default() },
            draft: None,
            remote: RemoteBackends::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    /// Read prior statistics from this file instead of sampling them.
    pub stats_path: Option<PathBuf>,
    /// Seed of the prior problem pool, drawn like the dataset but disjoint
    /// from it by seed.
    pub seed: u64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { stats_path: None, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSpec {
    /// Record verifier progress for every expanded edge.
    pub verifier: bool,
    /// Report `P(parent) − P(child)` instead of `P(child) − P(parent)`.
    pub literal_delta_sign: bool,
    pub bins: usize,
    pub permutations: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self { verifier: false, literal_delta_sign: false, bins: 10, permutations: 2000 }
    }
}

/// Everything a run needs; reports embed the resolved value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub dataset: DatasetSpec,
    pub search: SearchConfig,
    pub reward: CompositeRewardConfig,
    pub backend: BackendSpec,
    pub prior: PriorSpec,
    pub analysis: AnalysisSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: None,
            dataset: DatasetSpec::default(),
            search: SearchConfig::default(),
            reward: CompositeRewardConfig::default(),
            backend: BackendSpec::default(),
            prior: PriorSpec::default(),
            analysis: AnalysisSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.search.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.reward.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        for c in [&self.backend.expert, &self.backend.amateur].into_iter().chain(self.backend.draft.as_ref()) {
            c.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let d = &self.dataset;
        if d.path.is_none() {
            if d.groups.is_empty() {
                return bad("dataset needs at least one step group".into());
            }
            if d.min_blocks < 1 || d.min_blocks > d.max_blocks || d.max_blocks > 16 {
                return bad(format!("block range {}..={} is invalid", d.min_blocks, d.max_blocks));
            }
            if self.analysis.verifier && d.max_blocks > crate::blocks::DEFAULT_ORACLE_LIMIT {
                return bad("verifier analytics need max_blocks within the oracle limit".into());
            }
        }
        for p in [&d.path, &self.prior.stats_path].into_iter().flatten() {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.analysis.bins == 0 {
            return bad("analysis.bins must be at least 1".into());
        }
        Ok(())
    }

    /// Parses a bare config or the `config` field of an emitted report.
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) if value.get("report").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
