//! Action-level reward factors and their combination.
//!
//! Three factors score one generated step: the mean Jensen-Shannon
//! divergence between expert and amateur ([`reward_jsd`]), the expert
//! log-likelihood ([`reward_ll`]) and the expert's self-evaluation
//! ([`reward_se`]). [`PriorStats`] holds clustered per-region statistics for
//! each factor; [`RewardModel`] z-scores factor values within their region,
//! updates the statistics online and returns the weighted sum.

mod factors;
mod stats;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Policy, PolicyContext, PolicyError};

pub use factors::{jsd, reward_jsd, reward_ll, reward_se, SelfEvalTemplate};
pub use stats::{kmeans_1d, FactorStats, Region, SIGMA_FLOOR};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("answer span is empty")]
    EmptyAnswer,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("non-finite reward value")]
    NonFinite,
    #[error("no prior statistics for factor {0}")]
    MissingStats(FactorKind),
    #[error("invalid statistics: {0}")]
    InvalidStats(String),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Jsd,
    Ll,
    Se,
    /// Seeded uniform noise in `[0, 1]`, used by the ablation baseline.
    Random,
}

impl FactorKind {
    /// Factors computed from model distributions.
    pub const SCORED: [FactorKind; 3] = [FactorKind::Jsd, FactorKind::Ll, FactorKind::Se];

    pub fn name(self) -> &'static str {
        match self {
            FactorKind::Jsd => "jsd",
            FactorKind::Ll => "ll",
            FactorKind::Se => "se",
            FactorKind::Random => "random",
        }
    }
}

impl std::fmt::Display for FactorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorWeights {
    pub jsd: f64,
    pub ll: f64,
    pub se: f64,
    pub random: f64,
}

impl Default for FactorWeights {
    fn default() -> Self {
        Self { jsd: 1.0 / 3.0, ll: 1.0 / 3.0, se: 1.0 / 3.0, random: 0.0 }
    }
}

impl FactorWeights {
    pub fn get(&self, kind: FactorKind) -> f64 {
        match kind {
            FactorKind::Jsd => self.jsd,
            FactorKind::Ll => self.ll,
            FactorKind::Se => self.se,
            FactorKind::Random => self.random,
        }
    }

    /// Factors with a non-zero weight.
    pub fn enabled(&self) -> Vec<FactorKind> {
        [FactorKind::Jsd, FactorKind::Ll, FactorKind::Se, FactorKind::Random]
            .into_iter()
            .filter(|&k| self.get(k) != 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositeRewardConfig {
    pub weights: FactorWeights,
    /// Z-score factors against prior statistics before weighting.
    pub normalize: bool,
    pub online_update: bool,
    /// Problems sampled for the prior phase (M).
    pub prior_problems: usize,
    /// Solutions per prior problem (N).
    pub prior_solutions: usize,
    /// Requested clusters per factor (K).
    pub clusters: usize,
    /// Adjacent clusters merge when their centroid gap is at most this many
    /// standard deviations.
    pub separation_factor: f64,
    /// Reward assigned to generations that do not parse.
    pub malformed_floor: f64,
    pub self_eval: SelfEvalTemplate,
}

impl Default for CompositeRewardConfig {
    fn default() -> Self {
        Self {
            weights: FactorWeights::default(),
            normalize: true,
            online_update: true,
            prior_problems: 20,
            prior_solutions: 5,
            clusters: 1,
            separation_factor: 4.0,
            malformed_floor: -3.0,
            self_eval: SelfEvalTemplate::default(),
        }
    }
}

impl CompositeRewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let w = &self.weights;
        if ![w.jsd, w.ll, w.se, w.random].iter().all(|x| x.is_finite()) {
            return Err(RewardError::InvalidConfig("weights must be finite".into()));
        }
        if self.prior_problems == 0 || self.prior_solutions == 0 || self.clusters == 0 {
            return Err(RewardError::InvalidConfig("prior_problems, prior_solutions and clusters must be >= 1".into()));
        }
        if !(self.separation_factor >= 0.0) || !self.malformed_floor.is_finite() {
            return Err(RewardError::InvalidConfig("separation_factor and malformed_floor must be finite".into()));
        }
        Ok(())
    }

    /// Enabled factors that need model evaluation.
    pub fn scored_factors(&self) -> Vec<FactorKind> {
        FactorKind::SCORED.into_iter().filter(|&k| self.weights.get(k) != 0.0).collect()
    }
}

/// Prior statistics for every scored factor, keyed by factor name on disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorStats(pub BTreeMap<FactorKind, FactorStats>);

impl PriorStats {
    /// Clusters each factor's samples.
    pub fn from_samples(
        samples: &BTreeMap<FactorKind, Vec<f64>>,
        clusters: usize,
        separation: f64,
    ) -> Result<Self, RewardError> {
        let mut out = BTreeMap::new();
        for (&kind, values) in samples {
            out.insert(kind, FactorStats::cluster(values, clusters, separation)?);
        }
        Ok(Self(out))
    }

    pub fn get(&self, kind: FactorKind) -> Option<&FactorStats> {
        self.0.get(&kind)
    }

    pub fn to_json_string(&self) -> Result<String, RewardError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<(), RewardError> {
        Ok(std::fs::write(path, self.to_json_string()?)?)
    }

    pub fn load(path: &Path) -> Result<Self, RewardError> {
        let stats: PriorStats = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for s in stats.0.values() {
            s.validate()?;
        }
        Ok(stats)
    }
}

/// Raw and normalized factor values plus the composite for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub raw: BTreeMap<FactorKind, f64>,
    pub normalized: BTreeMap<FactorKind, f64>,
    pub composite: f64,
}

/// Evaluates the composite reward of generated steps for one search.
///
/// Owns its copy of the statistics, so online updates from one search never
/// leak into another.
#[derive(Debug, Clone)]
pub struct RewardModel {
    cfg: CompositeRewardConfig,
    stats: PriorStats,
    rng: ChaCha8Rng,
}

impl RewardModel {
    pub fn new(cfg: CompositeRewardConfig, stats: Option<PriorStats>, rng: ChaCha8Rng) -> Result<Self, RewardError> {
        cfg.validate()?;
        let stats = stats.unwrap_or_default();
        if cfg.normalize {
            if let Some(&k) = cfg.scored_factors().iter().find(|k| stats.get(**k).is_none()) {
                return Err(RewardError::MissingStats(k));
            }
        }
        Ok(Self { cfg, stats, rng })
    }

    pub fn config(&self) -> &CompositeRewardConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &PriorStats {
        &self.stats
    }

    pub fn malformed_floor(&self) -> f64 {
        self.cfg.malformed_floor
    }

    /// Raw values of the enabled scored factors.
    pub fn raw_factors(
        &self,
        expert: &dyn Policy,
        amateur: &dyn Policy,
        ctx: &PolicyContext,
    ) -> Result<BTreeMap<FactorKind, f64>, RewardError> {
        let mut raw = BTreeMap::new();
        for kind in self.cfg.scored_factors() {
            let v = match kind {
                FactorKind::Jsd => reward_jsd(expert, amateur, ctx)?,
                FactorKind::Ll => reward_ll(expert, ctx)?,
                FactorKind::Se => reward_se(expert, ctx, &self.cfg.self_eval)?,
                FactorKind::Random => unreachable!(),
            };
            if !v.is_finite() {
                return Err(RewardError::NonFinite);
            }
            raw.insert(kind, v);
        }
        Ok(raw)
    }

    /// Scores one step and, when enabled, folds it into the statistics.
    pub fn evaluate(
        &mut self,
        expert: &dyn Policy,
        amateur: &dyn Policy,
        ctx: &PolicyContext,
    ) -> Result<RewardBreakdown, RewardError> {
        let raw = self.raw_factors(expert, amateur, ctx)?;
        Ok(self.combine(raw))
    }

    /// Normalizes with the current statistics, weights, then updates.
    pub fn combine(&mut self, mut raw: BTreeMap<FactorKind, f64>) -> RewardBreakdown {
        let mut normalized = BTreeMap::new();
        let mut composite = 0.0;
        for (&kind, &v) in &raw {
            let n = match (self.cfg.normalize, self.stats.get(kind)) {
                (true, Some(s)) => s.normalize(v),
                _ => v,
            };
            normalized.insert(kind, n);
            composite += self.cfg.weights.get(kind) * n;
        }
        if self.cfg.weights.random != 0.0 {
            let u: f64 = self.rng.gen();
            raw.insert(FactorKind::Random, u);
            normalized.insert(FactorKind::Random, u);
            composite += self.cfg.weights.random * u;
        }
        if self.cfg.normalize && self.cfg.online_update {
            for (&kind, &v) in &raw {
                if let Some(s) = self.stats.0.get_mut(&kind) {
                    s.update(v);
                }
            }
        }
        RewardBreakdown { raw, normalized, composite }
    }
}
