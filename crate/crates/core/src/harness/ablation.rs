use serde::{Deserialize, Serialize};

use super::{load_or_generate, resolve_stats, run_benchmark_on, BenchSummary, ExperimentConfig, HarnessError};
use crate::reward::FactorWeights;
use crate::search::BackpropMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rung: usize,
    pub name: String,
    pub accuracy: f64,
    /// Accuracy gain over the previous rung.
    pub delta: f64,
    pub solved: usize,
    pub instances: usize,
    pub summary: BenchSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub report: String,
    pub config: ExperimentConfig,
    pub rows: Vec<AblationRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    rung: usize,
    name: &'a str,
    accuracy: f64,
    delta: f64,
    solved: usize,
    instances: usize,
}

impl AblationReport {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), HarnessError> {
        let rows: Vec<CsvRow> = self
            .rows
            .iter()
            .map(|r| CsvRow {
                rung: r.rung,
                name: &r.name,
                accuracy: r.accuracy,
                delta: r.delta,
                solved: r.solved,
                instances: r.instances,
            })
            .collect();
        super::write_csv(path, &rows)
    }
}

/// Cumulative ladder from a random-reward search to the full method. Each
/// rung adds one component to the previous one; the last rung is `base`
/// with the refined backpropagation.
pub fn ablation_ladder(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let third = 1.0 / 3.0;
    let mut cfg = base.clone();
    cfg.reward.normalize = false;
    cfg.reward.online_update = false;
    cfg.search.exploration = 1.0;
    cfg.search.backprop = BackpropMode::Mean;
    let mut ladder = Vec::new();
    let mut push = |name: &str, cfg: &ExperimentConfig| ladder.push((name.to_string(), cfg.clone()));

    cfg.reward.weights = FactorWeights { jsd: 0.0, ll: 0.0, se: 0.0, random: 1.0 };
    push("random reward", &cfg);
    cfg.reward.weights = FactorWeights { jsd: 1.0, ll: 0.0, se: 0.0, random: 0.0 };
    push("+ contrastive reward", &cfg);
    cfg.reward.weights = FactorWeights { jsd: 0.5, ll: 0.5, se: 0.0, random: 0.0 };
    push("+ likelihood", &cfg);
    cfg.reward.weights = FactorWeights { jsd: third, ll: third, se: third, random: 0.0 };
    push("+ self-evaluation", &cfg);
    cfg.reward.normalize = true;
    cfg.reward.online_update = true;
    push("+ normalization", &cfg);
    cfg.search.exploration = base.search.exploration;
    push("+ tuned exploration", &cfg);
    cfg.search.backprop = BackpropMode::Refined;
    push("+ refined backpropagation", &cfg);
    ladder
}

/// Runs every rung on the same dataset and instance seeds. Prior statistics
/// are computed once and shared by the normalized rungs.
pub fn run_ablation(base: &ExperimentConfig) -> Result<AblationReport, HarnessError> {
    base.validate()?;
    let instances = load_or_generate(&base.dataset)?;
    let mut with_norm = base.clone();
    with_norm.reward.normalize = true;
    let stats = resolve_stats(&with_norm)?;
    let mut rows: Vec<AblationRow> = Vec::new();
    for (i, (name, cfg)) in ablation_ladder(base).into_iter().enumerate() {
        log::info!("ablation rung {}: {name}", i + 1);
        let s = if cfg.reward.normalize { stats.as_ref() } else { None };
        let report = run_benchmark_on(&cfg, &instances, s)?;
        let o = &report.summary.overall;
        let prev = rows.last().map_or(o.accuracy, |r| r.accuracy);
        rows.push(AblationRow {
            rung: i + 1,
            name,
            accuracy: o.accuracy,
            delta: o.accuracy - prev,
            solved: o.solved,
            instances: o.instances,
            summary: report.summary,
        });
    }
    Ok(AblationReport { report: "ablation".into(), config: base.clone(), rows })
}
