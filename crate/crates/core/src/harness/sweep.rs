use serde::{Deserialize, Serialize};

use super::{load_or_generate, resolve_stats, run_benchmark_on, ExperimentConfig, GroupRow, HarnessError};
use crate::corr::spearman;

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Exploration,
    Iterations,
    Alpha,
    LengthPenalty,
    WeightJsd,
    WeightLl,
    WeightSe,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Exploration => "exploration",
            SweepParam::Iterations => "iterations",
            SweepParam::Alpha => "alpha",
            SweepParam::LengthPenalty => "length_penalty",
            SweepParam::WeightJsd => "weight_jsd",
            SweepParam::WeightLl => "weight_ll",
            SweepParam::WeightSe => "weight_se",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SweepParam::Exploration,
            SweepParam::Iterations,
            SweepParam::Alpha,
            SweepParam::LengthPenalty,
            SweepParam::WeightJsd,
            SweepParam::WeightLl,
            SweepParam::WeightSe,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    /// `base` with the parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = base.clone();
        match self {
            SweepParam::Exploration => cfg.search.exploration = value,
            SweepParam::Iterations => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::Config(format!("iterations must be a positive integer, got {value}")));
                }
                cfg.search.max_iterations = value as usize;
            }
            SweepParam::Alpha => cfg.search.alpha = value,
            SweepParam::LengthPenalty => cfg.search.length_penalty = value,
            SweepParam::WeightJsd => cfg.reward.weights.jsd = value,
            SweepParam::WeightLl => cfg.reward.weights.ll = value,
            SweepParam::WeightSe => cfg.reward.weights.se = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
    pub solved: usize,
    pub instances: usize,
    pub groups: Vec<GroupRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report: String,
    pub config: ExperimentConfig,
    pub parameter: SweepParam,
    pub grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Spearman correlation of grid value against accuracy.
    pub trend: Option<f64>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    parameter: &'a str,
    value: f64,
    accuracy: f64,
    solved: usize,
    instances: usize,
}

impl SweepReport {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), HarnessError> {
        let rows: Vec<CsvRow> = self
            .rows
            .iter()
            .map(|r| CsvRow {
                parameter: self.parameter.name(),
                value: r.value,
                accuracy: r.accuracy,
                solved: r.solved,
                instances: r.instances,
            })
            .collect();
        super::write_csv(path, &rows)
    }
}

/// Runs the benchmark once per grid value on one dataset.
pub fn run_sweep(base: &ExperimentConfig, param: SweepParam, grid: &[f64]) -> Result<SweepReport, HarnessError> {
    base.validate()?;
    if grid.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    let configs = grid.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>, _>>()?;
    let instances = load_or_generate(&base.dataset)?;
    let stats = resolve_stats(base)?;
    let mut rows = Vec::new();
    for (cfg, &value) in configs.iter().zip(grid) {
        log::info!("sweep {param} = {value}");
        let report = run_benchmark_on(cfg, &instances, stats.as_ref())?;
        let o = &report.summary.overall;
        rows.push(SweepRow {
            value,
            accuracy: o.accuracy,
            solved: o.solved,
            instances: o.instances,
            groups: report.summary.groups,
        });
    }
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let trend = spearman(grid, &acc);
    Ok(SweepReport { report: "sweep".into(), config: base.clone(), parameter: param, grid: grid.to_vec(), rows, trend })
}
