use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{load_or_generate, resolve_stats, run_benchmark_on, ExperimentConfig, HarnessError};
use crate::decoding::SpecStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub mode: String,
    pub instances: usize,
    /// Generation calls, expansion plus rollout.
    pub nodes: usize,
    pub rollout_nodes: usize,
    pub tokens: u64,
    pub wall_secs: f64,
    pub mean_wall_ms_per_node: f64,
    pub tokens_per_sec: f64,
    pub acceptance_rate: Option<f64>,
    pub virtual_cost: f64,
    pub virtual_cost_per_node: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub report: String,
    pub config: ExperimentConfig,
    pub expert: String,
    pub draft: String,
    pub rows: Vec<SpeedRow>,
    /// Per-node virtual cost reduction of speculative over plain rollouts,
    /// as a percentage speedup.
    pub virtual_speedup_pct: f64,
    pub wall_speedup_pct: f64,
}

/// Runs the benchmark with plain and speculative rollouts under the same
/// seeds. Wall times vary between runs; everything else is deterministic.
pub fn run_speed(cfg: &ExperimentConfig) -> Result<SpeedReport, HarnessError> {
    cfg.validate()?;
    let instances = load_or_generate(&cfg.dataset)?;
    let stats = resolve_stats(cfg)?;
    let mut rows = Vec::new();
    for speculative in [false, true] {
        let mut c = cfg.clone();
        c.search.speculative_rollout = speculative;
        let start = Instant::now();
        let report = run_benchmark_on(&c, &instances, stats.as_ref())?;
        let wall = start.elapsed().as_secs_f64();
        let mut spec = SpecStats::default();
        let (mut nodes, mut rollout_nodes, mut tokens, mut cost) = (0, 0, 0, 0.0);
        for r in &report.records {
            let m = &r.metrics;
            nodes += m.expansion_samples + m.rollout_samples;
            rollout_nodes += m.rollout_samples;
            tokens += m.tokens;
            cost += m.virtual_cost;
            spec.merge(&m.speculative);
        }
        let per_node = |x: f64| if nodes == 0 { 0.0 } else { x / nodes as f64 };
        rows.push(SpeedRow {
            mode: if speculative { "speculative" } else { "plain" }.into(),
            instances: instances.len(),
            nodes,
            rollout_nodes,
            tokens,
            wall_secs: wall,
            mean_wall_ms_per_node: per_node(wall * 1e3),
            tokens_per_sec: if wall > 0.0 { tokens as f64 / wall } else { 0.0 },
            acceptance_rate: (spec.drafted > 0).then(|| spec.acceptance_rate()),
            virtual_cost: cost,
            virtual_cost_per_node: per_node(cost),
            accuracy: report.summary.overall.accuracy,
        });
    }
    let gain = |plain: f64, fast: f64| {
        if fast > 0.0 {
            (plain / fast - 1.0) * 100.0
        } else {
            0.0
        }
    };
    let (plain, fast) = (&rows[0], &rows[1]);
    Ok(SpeedReport {
        report: "speed".into(),
        config: cfg.clone(),
        expert: fidelity_label(cfg, false),
        draft: fidelity_label(cfg, true),
        virtual_speedup_pct: gain(plain.virtual_cost_per_node, fast.virtual_cost_per_node),
        wall_speedup_pct: gain(plain.mean_wall_ms_per_node, fast.mean_wall_ms_per_node),
        rows,
    })
}

fn fidelity_label(cfg: &ExperimentConfig, draft: bool) -> String {
    use super::BackendKind;
    let b = &cfg.backend;
    match (b.kind, draft) {
        (BackendKind::Synthetic, false) => format!("synthetic(fidelity={})", b.expert.fidelity),
        (BackendKind::Synthetic, true) => {
            let d = b.draft.as_ref().unwrap_or(&b.amateur);
            format!("synthetic(fidelity={}, cost={})", d.fidelity, d.cost)
        }
        (BackendKind::Remote, false) => format!("remote({})", b.remote.expert.model.as_deref().unwrap_or("default")),
        (BackendKind::Remote, true) => {
            let d = b.remote.draft.as_ref().unwrap_or(&b.remote.amateur);
            format!("remote({})", d.model.as_deref().unwrap_or("default"))
        }
    }
}
