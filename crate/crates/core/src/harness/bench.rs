use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_policies, load_or_generate, run_prior_phase, ExperimentConfig, HarnessError, Instance};
use crate::blocks::Verifier;
use crate::reward::{FactorKind, PriorStats, RewardModel};
use crate::rng::derive_seed;
use crate::search::{reward_stream, search, ExitReason, NodeOrigin, ProgressSource, SearchMetrics, SearchOutcome};

const STREAM_SEARCH: u64 = 30;

/// One scored parent→child edge with verifier progress on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub reward: f64,
    pub raw: BTreeMap<FactorKind, f64>,
    pub p_parent: f64,
    pub p_child: f64,
    pub delta: f64,
    /// The action lies on some shortest plan from the parent state.
    pub optimal: bool,
    pub origin: NodeOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub steps: usize,
    pub blocks: usize,
    pub seed: u64,
    /// Re-verified against the environment, whatever the tree claims.
    pub solved: bool,
    pub plan: Vec<String>,
    pub best_value: f64,
    pub nodes: usize,
    pub exit: ExitReason,
    pub metrics: SearchMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<Edge>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    /// Step count, or `all`.
    pub group: String,
    pub instances: usize,
    pub solved: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub groups: Vec<GroupRow>,
    pub overall: GroupRow,
}

impl BenchSummary {
    pub fn of(records: &[RunRecord]) -> Self {
        let row = |group: String, rs: &[&RunRecord]| {
            let solved = rs.iter().filter(|r| r.solved).count();
            let accuracy = if rs.is_empty() { 0.0 } else { solved as f64 / rs.len() as f64 };
            GroupRow { group, instances: rs.len(), solved, accuracy }
        };
        let mut by_steps: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            by_steps.entry(r.steps).or_default().push(r);
        }
        let groups = by_steps.iter().map(|(s, rs)| row(s.to_string(), rs)).collect();
        let all: Vec<&RunRecord> = records.iter().collect();
        Self { groups, overall: row("all".into(), &all) }
    }

    /// CSV rows: every group, then the overall row.
    pub fn rows(&self) -> Vec<GroupRow> {
        self.groups.iter().cloned().chain(std::iter::once(self.overall.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub report: String,
    pub config: ExperimentConfig,
    pub summary: BenchSummary,
    pub records: Vec<RunRecord>,
}

impl BenchReport {
    pub fn edges(&self) -> Vec<Edge> {
        self.records.iter().flat_map(|r| r.edges.iter().flatten().cloned()).collect()
    }
}

/// Search seed of one instance; depends on the id, not its position, so
/// subsets and reorderings of a dataset keep their seeds.
pub fn instance_seed(seed: u64, id: &str) -> u64 {
    let fnv = id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive_seed(seed, &[STREAM_SEARCH, fnv])
}

/// Prior statistics for a run: none without normalization, otherwise the
/// configured file or a fresh prior phase.
pub fn resolve_stats(cfg: &ExperimentConfig) -> Result<Option<PriorStats>, HarnessError> {
    if !cfg.reward.normalize {
        return Ok(None);
    }
    match &cfg.prior.stats_path {
        Some(p) => Ok(Some(PriorStats::load(p)?)),
        None => Ok(Some(run_prior_phase(cfg)?.stats)),
    }
}

/// Searches one instance and summarizes the outcome.
pub fn solve_instance(
    cfg: &ExperimentConfig,
    inst: &Instance,
    stats: Option<&PriorStats>,
) -> Result<(SearchOutcome, RunRecord), HarnessError> {
    let problem = &inst.problem;
    let (policies, oracle) = build_policies(&cfg.backend, problem)?;
    let need_verifier = cfg.analysis.verifier || cfg.search.progress == ProgressSource::Verifier;
    let verifier = match (need_verifier, oracle) {
        (false, _) => None,
        (true, Some(o)) => Some(Verifier::from_oracle((*o).clone(), problem)?),
        (true, None) => Some(Verifier::new(problem)?),
    };
    let seed = instance_seed(cfg.seed, &inst.id);
    let search_cfg = crate::search::SearchConfig { seed, ..cfg.search.clone() };
    let mut reward = RewardModel::new(cfg.reward.clone(), stats.cloned(), reward_stream(seed))?;
    let outcome = search(problem, &search_cfg, &policies, &mut reward, verifier.as_ref())?;
    let edges = match (&verifier, cfg.analysis.verifier) {
        (Some(ver), true) => Some(collect_edges(&outcome, ver, cfg.analysis.literal_delta_sign)?),
        _ => None,
    };
    let record = RunRecord {
        id: inst.id.clone(),
        steps: inst.steps,
        blocks: problem.blocks.len(),
        seed,
        solved: problem.solves(&outcome.plan),
        plan: outcome.plan.iter().map(|a| a.describe(&problem.blocks)).collect(),
        best_value: outcome.tree.node(outcome.best_node).v,
        nodes: outcome.tree.len(),
        exit: outcome.metrics.exit,
        metrics: outcome.metrics.clone(),
        edges,
    };
    Ok((outcome, record))
}

fn collect_edges(outcome: &SearchOutcome, ver: &Verifier, literal_sign: bool) -> Result<Vec<Edge>, HarnessError> {
    let tree = &outcome.tree;
    let mut out = Vec::new();
    for node in &tree.nodes {
        let (Some(parent), Some(action), Some(reward)) = (node.parent, node.action, &node.reward) else {
            continue;
        };
        let parent_state = &tree.node(parent).state;
        let p_parent = ver.progress(parent_state)?;
        let p_child = ver.progress(&node.state)?;
        out.push(Edge {
            reward: reward.composite,
            raw: reward.raw.clone(),
            p_parent,
            p_child,
            delta: if literal_sign { p_parent - p_child } else { p_child - p_parent },
            optimal: ver.oracle().is_optimal(parent_state, &action),
            origin: node.origin,
        });
    }
    Ok(out)
}

/// Runs every instance in parallel; records keep dataset order.
pub fn run_benchmark_on(
    cfg: &ExperimentConfig,
    instances: &[Instance],
    stats: Option<&PriorStats>,
) -> Result<BenchReport, HarnessError> {
    run_benchmark_streaming(cfg, instances, stats, &mut |_| Ok(()))
}

/// Instances per parallel batch handed to the record sink.
const BATCH: usize = 32;

/// Like [`run_benchmark_on`], passing each finished batch of records to
/// `sink` in dataset order, so an interrupted run leaves a usable prefix.
pub fn run_benchmark_streaming(
    cfg: &ExperimentConfig,
    instances: &[Instance],
    stats: Option<&PriorStats>,
    sink: &mut dyn FnMut(&[RunRecord]) -> Result<(), HarnessError>,
) -> Result<BenchReport, HarnessError> {
    let pool = cfg.jobs.map(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build()).transpose()?;
    let mut records = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(BATCH) {
        let run = || chunk.par_iter().map(|inst| solve_instance(cfg, inst, stats).map(|(_, r)| r)).collect::<Vec<_>>();
        let results = match &pool {
            Some(p) => p.install(run),
            None => run(),
        };
        let batch = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        sink(&batch)?;
        records.extend(batch);
    }
    Ok(BenchReport { report: "bench".into(), config: cfg.clone(), summary: BenchSummary::of(&records), records })
}

/// Loads or generates the dataset, resolves prior statistics and runs it.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchReport, HarnessError> {
    cfg.validate()?;
    let instances = load_or_generate(&cfg.dataset)?;
    let stats = resolve_stats(cfg)?;
    run_benchmark_on(cfg, &instances, stats.as_ref())
}
