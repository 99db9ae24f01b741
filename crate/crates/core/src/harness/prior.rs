use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_policies, with_pool, ExperimentConfig, HarnessError};
use crate::blocks::{generate_instance, BlockAction, Problem};
use crate::decoding::AncestralSampler;
use crate::policy::{generate_action, plan_context, ActionGrammar, Generation, Policy};
use crate::reward::{CompositeRewardConfig, FactorKind, FactorWeights, PriorStats, RewardError, RewardModel};
use crate::rng::substream;
use crate::search::Policies;

/// Fewest scored samples the prior phase accepts.
pub const MIN_PRIOR_SAMPLES: usize = 30;

const STREAM_PRIOR_PROBLEM: u64 = 20;
const STREAM_PRIOR_SAMPLE: u64 = 21;
const STREAM_PRIOR_STEP: u64 = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorReport {
    pub report: String,
    pub config: ExperimentConfig,
    /// Scored samples per factor.
    pub samples: BTreeMap<FactorKind, usize>,
    /// Samples dropped because the generation did not parse to a legal action.
    pub malformed: usize,
    pub stats: PriorStats,
}

/// The prior problem pool: `M` instances cycling through the dataset's step
/// groups, drawn from the prior seed.
pub fn prior_problems(cfg: &ExperimentConfig) -> Result<Vec<Problem>, HarnessError> {
    let gen = cfg.dataset.generator();
    let steps: Vec<usize> = cfg.dataset.groups.iter().map(|g| g.steps).collect();
    if steps.is_empty() {
        return Err(HarnessError::Config("prior phase needs dataset step groups".into()));
    }
    (0..cfg.reward.prior_problems)
        .map(|i| {
            let mut rng = substream(cfg.prior.seed, &[STREAM_PRIOR_PROBLEM, i as u64]);
            Ok(generate_instance(steps[i % steps.len()], &gen, &mut rng)?)
        })
        .collect()
}

/// Samples `N` expert steps per prior problem from random points along an
/// expert rollout and records every scored factor's raw value, then clusters
/// each factor.
pub fn run_prior_phase(cfg: &ExperimentConfig) -> Result<PriorReport, HarnessError> {
    cfg.validate()?;
    let r = &cfg.reward;
    let planned = r.prior_problems * r.prior_solutions;
    if planned < MIN_PRIOR_SAMPLES {
        return Err(RewardError::InsufficientSamples { needed: MIN_PRIOR_SAMPLES, got: planned }.into());
    }
    let problems = prior_problems(cfg)?;
    let per_problem = with_pool(cfg.jobs, || {
        problems.par_iter().enumerate().map(|(i, p)| sample_problem(cfg, i, p)).collect::<Vec<_>>()
    })?;
    let mut samples: BTreeMap<FactorKind, Vec<f64>> = BTreeMap::new();
    let mut malformed = 0;
    for res in per_problem {
        let (rows, bad) = res?;
        malformed += bad;
        for row in rows {
            for (k, v) in row {
                samples.entry(k).or_default().push(v);
            }
        }
    }
    let got = samples.values().map(Vec::len).min().unwrap_or(0);
    if got < MIN_PRIOR_SAMPLES {
        return Err(RewardError::InsufficientSamples { needed: MIN_PRIOR_SAMPLES, got }.into());
    }
    let stats = PriorStats::from_samples(&samples, r.clusters, r.separation_factor)?;
    Ok(PriorReport {
        report: "prior-stats".into(),
        config: cfg.clone(),
        samples: samples.iter().map(|(&k, v)| (k, v.len())).collect(),
        malformed,
        stats,
    })
}

type FactorRow = BTreeMap<FactorKind, f64>;

fn sample_problem(
    cfg: &ExperimentConfig,
    i: usize,
    problem: &Problem,
) -> Result<(Vec<FactorRow>, usize), HarnessError> {
    let (policies, _) = build_policies(&cfg.backend, problem)?;
    let grammar = ActionGrammar::new(policies.expert.vocabulary(), problem)?;
    let scorer_cfg = CompositeRewardConfig {
        weights: FactorWeights { jsd: 1.0, ll: 1.0, se: 1.0, random: 0.0 },
        normalize: false,
        online_update: false,
        ..cfg.reward.clone()
    };
    let scorer = RewardModel::new(scorer_cfg, None, substream(0, &[]))?;
    let min_len = problem.min_length()?.max(1);
    let mut rows = Vec::new();
    let mut malformed = 0;
    for j in 0..cfg.reward.prior_solutions {
        let (i, j) = (i as u64, j as u64);
        let depth = substream(cfg.prior.seed, &[STREAM_PRIOR_SAMPLE, i, j]).gen_range(0..min_len);
        let mut history: Vec<BlockAction> = Vec::new();
        let mut state = problem.initial.clone();
        for step in 0..depth {
            let rng = substream(cfg.prior.seed, &[STREAM_PRIOR_STEP, i, j, step as u64]);
            let g = sample_step(cfg, &policies, &grammar, problem, &history, rng)?;
            match g.action.and_then(|a| state.apply(&a).ok().map(|s| (a, s))) {
                Some((a, s)) => {
                    history.push(a);
                    state = s;
                }
                None => break,
            }
        }
        let rng = substream(cfg.prior.seed, &[STREAM_PRIOR_STEP, i, j, u64::MAX]);
        let g = sample_step(cfg, &policies, &grammar, problem, &history, rng)?;
        if g.action.is_none_or(|a| state.apply(&a).is_err()) {
            malformed += 1;
            continue;
        }
        rows.push(scorer.raw_factors(policies.expert.as_ref(), policies.amateur.as_ref(), &g.context)?);
    }
    Ok((rows, malformed))
}

fn sample_step(
    cfg: &ExperimentConfig,
    policies: &Policies,
    grammar: &ActionGrammar,
    problem: &Problem,
    history: &[BlockAction],
    rng: rand_chacha::ChaCha8Rng,
) -> Result<Generation, HarnessError> {
    let expert: &dyn Policy = policies.expert.as_ref();
    let prefix = plan_context(expert.vocabulary(), grammar, problem, history)?;
    let mut sampler = AncestralSampler { model: expert, temperature: cfg.search.expansion_temperature, rng };
    Ok(generate_action(expert.vocabulary(), grammar, &prefix, &mut sampler, cfg.search.max_new_tokens)?)
}
