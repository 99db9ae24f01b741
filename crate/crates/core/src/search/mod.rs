//! Monte Carlo tree search over plan steps.
//!
//! Each iteration selects a leaf by UCT, expands it with `b` sampled
//! actions scored by the composite reward, rolls the best new child forward
//! `m` greedy steps with `d` speculative candidates each, mixes the best
//! rollout value into that child and backpropagates a path value that
//! favours steady progress along the selected path.

mod tree;
mod uct;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BlockAction, BlocksError, Problem, Verifier};
use crate::decoding::{AncestralSampler, SpecStats, SpeculativeSampler};
use crate::policy::{
    generate_action, plan_context, ActionGrammar, Generation, PolicyError, PolicyHandle, TokenSampler, MAX_NEW_TOKENS,
};
use crate::reward::{RewardBreakdown, RewardError, RewardModel};
use crate::rng::substream;

pub use tree::{DecodeRecord, NodeId, NodeOrigin, SearchNode, SearchTree};
pub use uct::{mix_value, path_value, selection_counts, selection_entropy, uct_score, uct_select};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Blocks(#[from] BlocksError),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("verifier progress requested but no verifier supplied")]
    MissingVerifier,
}

/// How a completed iteration updates the selected path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackpropMode {
    /// Path value with clipped negative increments and a length penalty.
    #[default]
    Refined,
    /// Running mean of the rollout node's value.
    Mean,
}

/// Per-node scalar fed into the path value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProgressSource {
    /// The node's value `v`.
    #[default]
    Value,
    /// Verifier progress; for analysis runs only.
    Verifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Iterations `T`.
    pub max_iterations: usize,
    /// Stop when a selected node's value reaches this threshold `l`.
    pub value_threshold: Option<f64>,
    /// Stop when selection lands on a goal node.
    pub stop_at_goal: bool,
    /// Expansion branch `b`.
    pub branch: usize,
    /// Rollout steps `m`.
    pub rollout_steps: usize,
    /// Rollout candidates per step `d`.
    pub roll_branch: usize,
    /// Weight `α` of the node's own value when mixing in the rollout value.
    pub alpha: f64,
    /// Exploration constant `C`.
    pub exploration: f64,
    /// Per-node penalty `λ` in the path value.
    pub length_penalty: f64,
    /// Fixed depth limit; defaults to the minimum plan length plus `depth_slack`.
    pub depth_limit: Option<usize>,
    pub depth_slack: usize,
    pub backprop: BackpropMode,
    pub progress: ProgressSource,
    pub expansion_temperature: f64,
    /// Use speculative decoding for rollout candidates.
    pub speculative_rollout: bool,
    /// Draft tokens per speculative cycle `γ`.
    pub draft_len: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            value_threshold: None,
            stop_at_goal: false,
            branch: 4,
            rollout_steps: 4,
            roll_branch: 2,
            alpha: 0.5,
            exploration: 2.5,
            length_penalty: 0.1,
            depth_limit: None,
            depth_slack: 2,
            backprop: BackpropMode::Refined,
            progress: ProgressSource::Value,
            expansion_temperature: 1.0,
            speculative_rollout: true,
            draft_len: 4,
            max_new_tokens: MAX_NEW_TOKENS,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.into()));
        if self.max_iterations == 0 || self.branch == 0 || self.rollout_steps == 0 || self.roll_branch == 0 {
            return bad("max_iterations, branch, rollout_steps and roll_branch must be >= 1");
        }
        if self.roll_branch > self.branch {
            return bad("roll_branch must not exceed branch");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.exploration >= 0.0) || !(self.length_penalty >= 0.0) {
            return bad("exploration and length_penalty must be non-negative");
        }
        if !(self.expansion_temperature > 0.0) {
            return bad("expansion_temperature must be positive");
        }
        if self.draft_len == 0 || self.max_new_tokens == 0 {
            return bad("draft_len and max_new_tokens must be >= 1");
        }
        if self.value_threshold.is_some_and(|l| !l.is_finite()) {
            return bad("value_threshold must be finite");
        }
        Ok(())
    }
}

/// Expert, amateur (contrastive reward) and draft (speculative rollout)
/// models over one vocabulary. The amateur usually doubles as the draft.
#[derive(Clone)]
pub struct Policies {
    pub expert: PolicyHandle,
    pub amateur: PolicyHandle,
    pub draft: PolicyHandle,
}

impl Policies {
    pub fn shared(expert: PolicyHandle, amateur: PolicyHandle) -> Self {
        Self { expert, draft: amateur.clone(), amateur }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    #[default]
    Budget,
    Threshold,
    Goal,
    /// Nothing left to expand.
    Exhausted,
    /// The initial state already satisfies the goal.
    Trivial,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchMetrics {
    pub iterations: usize,
    /// Generation calls made while expanding.
    pub expansion_samples: usize,
    /// Generation calls made during rollouts.
    pub rollout_samples: usize,
    pub malformed: usize,
    /// Expansions in which no candidate parsed.
    pub all_malformed: usize,
    pub exit: ExitReason,
    pub tokens: u64,
    pub target_forwards: u64,
    pub draft_forwards: u64,
    pub speculative: SpecStats,
    /// `target_forwards × expert cost + draft_forwards × draft cost`.
    pub virtual_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub plan: Vec<BlockAction>,
    pub best_node: NodeId,
    pub tree: SearchTree,
    pub metrics: SearchMetrics,
}

/// Node ids and per-node scalars along one root-to-node path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub nodes: Vec<NodeId>,
    pub values: Vec<f64>,
    pub progress: Option<Vec<f64>>,
}

impl PathTrace {
    pub fn of(tree: &SearchTree, leaf: NodeId, verifier: Option<&Verifier>) -> Result<Self, BlocksError> {
        let nodes = tree.path(leaf);
        let values = tree.prefix_means(leaf);
        let progress = match verifier {
            Some(ver) => Some(nodes.iter().map(|&n| ver.progress(&tree.node(n).state)).collect::<Result<_, _>>()?),
            None => None,
        };
        Ok(Self { nodes, values, progress })
    }
}

const STREAM_EXPAND: u64 = 1;
const STREAM_ROLLOUT: u64 = 2;
const STREAM_REWARD: u64 = 3;

struct Candidate {
    generation: Generation,
    decode: DecodeRecord,
}

struct Searcher<'a> {
    problem: &'a Problem,
    cfg: &'a SearchConfig,
    policies: &'a Policies,
    reward: &'a mut RewardModel,
    verifier: Option<&'a Verifier>,
    grammar: ActionGrammar,
    depth_limit: usize,
    tree: SearchTree,
    metrics: SearchMetrics,
    iteration: usize,
}

/// Runs the search and returns the plan of the best node.
///
/// The plan is whatever the tree holds when the loop stops; callers verify
/// it against the environment.
pub fn search(
    problem: &Problem,
    cfg: &SearchConfig,
    policies: &Policies,
    reward: &mut RewardModel,
    verifier: Option<&Verifier>,
) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    if cfg.progress == ProgressSource::Verifier && verifier.is_none() {
        return Err(SearchError::MissingVerifier);
    }
    let depth_limit = match cfg.depth_limit {
        Some(d) => d,
        None => problem.min_length()? + cfg.depth_slack,
    };
    let grammar = ActionGrammar::new(policies.expert.vocabulary(), problem)?;
    let goal = problem.is_goal(&problem.initial);
    let mut s = Searcher {
        problem,
        cfg,
        policies,
        reward,
        verifier,
        grammar,
        depth_limit: depth_limit.max(1),
        tree: SearchTree::new(problem.initial.clone(), goal),
        metrics: SearchMetrics::default(),
        iteration: 0,
    };
    if goal {
        s.metrics.exit = ExitReason::Trivial;
    } else {
        s.run()?;
    }
    let best_node = s.tree.best_node();
    let plan = s.tree.actions(best_node);
    let expert_cost = policies.expert.cost_per_forward();
    let draft_cost = policies.draft.cost_per_forward();
    s.metrics.virtual_cost =
        s.metrics.target_forwards as f64 * expert_cost + s.metrics.draft_forwards as f64 * draft_cost;
    Ok(SearchOutcome { plan, best_node, tree: s.tree, metrics: s.metrics })
}

impl Searcher<'_> {
    fn run(&mut self) -> Result<(), SearchError> {
        self.metrics.exit = ExitReason::Budget;
        for i in 0..self.cfg.max_iterations {
            self.iteration = i;
            self.metrics.iterations += 1;
            let n = self.select();
            let node = self.tree.node(n);
            if self.cfg.value_threshold.is_some_and(|l| n != SearchTree::ROOT && node.v >= l) {
                self.metrics.exit = ExitReason::Threshold;
                break;
            }
            if node.goal && self.cfg.stop_at_goal {
                self.metrics.exit = ExitReason::Goal;
                break;
            }
            if n == SearchTree::ROOT && node.terminal {
                self.metrics.exit = ExitReason::Exhausted;
                break;
            }
            let leaf = if node.terminal { n } else { self.expand_and_roll(n)? };
            self.backpropagate(n, leaf)?;
        }
        Ok(())
    }

    /// Descends by UCT through expanded nodes, skipping malformed children.
    fn select(&mut self) -> NodeId {
        let mut cur = SearchTree::ROOT;
        loop {
            let node = self.tree.node(cur);
            if !node.expanded || node.terminal {
                return cur;
            }
            let kids: Vec<NodeId> = node.children.iter().copied().filter(|&c| !self.tree.node(c).malformed).collect();
            let stats: Vec<(f64, u64)> =
                kids.iter().map(|&c| (self.tree.node(c).v, self.tree.node(c).visits)).collect();
            match uct_select(&stats, node.visits, self.cfg.exploration) {
                Some(i) => cur = kids[i],
                None => {
                    self.tree.node_mut(cur).terminal = true;
                    return cur;
                }
            }
        }
    }

    /// Expands `n`, rolls out from its best child and mixes the rollout
    /// value into that child. Returns the node the iteration ends at.
    fn expand_and_roll(&mut self, n: NodeId) -> Result<NodeId, SearchError> {
        self.expand(n)?;
        let best = self.tree.node(n).children.iter().copied().filter(|&c| !self.tree.node(c).malformed).fold(
            None::<NodeId>,
            |b, c| match b {
                Some(b) if self.tree.node(b).v >= self.tree.node(c).v => Some(b),
                _ => Some(c),
            },
        );
        let Some(child) = best else {
            self.metrics.all_malformed += 1;
            self.tree.node_mut(n).terminal = true;
            return Ok(n);
        };
        let v_max = self.rollout(child)?;
        let node = self.tree.node_mut(child);
        node.v = mix_value(node.v, v_max, self.cfg.alpha);
        node.visits += 1;
        Ok(child)
    }

    fn expand(&mut self, n: NodeId) -> Result<(), SearchError> {
        let prefix = self.prefix(n)?;
        for j in 0..self.cfg.branch {
            let rng = substream(self.cfg.seed, &[STREAM_EXPAND, n as u64, j as u64]);
            let mut sampler = AncestralSampler {
                model: self.policies.expert.as_ref(),
                temperature: self.cfg.expansion_temperature,
                rng,
            };
            let generation = generate_action(
                self.policies.expert.vocabulary(),
                &self.grammar,
                &prefix,
                &mut sampler,
                self.cfg.max_new_tokens,
            )?;
            self.metrics.expansion_samples += 1;
            let tokens = generation.context.answer().len() as u64;
            let decode = DecodeRecord { tokens, target_forwards: tokens, draft_forwards: 0, speculative: None };
            self.insert(n, Candidate { generation, decode }, NodeOrigin::Expansion)?;
        }
        self.tree.node_mut(n).expanded = true;
        Ok(())
    }

    /// Greedy rollout from `start`; returns the best composite value seen.
    fn rollout(&mut self, start: NodeId) -> Result<f64, SearchError> {
        if self.tree.node(start).terminal {
            return Ok(self.tree.node(start).v);
        }
        let mut v_max: f64 = 0.0;
        let mut cur = start;
        for k in 0..self.cfg.rollout_steps {
            if self.tree.node(cur).terminal {
                break;
            }
            let prefix = self.prefix(cur)?;
            let mut best: Option<(NodeId, f64)> = None;
            for j in 0..self.cfg.roll_branch {
                let stream = [STREAM_ROLLOUT, self.iteration as u64, cur as u64, k as u64, j as u64];
                let cand = self.sample_rollout(&prefix, substream(self.cfg.seed, &stream))?;
                self.metrics.rollout_samples += 1;
                if let Some(id) = self.insert(cur, cand, NodeOrigin::Rollout)? {
                    let v = self.tree.node(id).v;
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((id, v));
                    }
                }
            }
            let Some((next, v)) = best else { break };
            v_max = v_max.max(v);
            cur = next;
        }
        Ok(v_max)
    }

    fn sample_rollout(&mut self, prefix: &[u32], rng: rand_chacha::ChaCha8Rng) -> Result<Candidate, SearchError> {
        let vocab = self.policies.expert.vocabulary();
        if self.cfg.speculative_rollout {
            let mut sampler = SpeculativeSampler::new(
                self.policies.expert.as_ref(),
                self.policies.draft.as_ref(),
                self.cfg.draft_len,
                rng,
            );
            let generation = generate_action(vocab, &self.grammar, prefix, &mut sampler, self.cfg.max_new_tokens)?;
            let s = sampler.stats;
            let decode = DecodeRecord {
                tokens: generation.context.answer().len() as u64,
                target_forwards: s.cycles,
                draft_forwards: s.drafted,
                speculative: Some(s),
            };
            self.metrics.speculative.merge(&s);
            Ok(Candidate { generation, decode })
        } else {
            let mut sampler = AncestralSampler { model: self.policies.expert.as_ref(), temperature: 1.0, rng };
            let generation = generate_action(
                vocab,
                &self.grammar,
                prefix,
                &mut sampler as &mut dyn TokenSampler,
                self.cfg.max_new_tokens,
            )?;
            let tokens = generation.context.answer().len() as u64;
            Ok(Candidate {
                generation,
                decode: DecodeRecord { tokens, target_forwards: tokens, draft_forwards: 0, speculative: None },
            })
        }
    }

    /// Adds a candidate under `parent` unless it duplicates an existing child
    /// or the parent is full. Returns the id of the matching well-formed
    /// child, whether new or existing.
    fn insert(&mut self, parent: NodeId, cand: Candidate, origin: NodeOrigin) -> Result<Option<NodeId>, SearchError> {
        self.metrics.tokens += cand.decode.tokens;
        self.metrics.target_forwards += cand.decode.target_forwards;
        self.metrics.draft_forwards += cand.decode.draft_forwards;
        let state = &self.tree.node(parent).state;
        let next = cand.generation.action.and_then(|a| state.apply(&a).ok().map(|s| (a, s)));
        let full = self.tree.node(parent).children.len() >= self.cfg.branch;
        let Some((action, next_state)) = next else {
            self.metrics.malformed += 1;
            let has_dead = self.tree.node(parent).children.iter().any(|&c| self.tree.node(c).malformed);
            if !has_dead && !full {
                let floor = self.reward.malformed_floor();
                let st = self.tree.node(parent).state.clone();
                self.tree.add_child(parent, None, st, floor, true, false, origin, None, cand.decode);
            }
            return Ok(None);
        };
        if let Some(existing) = self.tree.child_with_action(parent, &action) {
            return Ok(Some(existing));
        }
        if full {
            return Ok(None);
        }
        let breakdown: RewardBreakdown = self.reward.evaluate(
            self.policies.expert.as_ref(),
            self.policies.amateur.as_ref(),
            &cand.generation.context,
        )?;
        let goal = self.problem.is_goal(&next_state);
        let depth = self.tree.node(parent).depth + 1;
        let terminal = goal || depth >= self.depth_limit;
        let v = breakdown.composite;
        Ok(Some(self.tree.add_child(
            parent,
            Some(action),
            next_state,
            v,
            terminal,
            goal,
            origin,
            Some(breakdown),
            cand.decode,
        )))
    }

    fn prefix(&self, n: NodeId) -> Result<Vec<u32>, SearchError> {
        let history = self.tree.actions(n);
        Ok(plan_context(self.policies.expert.vocabulary(), &self.grammar, self.problem, &history)?)
    }

    /// Propagates from the iteration's end node up through `n` and its
    /// ancestors as a running mean.
    fn backpropagate(&mut self, n: NodeId, leaf: NodeId) -> Result<(), SearchError> {
        let value = match self.cfg.backprop {
            BackpropMode::Mean => self.tree.node(leaf).v,
            BackpropMode::Refined => {
                let trace = PathTrace::of(&self.tree, leaf, self.verifier)?;
                let p = match self.cfg.progress {
                    ProgressSource::Value => trace.values,
                    ProgressSource::Verifier => trace.progress.expect("verifier checked at entry"),
                };
                path_value(&p, self.cfg.length_penalty)
            }
        };
        backpropagate(&mut self.tree, n, value);
        Ok(())
    }
}

/// Folds `value` into `n` and every ancestor: `N += 1`, and `v` becomes the
/// running mean of the values propagated through the node.
pub fn backpropagate(tree: &mut SearchTree, n: NodeId, value: f64) {
    for id in tree.path(n) {
        let node = tree.node_mut(id);
        node.visits += 1;
        if node.visits == 1 {
            node.v = value;
        } else {
            node.v += (value - node.v) / node.visits as f64;
        }
    }
}

/// Substream for the reward model's random factor in one search.
pub fn reward_stream(seed: u64) -> rand_chacha::ChaCha8Rng {
    substream(seed, &[STREAM_REWARD])
}
