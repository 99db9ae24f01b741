use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_context, ActionGrammar, Policy, PolicyError, TokenDistribution, TokenId, Vocabulary};
use crate::blocks::{BlockAction, BlocksState, DistanceOracle, Problem};

/// Knobs of an oracle-tilted synthetic language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPolicyConfig {
    /// Exponent `1/temperature` applied to next-token masses.
    pub temperature: f64,
    /// Action-level mass placed on plan-optimal actions.
    pub fidelity: f64,
    /// Probability of answering "good" after an optimal action (and "bad"
    /// after a suboptimal one).
    pub self_eval_fidelity: f64,
    /// Relative cost of one forward pass.
    pub cost: f64,
}

impl Default for SyntheticPolicyConfig {
    fn default() -> Self {
        Self { temperature: 1.0, fidelity: 0.7, self_eval_fidelity: 0.8, cost: 1.0 }
    }
}

impl SyntheticPolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.temperature > 0.0) {
            return Err(PolicyError::InvalidDistribution("temperature must be positive".into()));
        }
        if !unit(self.fidelity) || !unit(self.self_eval_fidelity) {
            return Err(PolicyError::InvalidDistribution("fidelities must lie in [0, 1]".into()));
        }
        if !(self.cost >= 0.0) {
            return Err(PolicyError::InvalidDistribution("cost must be non-negative".into()));
        }
        Ok(())
    }
}

/// Synthetic model bound to one problem.
///
/// At each action it mixes a uniform distribution over the plan-optimal
/// actions (weight `fidelity`) with a uniform distribution over all legal
/// actions, projects that onto the next word, and tempers the word masses.
/// After the self-evaluation question it answers "good"/"bad" according to
/// `self_eval_fidelity`. Anything it cannot parse gets a uniform
/// distribution over the whole vocabulary.
#[derive(Debug)]
pub struct SyntheticPolicy {
    name: String,
    cfg: SyntheticPolicyConfig,
    problem: Arc<Problem>,
    oracle: Arc<DistanceOracle>,
    vocab: Vocabulary,
    grammar: ActionGrammar,
    question: Vec<TokenId>,
    good: TokenId,
    bad: TokenId,
    forwards: AtomicU64,
}

enum Position<'a> {
    Action { state: BlocksState, partial: &'a [TokenId] },
    SelfEval { before: BlocksState, action: BlockAction },
    Unknown,
}

/// Word-level self-evaluation question appended after an action.
pub const SELF_EVAL_QUESTION: &str = "Is this answer correct/good?";

impl SyntheticPolicy {
    pub fn new(
        name: impl Into<String>,
        cfg: SyntheticPolicyConfig,
        problem: Arc<Problem>,
        oracle: Arc<DistanceOracle>,
    ) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let vocab = Vocabulary::blocksworld(&problem.blocks)?;
        let grammar = ActionGrammar::new(&vocab, &problem)?;
        let question = vocab.tokenize(SELF_EVAL_QUESTION)?;
        let good = vocab.expect_id("good");
        let bad = vocab.expect_id("bad");
        Ok(Self {
            name: name.into(),
            cfg,
            problem,
            oracle,
            vocab,
            grammar,
            question,
            good,
            bad,
            forwards: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &SyntheticPolicyConfig {
        &self.cfg
    }

    pub fn grammar(&self) -> &ActionGrammar {
        &self.grammar
    }

    fn locate<'a>(&self, tokens: &'a [TokenId]) -> Position<'a> {
        let nl = self.grammar.newline();
        let Some(marker) = tokens.iter().rposition(|&t| t == self.grammar.plan_marker()) else {
            return Position::Unknown;
        };
        let mut rest = &tokens[marker + 1..];
        if rest.first() == Some(&nl) {
            rest = &rest[1..];
        }
        let mut state = self.problem.initial.clone();
        let mut last: Option<(BlocksState, BlockAction)> = None;
        while let Some(end) = rest.iter().position(|&t| t == nl) {
            let Some(action) = self.grammar.parse(&rest[..end]) else {
                return Position::Unknown;
            };
            let Ok(next) = state.apply(&action) else {
                return Position::Unknown;
            };
            last = Some((std::mem::replace(&mut state, next), action));
            rest = &rest[end + 1..];
        }
        if rest.starts_with(&self.question) {
            return match last {
                Some((before, action)) if rest.len() == self.question.len() => Position::SelfEval { before, action },
                _ => Position::Unknown,
            };
        }
        Position::Action { state, partial: rest }
    }

    fn action_weights(&self, state: &BlocksState) -> Vec<(BlockAction, f64)> {
        let legal = state.legal_actions();
        let optimal = self.oracle.optimal_actions(state);
        let f = if optimal.is_empty() { 0.0 } else { self.cfg.fidelity };
        let n_legal = legal.len() as f64;
        legal
            .into_iter()
            .map(|a| {
                let on_plan = if optimal.contains(&a) { f / optimal.len() as f64 } else { 0.0 };
                (a, on_plan + (1.0 - f) / n_legal)
            })
            .collect()
    }

    fn compute(&self, tokens: &[TokenId]) -> Result<TokenDistribution, PolicyError> {
        check_context(tokens)?;
        let n = self.vocab.len();
        match self.locate(tokens) {
            Position::Unknown => Ok(TokenDistribution::uniform(n)),
            Position::SelfEval { before, action } => {
                let sef = self.cfg.self_eval_fidelity;
                let p_good = if self.oracle.is_optimal(&before, &action) { sef } else { 1.0 - sef };
                let mut probs = vec![0.0; n];
                probs[self.good as usize] = p_good;
                probs[self.bad as usize] = 1.0 - p_good;
                TokenDistribution::new(probs)
            }
            Position::Action { state, partial } => {
                let mut mass = vec![0.0; n];
                for (a, w) in self.action_weights(&state) {
                    let spelled = self.grammar.tokens(&a);
                    if spelled.starts_with(partial) {
                        let next = spelled.get(partial.len()).copied().unwrap_or(self.grammar.newline());
                        mass[next as usize] += w;
                    }
                }
                if mass.iter().all(|&m| m == 0.0) {
                    return Ok(TokenDistribution::uniform(n));
                }
                let inv_t = 1.0 / self.cfg.temperature;
                for m in mass.iter_mut().filter(|m| **m > 0.0) {
                    *m = m.powf(inv_t);
                }
                TokenDistribution::from_weights(mass)
            }
        }
    }
}

impl Policy for SyntheticPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, tokens: &[TokenId]) -> Result<TokenDistribution, PolicyError> {
        self.forwards.fetch_add(1, Ordering::Relaxed);
        self.compute(tokens)
    }

    fn distributions(&self, tokens: &[TokenId], start: usize) -> Result<Vec<TokenDistribution>, PolicyError> {
        self.forwards.fetch_add(1, Ordering::Relaxed);
        (start..=tokens.len()).map(|i| self.compute(&tokens[..i])).collect()
    }

    fn cost_per_forward(&self) -> f64 {
        self.cfg.cost
    }

    fn forwards(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{sample_problem, ActionKind};
    use crate::policy::plan_context;

    fn policy(fidelity: f64, temperature: f64) -> SyntheticPolicy {
        let p = Arc::new(sample_problem());
        let oracle = Arc::new(DistanceOracle::new(&p).unwrap());
        let cfg = SyntheticPolicyConfig { fidelity, temperature, ..Default::default() };
        SyntheticPolicy::new("test", cfg, p, oracle).unwrap()
    }

    #[test]
    fn fidelity_one_spells_the_optimal_action() {
        let m = policy(1.0, 1.0);
        let p = sample_problem();
        let mut ctx = plan_context(&m.vocab, &m.grammar, &p, &[]).unwrap();
        let mut out = Vec::new();
        loop {
            let d = m.next_distribution(&ctx).unwrap();
            let t = d.argmax();
            assert!((d.prob(t) - 1.0).abs() < 1e-12);
            ctx.push(t);
            out.push(t);
            if t == m.grammar.newline() {
                break;
            }
        }
        let a = m.grammar.parse(&out).unwrap();
        assert_eq!(a.kind, ActionKind::Unstack);
    }

    #[test]
    fn high_temperature_approaches_uniform_over_legal_tokens() {
        let m = policy(0.9, 1e9);
        let p = sample_problem();
        let ctx = plan_context(&m.vocab, &m.grammar, &p, &[]).unwrap();
        let d = m.next_distribution(&ctx).unwrap();
        // legal first words from the initial state: pick (red, yellow) and unstack (blue)
        let support: Vec<_> = d.probs().iter().filter(|&&x| x > 0.0).collect();
        assert_eq!(support.len(), 2);
        assert!(support.iter().all(|&&x| (x - 0.5).abs() < 1e-6));
    }

    #[test]
    fn garbage_context_is_uniform() {
        let m = policy(0.9, 1.0);
        let bad = m.vocab.tokenize("[PLAN]\nthe the").unwrap();
        let d = m.next_distribution(&bad).unwrap();
        assert!((d.prob(0) - 1.0 / m.vocab.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn self_eval_answers_by_optimality() {
        let m = SyntheticPolicy::new(
            "se",
            SyntheticPolicyConfig { self_eval_fidelity: 0.9, ..Default::default() },
            Arc::new(sample_problem()),
            Arc::new(DistanceOracle::new(&sample_problem()).unwrap()),
        )
        .unwrap();
        let p = sample_problem();
        let (r, b, o) = (p.block("red").unwrap(), p.block("blue").unwrap(), p.block("orange").unwrap());
        let ask = |a: BlockAction| {
            let mut ctx = plan_context(&m.vocab, &m.grammar, &p, &[a]).unwrap();
            ctx.extend(m.vocab.tokenize(SELF_EVAL_QUESTION).unwrap());
            m.next_distribution(&ctx).unwrap().prob(m.good)
        };
        assert!((ask(BlockAction::unstack(b, o)) - 0.9).abs() < 1e-12);
        assert!((ask(BlockAction::pick_up(r)) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn forward_counter_counts_batches_once() {
        let m = policy(0.5, 1.0);
        let p = sample_problem();
        let ctx = plan_context(&m.vocab, &m.grammar, &p, &[]).unwrap();
        m.distributions(&ctx, ctx.len() - 3).unwrap();
        assert_eq!(m.forwards(), 1);
    }
}
