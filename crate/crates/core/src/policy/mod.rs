//! Token-level language-model interface.
//!
//! A [`Policy`] maps a token context to a [`TokenDistribution`] over its
//! [`Vocabulary`]. Expert, amateur and draft roles are just different
//! policies over the same vocabulary. Two backends are provided: the
//! oracle-tilted [`SyntheticPolicy`] for desk-scale experiments and
//! [`RemotePolicy`], a client for completions-style log-probability APIs.

mod remote;
mod scripted;
mod synthetic;
mod vocab;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BlockAction, BlocksError};

pub use remote::{RemoteConfig, RemotePolicy, ENV_API_KEY, ENV_API_URL};
pub use scripted::ScriptedPolicy;
pub use synthetic::{SyntheticPolicy, SyntheticPolicyConfig, SELF_EVAL_QUESTION};
pub use vocab::{plan_context, ActionGrammar, TokenId, Vocabulary, NEWLINE, PLAN_MARKER};

/// Maximum context length accepted by any backend.
pub const MAX_SEQ_LEN: usize = 32_768;
/// Generation budget per action.
pub const MAX_NEW_TOKENS: usize = 200;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("context of {len} tokens exceeds the maximum of {max}")]
    ContextTooLong { len: usize, max: usize },
    #[error("empty context")]
    EmptyContext,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Blocks(#[from] BlocksError),
}

/// Normalized probability vector over a vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self, PolicyError> {
        if probs.is_empty() {
            return Err(PolicyError::InvalidDistribution("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(PolicyError::InvalidDistribution("negative or non-finite entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(PolicyError::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self, PolicyError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(PolicyError::InvalidDistribution(format!("weights sum to {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights)
    }

    /// Softmax of log-scores; `-inf` entries get zero mass.
    pub fn from_logits(logits: &[f64]) -> Result<Self, PolicyError> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(PolicyError::InvalidDistribution("all logits are -inf".into()));
        }
        Self::from_weights(logits.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs[id as usize]
    }

    pub fn log_prob(&self, id: TokenId) -> f64 {
        self.prob(id).ln()
    }

    /// Lowest-index maximum.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    pub fn sample(&self, rng: &mut impl Rng) -> TokenId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return i as TokenId;
                }
            }
        }
        last_positive as TokenId
    }
}

/// Token sequence with the boundary between prefix and generated answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyContext {
    pub tokens: Vec<TokenId>,
    /// Number of prefix tokens; the answer is `tokens[prefix_len..]`.
    pub prefix_len: usize,
}

impl PolicyContext {
    pub fn new(tokens: Vec<TokenId>, prefix_len: usize) -> Self {
        assert!(prefix_len <= tokens.len(), "prefix longer than context");
        Self { tokens, prefix_len }
    }

    pub fn prefix(tokens: Vec<TokenId>) -> Self {
        let n = tokens.len();
        Self { tokens, prefix_len: n }
    }

    pub fn answer(&self) -> &[TokenId] {
        &self.tokens[self.prefix_len..]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A token-level language model.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn vocabulary(&self) -> &Vocabulary;

    /// Distribution of the token following `tokens`.
    fn next_distribution(&self, tokens: &[TokenId]) -> Result<TokenDistribution, PolicyError>;

    /// Distributions for every position from `start` up to and including the
    /// next-token position, as one forward pass: element `j` conditions on
    /// `tokens[..start + j]`.
    fn distributions(&self, tokens: &[TokenId], start: usize) -> Result<Vec<TokenDistribution>, PolicyError> {
        (start..=tokens.len()).map(|i| self.next_distribution(&tokens[..i])).collect()
    }

    /// Relative cost of one forward pass, used by the speed report.
    fn cost_per_forward(&self) -> f64 {
        1.0
    }

    /// Forward passes served so far.
    fn forwards(&self) -> u64 {
        0
    }

    /// True when distributions are reconstructed from truncated top-k lists.
    fn is_approximate(&self) -> bool {
        false
    }
}

pub type PolicyHandle = Arc<dyn Policy>;

pub(crate) fn check_context(tokens: &[TokenId]) -> Result<(), PolicyError> {
    if tokens.is_empty() {
        return Err(PolicyError::EmptyContext);
    }
    if tokens.len() > MAX_SEQ_LEN {
        return Err(PolicyError::ContextTooLong { len: tokens.len(), max: MAX_SEQ_LEN });
    }
    Ok(())
}

/// Log-probabilities of the answer tokens, in order.
pub fn score_sequence(model: &dyn Policy, ctx: &PolicyContext) -> Result<Vec<f64>, PolicyError> {
    if ctx.prefix_len == 0 || ctx.prefix_len >= ctx.len() {
        return Err(PolicyError::EmptyContext);
    }
    let dists = model.distributions(&ctx.tokens[..ctx.len() - 1], ctx.prefix_len)?;
    Ok(ctx.answer().iter().zip(&dists).map(|(&t, d)| d.log_prob(t)).collect())
}

/// Source of next tokens for [`generate_action`]; may emit several tokens
/// per call (speculative decoding).
pub trait TokenSampler {
    fn next_tokens(&mut self, tokens: &[TokenId]) -> Result<Vec<TokenId>, PolicyError>;
}

/// One generated reasoning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// Context extended by the generated tokens; `prefix_len` marks the start
    /// of the new action.
    pub context: PolicyContext,
    /// `None` when the tokens do not parse to a single action.
    pub action: Option<BlockAction>,
}

impl Generation {
    pub fn is_malformed(&self) -> bool {
        self.action.is_none()
    }
}

/// Samples tokens until the first stop marker or the token budget, then
/// parses the result as one action.
pub fn generate_action(
    vocab: &Vocabulary,
    grammar: &ActionGrammar,
    prefix: &[TokenId],
    sampler: &mut dyn TokenSampler,
    max_new_tokens: usize,
) -> Result<Generation, PolicyError> {
    check_context(prefix)?;
    let mut tokens = prefix.to_vec();
    let mut produced = 0;
    'outer: while produced < max_new_tokens {
        for t in sampler.next_tokens(&tokens)? {
            tokens.push(t);
            produced += 1;
            if vocab.is_eos(t) || produced >= max_new_tokens {
                break 'outer;
            }
        }
    }
    let context = PolicyContext::new(tokens, prefix.len());
    let answer = context.answer();
    let action = if answer.last().is_some_and(|&t| vocab.is_eos(t)) { grammar.parse(answer) } else { None };
    Ok(Generation { context, action })
}
