//! Token-level samplers.
//!
//! [`speculative_step`] drafts tokens from a cheap model and accepts or
//! rejects them against the target so that emitted tokens are distributed
//! exactly as samples from the target. [`contrastive_logits`] is vanilla
//! token-level contrastive decoding, kept as a baseline. The samplers at the
//! bottom plug these into [`generate_action`](crate::policy::generate_action).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Policy, PolicyError, TokenDistribution, TokenId, TokenSampler};

#[derive(Debug, Error)]
pub enum DecodingError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid decoding config: {0}")]
    InvalidConfig(String),
    #[error("distributions cover {0} and {1} tokens")]
    VocabularyMismatch(usize, usize),
}

impl From<DecodingError> for PolicyError {
    fn from(e: DecodingError) -> Self {
        match e {
            DecodingError::Policy(p) => p,
            other => PolicyError::InvalidDistribution(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecDecodeConfig {
    /// Draft tokens per cycle.
    pub draft_len: usize,
    pub seed: u64,
}

impl Default for SpecDecodeConfig {
    fn default() -> Self {
        Self { draft_len: 4, seed: 0 }
    }
}

impl SpecDecodeConfig {
    pub fn validate(&self) -> Result<(), DecodingError> {
        if self.draft_len == 0 {
            return Err(DecodingError::InvalidConfig("draft_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counters accumulated over speculative cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecStats {
    /// Target verification passes.
    pub cycles: u64,
    /// Tokens sampled from the draft model.
    pub drafted: u64,
    pub accepted: u64,
    /// Rejections, each followed by a draw from the residual.
    pub resampled: u64,
    /// Extra target samples after a fully accepted draft.
    pub bonus: u64,
    /// Rejections whose residual had no mass; the target argmax was emitted.
    pub degenerate: u64,
}

impl SpecStats {
    pub fn merge(&mut self, other: &SpecStats) {
        self.cycles += other.cycles;
        self.drafted += other.drafted;
        self.accepted += other.accepted;
        self.resampled += other.resampled;
        self.bonus += other.bonus;
        self.degenerate += other.degenerate;
    }

    /// Accepted fraction of the draft tokens that were checked.
    pub fn acceptance_rate(&self) -> f64 {
        let checked = self.accepted + self.resampled;
        if checked == 0 {
            return 0.0;
        }
        self.accepted as f64 / checked as f64
    }

    pub fn emitted(&self) -> u64 {
        self.accepted + self.resampled + self.bonus
    }
}

/// `Σ_x min(p(x), q(x))`, the probability that one draft token is accepted.
pub fn acceptance_mass(p: &TokenDistribution, q: &TokenDistribution) -> f64 {
    p.probs().iter().zip(q.probs()).map(|(a, b)| a.min(*b)).sum()
}

/// One draft-and-verify cycle. Returns the emitted tokens (at least one).
///
/// Drafting stops early at a stop marker; no bonus token follows an accepted
/// stop marker.
pub fn speculative_step(
    target: &dyn Policy,
    draft: &dyn Policy,
    draft_len: usize,
    tokens: &[TokenId],
    rng: &mut impl Rng,
) -> Result<(Vec<TokenId>, SpecStats), DecodingError> {
    if draft_len == 0 {
        return Err(DecodingError::InvalidConfig("draft_len must be at least 1".into()));
    }
    let vocab = target.vocabulary();
    let mut stats = SpecStats { cycles: 1, ..Default::default() };
    let mut ctx = tokens.to_vec();
    let mut qs = Vec::with_capacity(draft_len);
    for _ in 0..draft_len {
        let q = draft.next_distribution(&ctx)?;
        let x = q.sample(rng);
        ctx.push(x);
        qs.push(q);
        stats.drafted += 1;
        if vocab.is_eos(x) {
            break;
        }
    }
    let ps = target.distributions(&ctx, tokens.len())?;
    if ps[0].len() != qs[0].len() {
        return Err(DecodingError::VocabularyMismatch(ps[0].len(), qs[0].len()));
    }
    let drafts = &ctx[tokens.len()..];
    let mut out = Vec::with_capacity(drafts.len() + 1);
    for (i, &x) in drafts.iter().enumerate() {
        let (p, q) = (ps[i].prob(x), qs[i].prob(x));
        if q <= p || rng.gen::<f64>() < p / q {
            out.push(x);
            stats.accepted += 1;
            continue;
        }
        stats.resampled += 1;
        let residual: Vec<f64> = ps[i].probs().iter().zip(qs[i].probs()).map(|(a, b)| (a - b).max(0.0)).collect();
        let y = match TokenDistribution::from_weights(residual) {
            Ok(r) => r.sample(rng),
            Err(_) => {
                stats.degenerate += 1;
                ps[i].argmax()
            }
        };
        out.push(y);
        return Ok((out, stats));
    }
    if !drafts.last().is_some_and(|&x| vocab.is_eos(x)) {
        out.push(ps[drafts.len()].sample(rng));
        stats.bonus += 1;
    }
    Ok((out, stats))
}

/// Plausibility mask and contrast strength for contrastive decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CDConfig {
    pub alpha_mask: f64,
    pub beta: f64,
}

impl Default for CDConfig {
    fn default() -> Self {
        Self { alpha_mask: 0.1, beta: 0.5 }
    }
}

impl CDConfig {
    pub fn validate(&self) -> Result<(), DecodingError> {
        if !(self.alpha_mask > 0.0 && self.alpha_mask <= 1.0) {
            return Err(DecodingError::InvalidConfig("alpha_mask must lie in (0, 1]".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(DecodingError::InvalidConfig("beta must be non-negative".into()));
        }
        Ok(())
    }
}

/// Contrastive scores `(1 + β)·s_exp − s_ama` on tokens whose expert
/// log-probability is within `log α` of the best; `-inf` elsewhere.
pub fn contrastive_logits(
    cfg: &CDConfig,
    expert: &TokenDistribution,
    amateur: &TokenDistribution,
) -> Result<Vec<f64>, DecodingError> {
    cfg.validate()?;
    if expert.len() != amateur.len() {
        return Err(DecodingError::VocabularyMismatch(expert.len(), amateur.len()));
    }
    let s_exp: Vec<f64> = expert.probs().iter().map(|p| p.ln()).collect();
    let max = s_exp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cutoff = cfg.alpha_mask.ln() + max;
    let scores: Vec<f64> = s_exp
        .iter()
        .zip(amateur.probs())
        .map(|(&e, &a)| if e >= cutoff { (1.0 + cfg.beta) * e - a.ln() } else { f64::NEG_INFINITY })
        .collect();
    debug_assert!(scores[expert.argmax() as usize] > f64::NEG_INFINITY, "expert argmax masked");
    Ok(scores)
}

/// Lowest-index argmax of a score vector.
pub fn argmax_scores(scores: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Repeated argmax until a stop marker (included) or the budget.
pub fn decode_greedy(
    model: &dyn Policy,
    ctx: &[TokenId],
    max_new_tokens: usize,
) -> Result<Vec<TokenId>, DecodingError> {
    let mut tokens = ctx.to_vec();
    let vocab = model.vocabulary();
    while tokens.len() - ctx.len() < max_new_tokens {
        let t = model.next_distribution(&tokens)?.argmax();
        tokens.push(t);
        if vocab.is_eos(t) {
            break;
        }
    }
    Ok(tokens.split_off(ctx.len()))
}

/// Distribution with masses raised to `1/temperature` and renormalized.
pub fn temper(dist: &TokenDistribution, temperature: f64) -> Result<TokenDistribution, DecodingError> {
    if !(temperature > 0.0) {
        return Err(DecodingError::InvalidConfig("temperature must be positive".into()));
    }
    if temperature == 1.0 {
        return Ok(dist.clone());
    }
    let inv = 1.0 / temperature;
    Ok(TokenDistribution::from_weights(
        dist.probs().iter().map(|p| if *p > 0.0 { p.powf(inv) } else { 0.0 }).collect(),
    )?)
}

pub struct GreedySampler<'a> {
    pub model: &'a dyn Policy,
}

impl TokenSampler for GreedySampler<'_> {
    fn next_tokens(&mut self, tokens: &[TokenId]) -> Result<Vec<TokenId>, PolicyError> {
        Ok(vec![self.model.next_distribution(tokens)?.argmax()])
    }
}

pub struct AncestralSampler<'a> {
    pub model: &'a dyn Policy,
    pub temperature: f64,
    pub rng: ChaCha8Rng,
}

impl TokenSampler for AncestralSampler<'_> {
    fn next_tokens(&mut self, tokens: &[TokenId]) -> Result<Vec<TokenId>, PolicyError> {
        let d = temper(&self.model.next_distribution(tokens)?, self.temperature)?;
        Ok(vec![d.sample(&mut self.rng)])
    }
}

pub struct SpeculativeSampler<'a> {
    pub target: &'a dyn Policy,
    pub draft: &'a dyn Policy,
    pub draft_len: usize,
    pub rng: ChaCha8Rng,
    pub stats: SpecStats,
}

impl<'a> SpeculativeSampler<'a> {
    pub fn new(target: &'a dyn Policy, draft: &'a dyn Policy, draft_len: usize, rng: ChaCha8Rng) -> Self {
        Self { target, draft, draft_len, rng, stats: SpecStats::default() }
    }
}

impl TokenSampler for SpeculativeSampler<'_> {
    fn next_tokens(&mut self, tokens: &[TokenId]) -> Result<Vec<TokenId>, PolicyError> {
        let (out, s) = speculative_step(self.target, self.draft, self.draft_len, tokens, &mut self.rng)?;
        self.stats.merge(&s);
        Ok(out)
    }
}

/// Greedy contrastive decoding.
pub struct ContrastiveSampler<'a> {
    pub expert: &'a dyn Policy,
    pub amateur: &'a dyn Policy,
    pub cfg: CDConfig,
}

impl TokenSampler for ContrastiveSampler<'_> {
    fn next_tokens(&mut self, tokens: &[TokenId]) -> Result<Vec<TokenId>, PolicyError> {
        let e = self.expert.next_distribution(tokens)?;
        let a = self.amateur.next_distribution(tokens)?;
        Ok(vec![argmax_scores(&contrastive_logits(&self.cfg, &e, &a)?)])
    }
}
