use std::sync::atomic::{AtomicU64, Ordering};

use super::{check_context, Policy, PolicyError, TokenDistribution, TokenId, Vocabulary};

/// Backend whose next-token distribution depends only on the context length.
///
/// Position `i` (a context of `i` tokens) uses `dists[i]`, and positions past
/// the end reuse the last entry. A single entry gives a context-free
/// model.
#[derive(Debug)]
pub struct ScriptedPolicy {
    name: String,
    vocab: Vocabulary,
    dists: Vec<TokenDistribution>,
    cost: f64,
    forwards: AtomicU64,
}

impl ScriptedPolicy {
    pub fn new(name: impl Into<String>, vocab: Vocabulary, dists: Vec<TokenDistribution>) -> Result<Self, PolicyError> {
        if dists.is_empty() {
            return Err(PolicyError::InvalidDistribution("no distributions".into()));
        }
        if dists.iter().any(|d| d.len() != vocab.len()) {
            return Err(PolicyError::InvalidDistribution("distribution size differs from vocabulary".into()));
        }
        Ok(Self { name: name.into(), vocab, dists, cost: 1.0, forwards: AtomicU64::new(0) })
    }

    pub fn constant(name: impl Into<String>, vocab: Vocabulary, dist: TokenDistribution) -> Result<Self, PolicyError> {
        Self::new(name, vocab, vec![dist])
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, tokens: &[TokenId]) -> Result<TokenDistribution, PolicyError> {
        check_context(tokens)?;
        self.forwards.fetch_add(1, Ordering::Relaxed);
        Ok(self.dists[tokens.len().min(self.dists.len() - 1)].clone())
    }

    fn distributions(&self, tokens: &[TokenId], start: usize) -> Result<Vec<TokenDistribution>, PolicyError> {
        check_context(tokens)?;
        self.forwards.fetch_add(1, Ordering::Relaxed);
        Ok((start..=tokens.len()).map(|i| self.dists[i.min(self.dists.len() - 1)].clone()).collect())
    }

    fn cost_per_forward(&self) -> f64 {
        self.cost
    }

    fn forwards(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }
}
