use serde::{Deserialize, Serialize};

use super::RewardError;
use crate::policy::{score_sequence, Policy, PolicyContext, TokenDistribution, SELF_EVAL_QUESTION};

/// Jensen-Shannon divergence in bits, so the result lies in `[0, 1]`.
pub fn jsd(p: &TokenDistribution, q: &TokenDistribution) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            total += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            total += 0.5 * b * (b / m).log2();
        }
    }
    total.clamp(0.0, 1.0)
}

fn answer_distributions(model: &dyn Policy, ctx: &PolicyContext) -> Result<Vec<TokenDistribution>, RewardError> {
    if ctx.prefix_len == 0 || ctx.prefix_len >= ctx.len() {
        return Err(RewardError::EmptyAnswer);
    }
    Ok(model.distributions(&ctx.tokens[..ctx.len() - 1], ctx.prefix_len)?)
}

/// Mean per-position JSD between expert and amateur over the answer span.
pub fn reward_jsd(expert: &dyn Policy, amateur: &dyn Policy, ctx: &PolicyContext) -> Result<f64, RewardError> {
    let e = answer_distributions(expert, ctx)?;
    let a = answer_distributions(amateur, ctx)?;
    Ok(e.iter().zip(&a).map(|(p, q)| jsd(p, q)).sum::<f64>() / e.len() as f64)
}

/// Summed expert log-probability of the answer tokens.
pub fn reward_ll(expert: &dyn Policy, ctx: &PolicyContext) -> Result<f64, RewardError> {
    if ctx.prefix_len == 0 || ctx.prefix_len >= ctx.len() {
        return Err(RewardError::EmptyAnswer);
    }
    Ok(score_sequence(expert, ctx)?.iter().sum())
}

/// Question appended after an action and the answer tokens that are scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfEvalTemplate {
    pub question: String,
    pub affirmation: String,
}

impl Default for SelfEvalTemplate {
    fn default() -> Self {
        Self { question: SELF_EVAL_QUESTION.to_string(), affirmation: "good".into() }
    }
}

/// Expert log-probability of the affirmation after the self-evaluation
/// question, divided by the affirmation length.
pub fn reward_se(expert: &dyn Policy, ctx: &PolicyContext, template: &SelfEvalTemplate) -> Result<f64, RewardError> {
    let vocab = expert.vocabulary();
    let question = vocab.tokenize(&template.question)?;
    let affirmation = vocab.tokenize(&template.affirmation)?;
    if affirmation.is_empty() {
        return Err(RewardError::EmptyAnswer);
    }
    let mut tokens = ctx.tokens.clone();
    tokens.extend(question);
    let prefix_len = tokens.len();
    tokens.extend(&affirmation);
    let lp = score_sequence(expert, &PolicyContext::new(tokens, prefix_len))?;
    Ok(lp.iter().sum::<f64>() / affirmation.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ScriptedPolicy, TokenId, Vocabulary};
    use rand::{Rng, SeedableRng};

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("t{i}")).collect(), vec![]).unwrap()
    }

    fn kl2(p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).log2()).sum()
    }

    #[test]
    fn jsd_matches_midpoint_definition() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = TokenDistribution::from_weights((0..7).map(|_| rng.gen::<f64>()).collect()).unwrap();
            let q = TokenDistribution::from_weights((0..7).map(|_| rng.gen::<f64>()).collect()).unwrap();
            let m: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| 0.5 * (a + b)).collect();
            let oracle = 0.5 * kl2(p.probs(), &m) + 0.5 * kl2(q.probs(), &m);
            assert!((jsd(&p, &q) - oracle).abs() < 1e-12);
            assert!((jsd(&p, &q) - jsd(&q, &p)).abs() < 1e-15);
        }
    }

    #[test]
    fn ll_uniform_three_tokens() {
        let m = ScriptedPolicy::constant("u", vocab(4), TokenDistribution::uniform(4)).unwrap();
        let ctx = PolicyContext::new(vec![0, 1, 2, 3], 1);
        assert!((reward_ll(&m, &ctx).unwrap() - 3.0 * 0.25f64.ln()).abs() < 1e-12);
        assert!(matches!(reward_ll(&m, &PolicyContext::prefix(vec![0])), Err(RewardError::EmptyAnswer)));
    }

    #[test]
    fn jsd_extremes() {
        let n = 3;
        let ctx = PolicyContext::new(vec![0, 1, 2, 0], 1);
        let one_hots = |shift: usize| -> Vec<TokenDistribution> {
            (0..4).map(|i| TokenDistribution::one_hot(n, (i + shift) % n)).collect()
        };
        let e = ScriptedPolicy::new("e", vocab(n), one_hots(0)).unwrap();
        let a = ScriptedPolicy::new("a", vocab(n), one_hots(1)).unwrap();
        assert_eq!(reward_jsd(&e, &a, &ctx).unwrap(), 1.0);
        assert_eq!(reward_jsd(&e, &e, &ctx).unwrap(), 0.0);
    }

    #[test]
    fn self_eval_of_certain_backend_is_zero() {
        let v = Vocabulary::blocksworld(&["red".into()]).unwrap();
        let good = v.expect_id("good") as usize;
        let m = ScriptedPolicy::constant("g", v.clone(), TokenDistribution::one_hot(v.len(), good)).unwrap();
        let ctx = PolicyContext::new(vec![0 as TokenId, 1], 1);
        assert_eq!(reward_se(&m, &ctx, &SelfEvalTemplate::default()).unwrap(), 0.0);
    }
}
