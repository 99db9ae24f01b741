//! Reward-guided Monte Carlo Tree Search for Blocksworld planning: the
//! environment, policy backends, speculative and contrastive decoding, the
//! multi-factor reward model, the search engine and the experiment harness.

pub mod blocks;
pub mod corr;
pub mod decoding;
pub mod harness;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod search;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/blocksworld.md")]
    mod blocksworld {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
