use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scmcts::blocks::{generate_instance, GeneratorConfig, Problem, Verifier};
use scmcts::harness::{build_policies, BackendSpec};
use scmcts::reward::{CompositeRewardConfig, RewardModel};
use scmcts::search::{reward_stream, search, BackpropMode, ExitReason, ProgressSource, SearchConfig, SearchTree};

fn instance(steps: usize, seed: u64) -> Problem {
    generate_instance(steps, &GeneratorConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn backend(fidelity: f64) -> BackendSpec {
    let mut b = BackendSpec::default();
    b.expert.fidelity = fidelity;
    b
}

fn raw_reward(seed: u64) -> RewardModel {
    let cfg = CompositeRewardConfig { normalize: false, ..Default::default() };
    RewardModel::new(cfg, None, reward_stream(seed)).unwrap()
}

fn check_tree(t: &SearchTree) {
    for n in &t.nodes {
        assert!(n.v.is_finite());
        if let Some(p) = n.parent {
            assert!(t.node(p).visits >= n.visits);
            assert!(t.node(p).children.contains(&n.id));
        } else {
            assert_eq!(n.id, SearchTree::ROOT);
            assert!(n.action.is_none());
        }
        if n.goal {
            assert!(n.terminal && n.children.is_empty());
        }
    }
}

#[test]
fn visit_counts_shrink_toward_the_leaves() {
    for seed in 0..10 {
        let p = instance(4 + 2 * (seed as usize % 2), seed);
        let (policies, _) = build_policies(&backend(0.6), &p).unwrap();
        for backprop in [BackpropMode::Mean, BackpropMode::Refined] {
            let cfg = SearchConfig { seed, backprop, ..Default::default() };
            let out = search(&p, &cfg, &policies, &mut raw_reward(seed), None).unwrap();
            check_tree(&out.tree);
            assert!(out.metrics.iterations <= cfg.max_iterations);
        }
    }
}

#[test]
fn faithful_expert_rollouts_reach_the_goal() {
    for seed in 0..20 {
        let p = instance(4, 100 + seed);
        let (policies, _) = build_policies(&backend(1.0), &p).unwrap();
        let cfg = SearchConfig { max_iterations: 1, rollout_steps: 6, seed, ..Default::default() };
        let out = search(&p, &cfg, &policies, &mut raw_reward(seed), None).unwrap();
        assert!(out.tree.nodes.iter().any(|n| n.goal), "seed {seed}");
    }
}

#[test]
fn answer_is_an_ended_plan_when_one_exists() {
    let p = instance(4, 7);
    let (policies, _) = build_policies(&backend(0.7), &p).unwrap();
    let out = search(&p, &SearchConfig::default(), &policies, &mut raw_reward(0), None).unwrap();
    let best = out.tree.node(out.best_node);
    assert!(best.terminal && !best.malformed);
    assert_eq!(out.tree.actions(out.best_node), out.plan);
    let score = out.tree.plan_score(out.best_node);
    for n in out.tree.nodes.iter().filter(|n| n.terminal && !n.malformed && n.id != SearchTree::ROOT) {
        assert!(out.tree.plan_score(n.id) <= score);
    }
}

#[test]
fn stop_at_goal_exits_early() {
    let p = instance(4, 8);
    let (policies, _) = build_policies(&backend(1.0), &p).unwrap();
    let cfg = SearchConfig { stop_at_goal: true, ..Default::default() };
    let out = search(&p, &cfg, &policies, &mut raw_reward(0), None).unwrap();
    assert_eq!(out.metrics.exit, ExitReason::Goal);
    assert!(p.solves(&out.plan));
}

#[test]
fn value_threshold_exits_early() {
    let p = instance(6, 9);
    let (policies, _) = build_policies(&backend(0.7), &p).unwrap();
    let cfg = SearchConfig { value_threshold: Some(-1e9), ..Default::default() };
    let out = search(&p, &cfg, &policies, &mut raw_reward(0), None).unwrap();
    assert_eq!(out.metrics.exit, ExitReason::Threshold);
    assert!(out.metrics.iterations < cfg.max_iterations);
}

#[test]
fn verifier_progress_needs_a_verifier() {
    let p = instance(4, 10);
    let (policies, _) = build_policies(&backend(0.7), &p).unwrap();
    let cfg =
        SearchConfig { progress: ProgressSource::Verifier, backprop: BackpropMode::Refined, ..Default::default() };
    assert!(search(&p, &cfg, &policies, &mut raw_reward(0), None).is_err());
    let ver = Verifier::new(&p).unwrap();
    let out = search(&p, &cfg, &policies, &mut raw_reward(0), Some(&ver)).unwrap();
    check_tree(&out.tree);
}

#[test]
fn speculative_rollouts_keep_the_search_deterministic() {
    let p = instance(6, 11);
    let (policies, _) = build_policies(&backend(0.7), &p).unwrap();
    let cfg = SearchConfig { speculative_rollout: true, seed: 4, ..Default::default() };
    let a = search(&p, &cfg, &policies, &mut raw_reward(4), None).unwrap();
    let b = search(&p, &cfg, &policies, &mut raw_reward(4), None).unwrap();
    assert_eq!(a, b);
    assert!(a.metrics.speculative.drafted > 0);
}

#[test]
fn invalid_search_config_is_rejected() {
    let p = instance(4, 12);
    let (policies, _) = build_policies(&backend(0.7), &p).unwrap();
    for cfg in [
        SearchConfig { max_iterations: 0, ..Default::default() },
        SearchConfig { alpha: 1.5, ..Default::default() },
        SearchConfig { length_penalty: -1.0, ..Default::default() },
    ] {
        assert!(search(&p, &cfg, &policies, &mut raw_reward(0), None).is_err());
    }
}
