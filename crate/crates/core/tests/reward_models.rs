use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scmcts::blocks::{generate_instance, DistanceOracle, GeneratorConfig};
use scmcts::policy::{plan_context, ActionGrammar, PolicyContext, SyntheticPolicy, SyntheticPolicyConfig};
use scmcts::reward::{
    reward_ll, CompositeRewardConfig, FactorKind, FactorStats, FactorWeights, PriorStats, RewardModel,
};

fn raw_model(weights: FactorWeights) -> RewardModel {
    let cfg = CompositeRewardConfig { weights, normalize: false, ..Default::default() };
    RewardModel::new(cfg, None, ChaCha8Rng::seed_from_u64(0)).unwrap()
}

#[test]
fn single_cluster_is_plain_standardization() {
    let values: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let s = FactorStats::cluster(&values, 1, 4.0).unwrap();
    assert_eq!(s.num_regions(), 1);
    let mu = values.iter().sum::<f64>() / 50.0;
    let sd = (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 50.0).sqrt();
    assert!((s.normalize(1.0) - (1.0 - mu) / sd).abs() < 1e-12);
}

#[test]
fn close_clusters_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
    let s = FactorStats::cluster(&values, 4, 4.0).unwrap();
    assert_eq!(s.num_regions(), 1);
    s.validate().unwrap();
}

#[test]
fn separated_clusters_survive_and_boundaries_split_them() {
    let values: Vec<f64> =
        (0..40).map(|i| if i % 2 == 0 { 0.0 + i as f64 * 1e-3 } else { 10.0 + i as f64 * 1e-3 }).collect();
    let s = FactorStats::cluster(&values, 2, 4.0).unwrap();
    assert_eq!(s.num_regions(), 2);
    assert!(s.boundaries[1] > 0.1 && s.boundaries[1] < 10.0);
    assert_eq!(s.region_of(-100.0), 0);
    assert_eq!(s.region_of(100.0), 1);
}

#[test]
fn too_few_samples_is_an_error() {
    assert!(FactorStats::cluster(&[1.0], 1, 4.0).is_err());
}

#[test]
fn stats_file_round_trip() {
    let mut samples = BTreeMap::new();
    samples.insert(FactorKind::Ll, vec![-3.0, -2.5, -2.0, -0.5, -0.2, 0.0]);
    samples.insert(FactorKind::Se, vec![0.1, 0.2, 0.3, 0.9]);
    let stats = PriorStats::from_samples(&samples, 2, 4.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stats.json");
    stats.save(&path).unwrap();
    assert_eq!(PriorStats::load(&path).unwrap(), stats);
}

#[test]
fn weights_scale_the_composite() {
    let mut raw = BTreeMap::new();
    raw.insert(FactorKind::Jsd, 0.4);
    raw.insert(FactorKind::Ll, -1.0);
    let r = raw_model(FactorWeights { jsd: 2.0, ll: 0.5, se: 0.0, random: 0.0 }).combine(raw);
    assert!((r.composite - (0.8 - 0.5)).abs() < 1e-12);
}

#[test]
fn online_update_changes_later_scores() {
    let mut samples = BTreeMap::new();
    samples.insert(FactorKind::Ll, vec![-1.0, -0.5, 0.0]);
    let stats = PriorStats::from_samples(&samples, 1, 4.0).unwrap();
    let w = FactorWeights { jsd: 0.0, ll: 1.0, se: 0.0, random: 0.0 };
    let cfg = CompositeRewardConfig { weights: w, normalize: true, online_update: true, ..Default::default() };
    let mut m = RewardModel::new(cfg, Some(stats), ChaCha8Rng::seed_from_u64(0)).unwrap();
    let one = |v| BTreeMap::from([(FactorKind::Ll, v)]);
    let first = m.combine(one(-0.5)).composite;
    m.combine(one(-5.0));
    let again = m.combine(one(-0.5)).composite;
    assert!(first.abs() < 1e-12);
    assert!(again > first, "{again} <= {first}");
}

#[test]
fn log_likelihood_is_never_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let problem = Arc::new(generate_instance(4, &GeneratorConfig::default(), &mut rng).unwrap());
    let oracle = Arc::new(DistanceOracle::new(&problem).unwrap());
    let expert = SyntheticPolicy::new("e", SyntheticPolicyConfig::default(), problem.clone(), oracle).unwrap();
    let grammar = ActionGrammar::new(scmcts::policy::Policy::vocabulary(&expert), &problem).unwrap();
    for a in problem.initial.legal_actions() {
        let mut tokens = plan_context(scmcts::policy::Policy::vocabulary(&expert), &grammar, &problem, &[]).unwrap();
        let prefix = tokens.len();
        tokens.extend(grammar.tokens(&a));
        let ll = reward_ll(&expert, &PolicyContext::new(tokens, prefix)).unwrap();
        assert!(ll <= 0.0 && ll.is_finite());
    }
}
