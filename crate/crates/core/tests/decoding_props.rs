use proptest::prelude::*;

use scmcts::decoding::{acceptance_mass, argmax_scores, contrastive_logits, temper, CDConfig};
use scmcts::policy::TokenDistribution;

fn dist(n: usize) -> impl Strategy<Value = TokenDistribution> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| TokenDistribution::from_weights(w).unwrap())
}

fn pair() -> impl Strategy<Value = (TokenDistribution, TokenDistribution)> {
    (2usize..24).prop_flat_map(|n| (dist(n), dist(n)))
}

proptest! {
    #[test]
    fn contrast_never_masks_the_expert_argmax((p, q) in pair(), alpha in 0.01f64..1.0, beta in 0.0f64..3.0) {
        let cfg = CDConfig { alpha_mask: alpha, beta };
        let s = contrastive_logits(&cfg, &p, &q).unwrap();
        prop_assert!(s[p.argmax() as usize].is_finite());
        prop_assert!(s[argmax_scores(&s) as usize].is_finite());
    }

    #[test]
    fn mixing_the_draft_toward_the_target_never_lowers_acceptance((p, q) in pair(), eps in 0.0f64..1.0) {
        let mixed: Vec<f64> = q.probs().iter().zip(p.probs()).map(|(a, b)| (1.0 - eps) * a + eps * b).collect();
        let m = TokenDistribution::from_weights(mixed).unwrap();
        prop_assert!(acceptance_mass(&p, &m) >= acceptance_mass(&p, &q) - 1e-12);
    }

    #[test]
    fn acceptance_mass_is_a_probability((p, q) in pair()) {
        let a = acceptance_mass(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
        prop_assert!((acceptance_mass(&p, &p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tempering_keeps_the_mode(p in dist(10), t in 0.1f64..5.0) {
        let q = temper(&p, t).unwrap();
        prop_assert_eq!(q.argmax(), p.argmax());
        prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn invalid_contrast_settings_are_rejected() {
    let p = TokenDistribution::uniform(4);
    for cfg in [
        CDConfig { alpha_mask: 0.0, beta: 0.5 },
        CDConfig { alpha_mask: 1.5, beta: 0.5 },
        CDConfig { alpha_mask: 0.1, beta: -1.0 },
    ] {
        assert!(contrastive_logits(&cfg, &p, &p).is_err());
    }
    assert!(contrastive_logits(&CDConfig::default(), &p, &TokenDistribution::uniform(5)).is_err());
}
