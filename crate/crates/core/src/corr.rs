//! Correlation coefficients with permutation-test p-values.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Pearson product-moment correlation; `None` when either input is constant
/// or the lengths differ or are below 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    /// Two-sided permutation p-value, `(1 + #{|r_perm| ≥ |r|}) / (1 + permutations)`.
    pub p_value: f64,
    pub n: usize,
}

/// Coefficient plus a two-sided permutation p-value from shuffling `y`.
pub fn permutation_test(
    x: &[f64],
    y: &[f64],
    statistic: fn(&[f64], &[f64]) -> Option<f64>,
    permutations: usize,
    rng: &mut impl Rng,
) -> Option<Correlation> {
    let r = statistic(x, y)?;
    let mut shuffled = y.to_vec();
    let mut extreme = 0;
    for _ in 0..permutations {
        shuffled.shuffle(rng);
        if statistic(x, &shuffled).is_some_and(|s| s.abs() >= r.abs() - 1e-12) {
            extreme += 1;
        }
    }
    Some(Correlation { coefficient: r, p_value: (1 + extreme) as f64 / (1 + permutations) as f64, n: x.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn monotone_pairs_have_unit_spearman() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.1, 0.5, 0.6, 9.0, 100.0];
        assert_eq!(spearman(&x, &y), Some(1.0));
        assert!(pearson(&x, &y).unwrap() < 1.0);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn constant_input_has_no_correlation() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn independent_data_gives_large_p() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..60).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..60).map(|_| rng.gen()).collect();
        let c = permutation_test(&x, &y, spearman, 500, &mut rng).unwrap();
        assert!(c.p_value > 0.05);
        let z: Vec<f64> = x.iter().map(|v| v * 2.0 + 0.01 * rng.gen::<f64>()).collect();
        assert!(permutation_test(&x, &z, pearson, 500, &mut rng).unwrap().p_value < 0.01);
    }
}
