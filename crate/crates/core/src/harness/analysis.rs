use serde::{Deserialize, Serialize};

use super::{Edge, ExperimentConfig, HarnessError};
use crate::corr::{pearson, permutation_test, spearman, Correlation};
use crate::reward::FactorKind;
use crate::rng::substream;

/// Fewest edges the analysis accepts.
pub const MIN_EDGES: usize = 50;

const STREAM_ANALYSIS: u64 = 40;

/// Equal-width reward bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub positive: usize,
    /// Share of edges in the bin with `Δ > 0`; zero for empty bins.
    pub positive_fraction: f64,
    pub mean_delta: f64,
}

/// Correlation between two named series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCorrelation {
    pub x: String,
    pub y: String,
    pub pearson: Option<Correlation>,
    pub spearman: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretabilityReport {
    pub report: String,
    pub config: ExperimentConfig,
    pub edges: usize,
    pub optimal_edges: usize,
    pub positive_fraction: f64,
    pub bins: Vec<Bin>,
    /// Composite reward against `Δ`.
    pub spearman: Option<Correlation>,
    pub pearson: Option<Correlation>,
    /// Each raw factor against `Δ`.
    pub factors: Vec<FactorCorrelation>,
    /// Pairwise correlations between raw factors.
    pub factor_matrix: Vec<FactorCorrelation>,
}

fn correlate(
    x_name: &str,
    x: &[f64],
    y_name: &str,
    y: &[f64],
    permutations: usize,
    seed: u64,
    stream: u64,
) -> FactorCorrelation {
    let mut rng_p = substream(seed, &[STREAM_ANALYSIS, stream, 0]);
    let mut rng_s = substream(seed, &[STREAM_ANALYSIS, stream, 1]);
    FactorCorrelation {
        x: x_name.into(),
        y: y_name.into(),
        pearson: permutation_test(x, y, pearson, permutations, &mut rng_p),
        spearman: permutation_test(x, y, spearman, permutations, &mut rng_s),
    }
}

fn bins(edges: &[Edge], n: usize) -> Vec<Bin> {
    let lo = edges.iter().map(|e| e.reward).fold(f64::INFINITY, f64::min);
    let hi = edges.iter().map(|e| e.reward).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n as f64;
    let mut out: Vec<Bin> = (0..n)
        .map(|i| Bin {
            lo: lo + width * i as f64,
            hi: if i + 1 == n { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
            positive: 0,
            positive_fraction: 0.0,
            mean_delta: 0.0,
        })
        .collect();
    for e in edges {
        let i = if width > 0.0 { (((e.reward - lo) / width) as usize).min(n - 1) } else { 0 };
        let b = &mut out[i];
        b.count += 1;
        b.positive += usize::from(e.delta > 0.0);
        b.mean_delta += e.delta;
    }
    for b in &mut out {
        if b.count > 0 {
            b.positive_fraction = b.positive as f64 / b.count as f64;
            b.mean_delta /= b.count as f64;
        }
    }
    out
}

/// Bins the edges by composite reward and correlates rewards and raw
/// factors with verifier progress gains.
pub fn analyze_edges(cfg: &ExperimentConfig, edges: &[Edge]) -> Result<InterpretabilityReport, HarnessError> {
    if edges.len() < MIN_EDGES {
        return Err(HarnessError::InsufficientData { needed: MIN_EDGES, got: edges.len() });
    }
    let perms = cfg.analysis.permutations;
    let reward: Vec<f64> = edges.iter().map(|e| e.reward).collect();
    let delta: Vec<f64> = edges.iter().map(|e| e.delta).collect();
    let composite = correlate("reward", &reward, "delta", &delta, perms, cfg.seed, 0);
    let kinds: Vec<FactorKind> =
        FactorKind::SCORED.into_iter().filter(|k| edges.iter().all(|e| e.raw.contains_key(k))).collect();
    let series: Vec<Vec<f64>> = kinds.iter().map(|k| edges.iter().map(|e| e.raw[k]).collect()).collect();
    let factors = kinds
        .iter()
        .zip(&series)
        .enumerate()
        .map(|(i, (k, s))| correlate(k.name(), s, "delta", &delta, perms, cfg.seed, 1 + i as u64))
        .collect();
    let mut factor_matrix = Vec::new();
    for i in 0..kinds.len() {
        for j in i + 1..kinds.len() {
            let stream = 10 + (i * kinds.len() + j) as u64;
            factor_matrix.push(correlate(
                kinds[i].name(),
                &series[i],
                kinds[j].name(),
                &series[j],
                perms,
                cfg.seed,
                stream,
            ));
        }
    }
    let positive = delta.iter().filter(|&&d| d > 0.0).count();
    Ok(InterpretabilityReport {
        report: "interpretability".into(),
        config: cfg.clone(),
        edges: edges.len(),
        optimal_edges: edges.iter().filter(|e| e.optimal).count(),
        positive_fraction: positive as f64 / edges.len() as f64,
        bins: bins(edges, cfg.analysis.bins),
        spearman: composite.spearman,
        pearson: composite.pearson,
        factors,
        factor_matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::search::NodeOrigin;

    fn edge(reward: f64, delta: f64) -> Edge {
        Edge {
            reward,
            raw: BTreeMap::from([(FactorKind::Ll, reward * 2.0)]),
            p_parent: 0.0,
            p_child: delta,
            delta,
            optimal: delta > 0.0,
            origin: NodeOrigin::Expansion,
        }
    }

    #[test]
    fn too_few_edges() {
        let edges: Vec<Edge> = (0..49).map(|i| edge(i as f64, 0.1)).collect();
        let err = analyze_edges(&ExperimentConfig::default(), &edges).unwrap_err();
        assert!(matches!(err, HarnessError::InsufficientData { needed: 50, got: 49 }));
    }

    #[test]
    fn monotone_pairs_and_bins() {
        let mut cfg = ExperimentConfig::default();
        cfg.analysis.permutations = 200;
        cfg.analysis.bins = 4;
        let edges: Vec<Edge> = (0..80).map(|i| edge(i as f64, (i as f64 - 40.0).powi(3))).collect();
        let r = analyze_edges(&cfg, &edges).unwrap();
        assert_eq!(r.spearman.unwrap().coefficient, 1.0);
        assert!(r.spearman.unwrap().p_value < 0.01);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 80);
        assert_eq!(r.bins[0].positive_fraction, 0.0);
        assert_eq!(r.bins[3].positive_fraction, 1.0);
        assert_eq!(r.factors.len(), 1);
        assert_eq!(r.factors[0].x, "ll");
    }
}
