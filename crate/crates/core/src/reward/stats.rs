use serde::{Deserialize, Serialize};

use super::RewardError;

/// Standard deviations below this are treated as zero by [`FactorStats::normalize`].
pub const SIGMA_FLOOR: f64 = 1e-9;

/// Population mean, standard deviation and count of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub mu: f64,
    pub sigma: f64,
    pub n: u64,
}

impl Region {
    pub const EMPTY: Region = Region { mu: 0.0, sigma: 0.0, n: 0 };

    pub fn from_values(values: &[f64]) -> Region {
        if values.is_empty() {
            return Region::EMPTY;
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        Region { mu, sigma: var.sqrt(), n: values.len() as u64 }
    }

    /// One incremental step: count, mean, then standard deviation through
    /// the second central moment.
    pub fn update(&mut self, v: f64) {
        self.n += 1;
        let n = self.n as f64;
        let delta = v - self.mu;
        self.mu += delta / n;
        let m2 = (n - 1.0) * self.sigma * self.sigma + delta * (v - self.mu);
        self.sigma = (m2.max(0.0) / n).sqrt();
    }
}

/// Region boundaries `b_1 < … < b_{K+1}` (with infinite sentinels) and
/// per-region statistics for one reward factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStats {
    #[serde(with = "extended_floats")]
    pub boundaries: Vec<f64>,
    pub regions: Vec<Region>,
}

impl FactorStats {
    pub fn single(values: &[f64]) -> Result<Self, RewardError> {
        if values.is_empty() {
            return Err(RewardError::InsufficientSamples { needed: 1, got: 0 });
        }
        Ok(Self { boundaries: vec![f64::NEG_INFINITY, f64::INFINITY], regions: vec![Region::from_values(values)] })
    }

    /// Clusters `values` into at most `k` regions with exact 1-D k-means.
    ///
    /// Adjacent clusters merge while their centroid gap is at most
    /// `separation` times the larger of their standard deviations, or while
    /// one of them holds fewer than two values. Boundaries sit at midpoints
    /// between the surviving centroids.
    pub fn cluster(values: &[f64], k: usize, separation: f64) -> Result<Self, RewardError> {
        if values.len() < 2 {
            return Err(RewardError::InsufficientSamples { needed: 2, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RewardError::NonFinite);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut clusters = kmeans_1d(&sorted, k.max(1));
        while clusters.len() > 1 {
            let stats: Vec<Region> = clusters.iter().map(|c| Region::from_values(&sorted[c.clone()])).collect();
            let merge = (0..clusters.len() - 1)
                .filter(|&i| {
                    let (a, b) = (stats[i], stats[i + 1]);
                    a.n < 2 || b.n < 2 || b.mu - a.mu <= separation * a.sigma.max(b.sigma)
                })
                .min_by(|&i, &j| {
                    let gap = |i: usize| stats[i + 1].mu - stats[i].mu;
                    gap(i).total_cmp(&gap(j))
                });
            let Some(i) = merge else { break };
            clusters[i] = clusters[i].start..clusters[i + 1].end;
            clusters.remove(i + 1);
        }
        let centroids: Vec<f64> = clusters.iter().map(|c| Region::from_values(&sorted[c.clone()]).mu).collect();
        let mut boundaries = vec![f64::NEG_INFINITY];
        boundaries.extend(centroids.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        boundaries.push(f64::INFINITY);
        let mut out = Self { boundaries, regions: vec![Region::EMPTY; centroids.len()] };
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); centroids.len()];
        for &v in values {
            members[out.region_of(v)].push(v);
        }
        out.regions = members.iter().map(|m| Region::from_values(m)).collect();
        Ok(out)
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// `argmax{k : b_k ≤ value}`; values below every finite boundary land in
    /// the first region.
    pub fn region_of(&self, value: f64) -> usize {
        let k = self.boundaries[1..self.boundaries.len() - 1].partition_point(|&b| b <= value);
        k.min(self.regions.len() - 1)
    }

    /// Z-score within the value's region; plain centering when the region's
    /// standard deviation is below [`SIGMA_FLOOR`].
    pub fn normalize(&self, value: f64) -> f64 {
        let r = self.regions[self.region_of(value)];
        if r.sigma < SIGMA_FLOOR {
            value - r.mu
        } else {
            (value - r.mu) / r.sigma
        }
    }

    pub fn update(&mut self, value: f64) {
        let k = self.region_of(value);
        self.regions[k].update(value);
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let k = self.regions.len();
        let ok = k >= 1
            && self.boundaries.len() == k + 1
            && self.boundaries[0] == f64::NEG_INFINITY
            && self.boundaries[k] == f64::INFINITY
            && self.boundaries.windows(2).all(|w| w[0] < w[1])
            && self.regions.iter().all(|r| r.sigma >= 0.0 && r.mu.is_finite() && r.sigma.is_finite());
        if ok {
            Ok(())
        } else {
            Err(RewardError::InvalidStats("boundaries or regions malformed".into()))
        }
    }
}

/// Optimal partition of sorted data into `k` contiguous ranges minimizing the
/// within-range sum of squares. Returns at most `k` non-empty ranges.
pub fn kmeans_1d(sorted: &[f64], k: usize) -> Vec<std::ops::Range<usize>> {
    let n = sorted.len();
    let k = k.min(n).max(1);
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &x) in sorted.iter().enumerate() {
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let cost = |j: usize, i: usize| -> f64 {
        let m = (i - j) as f64;
        let s = s1[i] - s1[j];
        (s2[i] - s2[j] - s * s / m).max(0.0)
    };
    // prev[i]: best cost of the first i points in the current number of ranges
    let mut prev: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { cost(0, i) }).collect();
    let mut splits: Vec<Vec<usize>> = Vec::with_capacity(k);
    for layer in 1..k {
        let mut cur = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0; n + 1];
        solve_layer(layer + 1, n, layer, n - 1, &prev, &cost, &mut cur, &mut arg);
        splits.push(arg);
        prev = cur;
    }
    let mut ranges = Vec::with_capacity(k);
    let mut end = n;
    for arg in splits.iter().rev() {
        let j = arg[end];
        ranges.push(j..end);
        end = j;
    }
    ranges.push(0..end);
    ranges.reverse();
    ranges
}

/// Divide-and-conquer fill of `cur[lo..=hi]` using the monotonicity of the
/// optimal split point.
#[allow(clippy::too_many_arguments)]
fn solve_layer(
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
    prev: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
    cur: &mut [f64],
    arg: &mut [usize],
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = (f64::INFINITY, opt_lo);
    for j in opt_lo..=opt_hi.min(mid - 1) {
        let c = prev[j] + cost(j, mid);
        if c < best.0 {
            best = (c, j);
        }
    }
    cur[mid] = best.0;
    arg[mid] = best.1;
    if mid > lo {
        solve_layer(lo, mid - 1, opt_lo, best.1, prev, cost, cur, arg);
    }
    solve_layer(mid + 1, hi, best.1, opt_hi, prev, cost, cur, arg);
}

/// Serializes infinite boundaries as the strings `"-inf"` and `"inf"`.
mod extended_floats {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let repr: Vec<Repr> = values
            .iter()
            .map(|&v| match v {
                f64::INFINITY => Repr::Text("inf".into()),
                f64::NEG_INFINITY => Repr::Text("-inf".into()),
                v => Repr::Num(v),
            })
            .collect();
        repr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Num(v) => Ok(v),
                Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
                Repr::Text(t) => Err(D::Error::custom(format!("bad boundary {t:?}"))),
            })
            .collect()
    }
}
