/// `v + C·sqrt(ln N_parent / N_j)` for a visited child.
pub fn uct_score(v: f64, parent_visits: u64, visits: u64, c: f64) -> f64 {
    debug_assert!(visits > 0);
    v + c * ((parent_visits.max(1) as f64).ln() / visits as f64).sqrt()
}

/// Index of the child to descend into, given `(v, N)` per child.
///
/// The first unvisited child wins outright; otherwise the highest UCT score,
/// ties going to the lowest index. `None` for an empty slice.
pub fn uct_select(children: &[(f64, u64)], parent_visits: u64, c: f64) -> Option<usize> {
    if let Some(i) = children.iter().position(|&(_, n)| n == 0) {
        return Some(i);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &(v, n)) in children.iter().enumerate() {
        let s = uct_score(v, parent_visits, n, c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// `α·v_node + (1 − α)·v_max`.
pub fn mix_value(v_node: f64, v_max: f64, alpha: f64) -> f64 {
    alpha * v_node + (1.0 - alpha) * v_max
}

/// Path value that rewards steady progress: increments are summed, negative
/// ones halved after clipping at −0.1, and `λ` is charged per node.
pub fn path_value(p: &[f64], lambda: f64) -> f64 {
    let gains: f64 = p
        .windows(2)
        .map(|w| {
            let delta = w[1] - w[0];
            if delta >= 0.0 {
                delta
            } else {
                0.5 * delta.max(-0.1)
            }
        })
        .sum();
    gains - lambda * p.len() as f64
}

/// Repeatedly selects among children with fixed values, counting visits.
/// Every child starts with `initial_visits` visits.
pub fn selection_counts(values: &[f64], initial_visits: u64, rounds: usize, c: f64) -> Vec<u64> {
    let mut visits = vec![initial_visits; values.len()];
    let mut parent: u64 = visits.iter().sum();
    let mut counts = vec![0; values.len()];
    for _ in 0..rounds {
        let children: Vec<(f64, u64)> = values.iter().copied().zip(visits.iter().copied()).collect();
        let Some(i) = uct_select(&children, parent, c) else {
            break;
        };
        counts[i] += 1;
        visits[i] += 1;
        parent += 1;
    }
    counts
}

/// Shannon entropy (nats) of the empirical distribution of `counts`.
pub fn selection_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}
