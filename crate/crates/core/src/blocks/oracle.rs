use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{BlockAction, BlocksError, BlocksState, Problem};

pub const DEFAULT_ORACLE_LIMIT: usize = 8;

/// Result of an exact shortest-plan query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinPlan {
    pub length: usize,
    /// First actions that lie on at least one optimal plan. Empty when the
    /// start state already satisfies the goal.
    pub first_optimal_actions: BTreeSet<BlockAction>,
}

fn check_limit(problem: &Problem, limit: usize) -> Result<(), BlocksError> {
    let n = problem.blocks.len();
    if n > limit {
        return Err(BlocksError::OracleLimitExceeded { blocks: n, limit });
    }
    Ok(())
}

/// Breadth-first search from `from` to the nearest goal state.
///
/// Each visited state carries the bitmask of root actions that reach it at
/// minimum depth; the union over goal states of the first goal layer gives
/// every optimal first action.
pub fn bfs_min_plan(problem: &Problem, from: &BlocksState) -> Result<MinPlan, BlocksError> {
    check_limit(problem, DEFAULT_ORACLE_LIMIT)?;
    if problem.is_goal(from) {
        return Ok(MinPlan { length: 0, first_optimal_actions: BTreeSet::new() });
    }
    let roots = from.legal_actions();
    let mut seen: HashMap<u64, (usize, u32)> = HashMap::new();
    seen.insert(from.key(), (0, 0));
    let mut layer: Vec<BlocksState> = Vec::new();
    for (i, a) in roots.iter().enumerate() {
        let next = from.apply(a).expect("legal action");
        let entry = seen.entry(next.key()).or_insert((1, 0));
        if entry.0 == 1 {
            if entry.1 == 0 {
                layer.push(next);
            }
            entry.1 |= 1 << i;
        }
    }
    let mut depth = 1;
    loop {
        let hits: u32 = layer.iter().filter(|s| problem.is_goal(s)).fold(0, |m, s| m | seen[&s.key()].1);
        if hits != 0 {
            let first = roots.iter().enumerate().filter(|(i, _)| hits & (1 << i) != 0).map(|(_, a)| *a).collect();
            return Ok(MinPlan { length: depth, first_optimal_actions: first });
        }
        if layer.is_empty() {
            return Err(BlocksError::Unsolvable);
        }
        let mut next_layer = Vec::new();
        for s in &layer {
            let mask = seen[&s.key()].1;
            for a in s.legal_actions() {
                let t = s.apply(&a).expect("legal action");
                let entry = seen.entry(t.key()).or_insert((depth + 1, 0));
                if entry.0 == depth + 1 {
                    if entry.1 == 0 {
                        next_layer.push(t);
                    }
                    entry.1 |= mask;
                }
            }
        }
        layer = next_layer;
        depth += 1;
    }
}

/// Goal distance for every state reachable from the initial configuration.
///
/// Blocksworld transitions are symmetric (every action has an inverse), so
/// one multi-source BFS seeded at all goal states yields exact distances.
#[derive(Debug, Clone)]
pub struct DistanceOracle {
    blocks: usize,
    dist: HashMap<u64, u32>,
}

impl DistanceOracle {
    pub fn new(problem: &Problem) -> Result<Self, BlocksError> {
        Self::with_limit(problem, DEFAULT_ORACLE_LIMIT)
    }

    pub fn with_limit(problem: &Problem, limit: usize) -> Result<Self, BlocksError> {
        check_limit(problem, limit)?;
        let n = problem.blocks.len();
        let mut states: Vec<BlocksState> = vec![problem.initial.clone()];
        let mut index: HashMap<u64, usize> = HashMap::new();
        index.insert(problem.initial.key(), 0);
        let mut i = 0;
        while i < states.len() {
            let s = states[i].clone();
            for a in s.legal_actions() {
                let t = s.apply(&a).expect("legal action");
                if !index.contains_key(&t.key()) {
                    index.insert(t.key(), states.len());
                    states.push(t);
                }
            }
            i += 1;
        }
        let mut dist: HashMap<u64, u32> = HashMap::with_capacity(states.len());
        let mut queue = VecDeque::new();
        for s in states.iter().filter(|s| problem.is_goal(s)) {
            dist.insert(s.key(), 0);
            queue.push_back(s.clone());
        }
        if queue.is_empty() {
            return Err(BlocksError::Unsolvable);
        }
        while let Some(s) = queue.pop_front() {
            let d = dist[&s.key()];
            for a in s.legal_actions() {
                let t = s.apply(&a).expect("legal action");
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(t.key()) {
                    e.insert(d + 1);
                    queue.push_back(t);
                }
            }
        }
        Ok(Self { blocks: n, dist })
    }

    pub fn num_states(&self) -> usize {
        self.dist.len()
    }

    pub fn distance(&self, state: &BlocksState) -> Option<usize> {
        debug_assert_eq!(state.num_blocks(), self.blocks);
        self.dist.get(&state.key()).map(|&d| d as usize)
    }

    /// Legal actions that reduce the goal distance by one.
    pub fn optimal_actions(&self, state: &BlocksState) -> Vec<BlockAction> {
        let Some(d) = self.distance(state) else {
            return Vec::new();
        };
        if d == 0 {
            return Vec::new();
        }
        state
            .legal_actions()
            .into_iter()
            .filter(|a| {
                let t = state.apply(a).expect("legal action");
                self.distance(&t) == Some(d - 1)
            })
            .collect()
    }

    pub fn is_optimal(&self, state: &BlocksState, action: &BlockAction) -> bool {
        match (self.distance(state), state.apply(action)) {
            (Some(d), Ok(t)) if d > 0 => self.distance(&t) == Some(d - 1),
            _ => false,
        }
    }
}

/// Plan-progress verifier: `(L0 - L(s)) / L0` with `L` the exact remaining
/// plan length. Values can go negative after detours.
#[derive(Debug, Clone)]
pub struct Verifier {
    oracle: DistanceOracle,
    initial_length: usize,
}

impl Verifier {
    pub fn new(problem: &Problem) -> Result<Self, BlocksError> {
        let oracle = DistanceOracle::new(problem)?;
        let initial_length = oracle.distance(&problem.initial).ok_or(BlocksError::Unsolvable)?;
        Ok(Self { oracle, initial_length })
    }

    pub fn from_oracle(oracle: DistanceOracle, problem: &Problem) -> Result<Self, BlocksError> {
        let initial_length = oracle.distance(&problem.initial).ok_or(BlocksError::Unsolvable)?;
        Ok(Self { oracle, initial_length })
    }

    pub fn initial_length(&self) -> usize {
        self.initial_length
    }

    pub fn oracle(&self) -> &DistanceOracle {
        &self.oracle
    }

    pub fn progress(&self, state: &BlocksState) -> Result<f64, BlocksError> {
        let remaining = self.oracle.distance(state).ok_or(BlocksError::Unsolvable)?;
        if self.initial_length == 0 {
            return Ok(if remaining == 0 { 1.0 } else { -(remaining as f64) });
        }
        Ok((self.initial_length as f64 - remaining as f64) / self.initial_length as f64)
    }
}

/// One-shot progress query computed with two BFS calls.
pub fn verifier_progress(problem: &Problem, state: &BlocksState) -> Result<f64, BlocksError> {
    let l0 = bfs_min_plan(problem, &problem.initial)?.length;
    let l = bfs_min_plan(problem, state)?.length;
    if l0 == 0 {
        return Ok(if l == 0 { 1.0 } else { -(l as f64) });
    }
    Ok((l0 as f64 - l as f64) / l0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{sample_problem, BlockAction};

    #[test]
    fn satisfied_goal_is_zero() {
        let mut p = sample_problem();
        p.goal.clear();
        let r = bfs_min_plan(&p, &p.initial).unwrap();
        assert_eq!(r.length, 0);
        assert!(r.first_optimal_actions.is_empty());
    }

    #[test]
    fn sample_needs_four_steps() {
        let p = sample_problem();
        let r = bfs_min_plan(&p, &p.initial).unwrap();
        assert_eq!(r.length, 4);
        let (b, o) = (p.block("blue").unwrap(), p.block("orange").unwrap());
        assert_eq!(r.first_optimal_actions, [BlockAction::unstack(b, o)].into());
        let oracle = DistanceOracle::new(&p).unwrap();
        assert_eq!(oracle.distance(&p.initial), Some(4));
        assert_eq!(oracle.optimal_actions(&p.initial), vec![BlockAction::unstack(b, o)]);
    }

    #[test]
    fn contradictory_goal_is_unsolvable() {
        let mut p = sample_problem();
        let (r, b, o) = (p.block("red").unwrap(), p.block("blue").unwrap(), p.block("orange").unwrap());
        p.goal = vec![(r, b), (r, o)];
        assert!(matches!(bfs_min_plan(&p, &p.initial), Err(BlocksError::Unsolvable)));
        assert!(matches!(DistanceOracle::new(&p), Err(BlocksError::Unsolvable)));
    }

    #[test]
    fn oracle_limit_enforced() {
        let names: Vec<String> = (0..9).map(|i| format!("b{i}")).collect();
        let p = Problem::new(names, BlocksState::all_on_table(9), vec![]).unwrap();
        assert!(matches!(bfs_min_plan(&p, &p.initial), Err(BlocksError::OracleLimitExceeded { .. })));
    }

    #[test]
    fn detour_gives_negative_progress() {
        let p = sample_problem();
        let v = Verifier::new(&p).unwrap();
        assert_eq!(v.progress(&p.initial).unwrap(), 0.0);
        // picking up red is a detour: remaining length grows to 5
        let red = p.block("red").unwrap();
        let s = p.initial.apply(&BlockAction::pick_up(red)).unwrap();
        let expected = (4.0 - bfs_min_plan(&p, &s).unwrap().length as f64) / 4.0;
        assert_eq!(v.progress(&s).unwrap(), expected);
        assert!(expected < 0.0);
        assert_eq!(verifier_progress(&p, &s).unwrap(), expected);
    }
}
