use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{bfs_min_plan, Block, BlockAction, BlocksError, BlocksState, Difficulty, Problem, Support};

/// Colour palette used for block names.
pub const BLOCK_NAMES: [&str; 16] = [
    "red", "blue", "orange", "yellow", "white", "magenta", "black", "cyan", "green", "violet", "silver", "gold",
    "brown", "pink", "purple", "grey",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { min_blocks: 3, max_blocks: 6, max_attempts: 20_000 }
    }
}

fn random_configuration(n: usize, rng: &mut impl Rng) -> BlocksState {
    let mut order: Vec<u8> = (0..n as u8).collect();
    order.shuffle(rng);
    let mut supports = vec![Support::Table; n];
    for w in order.windows(2) {
        // each consecutive pair continues the current tower with probability 1/2
        if rng.gen_bool(0.5) {
            supports[w[1] as usize] = Support::On(Block(w[0]));
        }
    }
    BlocksState::from_supports(supports).expect("towers are valid")
}

/// Draws a solvable instance whose minimum plan length is exactly `steps`.
///
/// A random goal tower configuration is perturbed by a random walk of legal
/// actions (never immediately undoing the previous one); the walk's end
/// becomes the initial state if BFS confirms the required length.
pub fn generate_instance(steps: usize, cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<Problem, BlocksError> {
    let max_blocks = cfg.max_blocks.min(BLOCK_NAMES.len());
    let lo = cfg.min_blocks.max((steps / 2 + 1).min(max_blocks)).min(max_blocks);
    for _ in 0..cfg.max_attempts {
        let n = rng.gen_range(lo..=max_blocks);
        let goal_state = random_configuration(n, rng);
        let goal: Vec<(Block, Block)> = goal_state.on_pairs().into_iter().collect();
        if goal.is_empty() && steps > 0 {
            continue;
        }
        let walk = steps + 2 * rng.gen_range(0..=2);
        let mut s = goal_state.clone();
        let mut last: Option<BlockAction> = None;
        for _ in 0..walk {
            let options: Vec<BlockAction> =
                s.legal_actions().into_iter().filter(|a| Some(a.inverse()) != last).collect();
            let Some(a) = options.choose(rng) else { break };
            s = s.apply(a)?;
            last = Some(*a);
        }
        if !s.hand_empty() {
            continue;
        }
        let names = BLOCK_NAMES[..n].iter().map(|s| s.to_string()).collect();
        let mut problem = Problem::new(names, s, goal)?;
        let length = bfs_min_plan(&problem, &problem.initial)?.length;
        if length == steps {
            problem.min_plan_length = Some(length);
            problem.difficulty = Difficulty::Easy;
            return Ok(problem);
        }
    }
    Err(BlocksError::GenerationFailed { steps, attempts: cfg.max_attempts })
}
