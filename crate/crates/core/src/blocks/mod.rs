//! The Blocksworld planning domain.
//!
//! States, the four actions and their preconditions, the goal test, an exact
//! breadth-first oracle for minimum plan lengths, the progress verifier used
//! by the interpretability analysis, prompt rendering and a random instance
//! generator.

mod generate;
mod oracle;
mod prompt;
mod state;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_instance, GeneratorConfig};
pub use oracle::{bfs_min_plan, verifier_progress, DistanceOracle, MinPlan, Verifier, DEFAULT_ORACLE_LIMIT};
pub use prompt::{render_prompt, statement, Demonstration, PromptTemplate, TemplateKind, DOMAIN_INTRO, INSTRUCTIONS};
pub use state::{ActionKind, Block, BlockAction, BlocksState, Support};

#[derive(Debug, Error)]
pub enum BlocksError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("illegal action {0}")]
    IllegalAction(BlockAction),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("goal unreachable")]
    Unsolvable,
    #[error("{blocks} blocks exceeds the oracle limit of {limit}")]
    OracleLimitExceeded { blocks: usize, limit: usize },
    #[error("need {needed} demonstrations, pool has {available}")]
    MissingDemonstrations { needed: usize, available: usize },
    #[error("could not generate a {steps}-step instance after {attempts} attempts")]
    GenerationFailed { steps: usize, attempts: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    #[default]
    Easy,
    Hard,
}

/// A planning instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub blocks: Vec<String>,
    pub initial: BlocksState,
    pub goal: Vec<(Block, Block)>,
    pub min_plan_length: Option<usize>,
    pub difficulty: Difficulty,
}

impl Problem {
    pub fn new(blocks: Vec<String>, initial: BlocksState, goal: Vec<(Block, Block)>) -> Result<Self, BlocksError> {
        if blocks.len() != initial.num_blocks() {
            return Err(BlocksError::InvalidProblem("block list and state disagree".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &blocks {
            if name.is_empty() || name.chars().any(|c| c.is_whitespace()) || !seen.insert(name) {
                return Err(BlocksError::InvalidProblem(format!("bad or duplicate block name {name:?}")));
            }
        }
        if goal.iter().any(|(t, b)| t.index() >= blocks.len() || b.index() >= blocks.len()) {
            return Err(BlocksError::InvalidProblem("goal references an undeclared block".into()));
        }
        Ok(Self { blocks, initial, goal, min_plan_length: None, difficulty: Difficulty::Easy })
    }

    pub fn block(&self, name: &str) -> Option<Block> {
        self.blocks.iter().position(|b| b == name).map(|i| Block(i as u8))
    }

    pub fn is_goal(&self, state: &BlocksState) -> bool {
        state.satisfies(&self.goal)
    }

    /// Minimum plan length, computed by the oracle when not already known.
    pub fn min_length(&self) -> Result<usize, BlocksError> {
        match self.min_plan_length {
            Some(l) => Ok(l),
            None => Ok(bfs_min_plan(self, &self.initial)?.length),
        }
    }

    /// Applies a plan from the initial state; `None` if any step is illegal.
    pub fn execute(&self, plan: &[BlockAction]) -> Option<BlocksState> {
        plan.iter().try_fold(self.initial.clone(), |s, a| s.apply(a).ok())
    }

    pub fn solves(&self, plan: &[BlockAction]) -> bool {
        self.execute(plan).is_some_and(|s| self.is_goal(&s))
    }

    pub fn to_json(&self) -> ProblemJson {
        let name = |b: Block| self.blocks[b.index()].clone();
        let s = &self.initial;
        ProblemJson {
            blocks: self.blocks.clone(),
            init: InitJson {
                on: s.on_pairs().into_iter().map(|(t, b)| [name(t), name(b)]).collect(),
                table: s.on_table().into_iter().map(name).collect(),
                clear: s.clear().into_iter().map(name).collect(),
                hand_empty: s.hand_empty(),
            },
            goal: GoalJson { on: self.goal.iter().map(|&(t, b)| [name(t), name(b)]).collect() },
            difficulty: self.difficulty,
            min_plan_length: self.min_plan_length,
        }
    }

    pub fn from_json(doc: &ProblemJson) -> Result<Self, BlocksError> {
        let index: BTreeMap<&str, Block> =
            doc.blocks.iter().enumerate().map(|(i, b)| (b.as_str(), Block(i as u8))).collect();
        let lookup = |name: &str| {
            index.get(name).copied().ok_or_else(|| BlocksError::InvalidProblem(format!("unknown block {name:?}")))
        };
        let mut supports = vec![None; doc.blocks.len()];
        for [top, bottom] in &doc.init.on {
            let t = lookup(top)?;
            if supports[t.index()].replace(Support::On(lookup(bottom)?)).is_some() {
                return Err(BlocksError::InvalidProblem(format!("block {top} placed twice")));
            }
        }
        for name in &doc.init.table {
            let b = lookup(name)?;
            if supports[b.index()].replace(Support::Table).is_some() {
                return Err(BlocksError::InvalidProblem(format!("block {name} placed twice")));
            }
        }
        let unplaced: Vec<usize> = (0..supports.len()).filter(|&i| supports[i].is_none()).collect();
        match (doc.init.hand_empty, unplaced.as_slice()) {
            (true, []) => {}
            (false, [i]) => supports[*i] = Some(Support::Held),
            _ => return Err(BlocksError::InvalidProblem("placements do not match hand_empty".into())),
        }
        let state = BlocksState::from_supports(supports.into_iter().map(Option::unwrap).collect())?;
        let declared_clear: Result<std::collections::BTreeSet<Block>, _> =
            doc.init.clear.iter().map(|c| lookup(c)).collect();
        if declared_clear? != state.clear() {
            return Err(BlocksError::InvalidProblem("clear list inconsistent with placements".into()));
        }
        let goal =
            doc.goal.on.iter().map(|[t, b]| Ok((lookup(t)?, lookup(b)?))).collect::<Result<Vec<_>, BlocksError>>()?;
        let mut p = Problem::new(doc.blocks.clone(), state, goal)?;
        p.difficulty = doc.difficulty;
        p.min_plan_length = doc.min_plan_length;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, BlocksError> {
        let doc: ProblemJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_json(&doc)
    }
}

impl Serialize for Problem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Problem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = ProblemJson::deserialize(d)?;
        Problem::from_json(&doc).map_err(serde::de::Error::custom)
    }
}

/// On-disk problem document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemJson {
    pub blocks: Vec<String>,
    pub init: InitJson,
    pub goal: GoalJson,
    #[serde(default)]
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_plan_length: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitJson {
    #[serde(default)]
    pub on: Vec<[String; 2]>,
    #[serde(default)]
    pub table: Vec<String>,
    #[serde(default)]
    pub clear: Vec<String>,
    pub hand_empty: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalJson {
    #[serde(default)]
    pub on: Vec<[String; 2]>,
}

#[cfg(test)]
pub(crate) fn sample_problem() -> Problem {
    // blue on orange, red and yellow on the table; goal: orange on blue.
    let doc = serde_json::json!({
        "blocks": ["red", "blue", "orange", "yellow"],
        "init": {"on": [["blue", "orange"]], "table": ["red", "orange", "yellow"],
                 "clear": ["red", "blue", "yellow"], "hand_empty": true},
        "goal": {"on": [["orange", "blue"]]},
        "difficulty": "easy"
    });
    serde_json::from_value(doc).unwrap()
}
