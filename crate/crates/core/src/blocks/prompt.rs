use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BlockAction, BlocksError, BlocksState, Problem};

/// Instruction block shared by the easy and hard prompt settings.
pub const INSTRUCTIONS: &str = include_str!("../../templates/instructions.txt");
/// The shorter domain description of the normal task setting.
pub const DOMAIN_INTRO: &str = include_str!("../../templates/domain_intro.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    /// Demonstrations share the query's minimum plan length.
    Easy,
    /// Demonstrations come from the global pool regardless of length.
    Hard,
}

/// A solved instance used as an in-context example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub problem: Problem,
    pub plan: Vec<BlockAction>,
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub shots: usize,
    pub pool: Vec<Demonstration>,
    pub seed: u64,
}

impl PromptTemplate {
    pub fn zero_shot(kind: TemplateKind) -> Self {
        Self { kind, shots: 0, pool: Vec::new(), seed: 0 }
    }

    /// Picks `shots` demonstrations for `problem` from the pool.
    pub fn select(&self, problem: &Problem, min_length: usize) -> Result<Vec<&Demonstration>, BlocksError> {
        let mut candidates: Vec<&Demonstration> = self
            .pool
            .iter()
            .filter(|d| d.problem != *problem)
            .filter(|d| self.kind == TemplateKind::Hard || d.plan.len() == min_length)
            .collect();
        if candidates.len() < self.shots {
            return Err(BlocksError::MissingDemonstrations { needed: self.shots, available: candidates.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        candidates.shuffle(&mut rng);
        candidates.truncate(self.shots);
        Ok(candidates)
    }
}

fn join_facts(facts: &[String]) -> String {
    match facts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn describe_state(problem: &Problem, state: &BlocksState) -> String {
    let name = |b: super::Block| &problem.blocks[b.index()];
    let mut facts: Vec<String> = state.clear().into_iter().map(|b| format!("the {} block is clear", name(b))).collect();
    match state.holding() {
        None => facts.push("the hand is empty".into()),
        Some(h) => facts.push(format!("I am holding the {} block", name(h))),
    }
    facts.extend(
        state.on_pairs().into_iter().map(|(t, b)| format!("the {} block is on top of the {} block", name(t), name(b))),
    );
    facts.extend(state.on_table().into_iter().map(|b| format!("the {} block is on the table", name(b))));
    join_facts(&facts)
}

/// The `[STATEMENT]` section describing `state` and the goal of `problem`.
pub fn statement(problem: &Problem, state: &BlocksState) -> String {
    let name = |b: super::Block| &problem.blocks[b.index()];
    let goals: Vec<String> = problem
        .goal
        .iter()
        .map(|&(t, b)| format!("the {} block is on top of the {} block", name(t), name(b)))
        .collect();
    format!(
        "[STATEMENT]\nAs initial conditions I have that, {}.\nMy goal is to have that {}.\nMy plan is as follows:\n[End Of STATEMENT]\n",
        describe_state(problem, state),
        join_facts(&goals)
    )
}

fn plan_lines(problem: &Problem, plan: &[BlockAction]) -> String {
    plan.iter().map(|a| format!("{}\n", a.describe(&problem.blocks))).collect()
}

/// Renders a completion-mode prompt: instructions, demonstrations, the query
/// statement and the actions taken so far, ending inside the open `[PLAN]`.
pub fn render_prompt(
    problem: &Problem,
    history: &[BlockAction],
    template: &PromptTemplate,
) -> Result<String, BlocksError> {
    let demos = if template.shots == 0 {
        Vec::new()
    } else {
        let min_length = problem.min_length()?;
        template.select(problem, min_length)?
    };
    let mut out = String::from(INSTRUCTIONS);
    out.push('\n');
    for d in demos {
        out.push_str(&statement(&d.problem, &d.problem.initial));
        out.push_str("\n[PLAN]\n");
        out.push_str(&plan_lines(&d.problem, &d.plan));
        out.push_str("[PLAN END]\n\n");
    }
    out.push_str(&statement(problem, &problem.initial));
    out.push_str("\n[PLAN]\n");
    out.push_str(&plan_lines(problem, history));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{bfs_min_plan, sample_problem, Block, Support};

    fn second_example() -> Problem {
        // red on blue, yellow on orange; goal orange on red
        let s = BlocksState::from_supports(vec![
            Support::On(Block(1)),
            Support::Table,
            Support::Table,
            Support::On(Block(2)),
        ])
        .unwrap();
        let names = ["red", "blue", "orange", "yellow"].map(String::from).to_vec();
        Problem::new(names, s, vec![(Block(2), Block(0))]).unwrap()
    }

    #[test]
    fn statement_matches_reference_layout() {
        let p = second_example();
        let text = statement(&p, &p.initial);
        assert_eq!(
            text,
            "[STATEMENT]\nAs initial conditions I have that, the red block is clear, the yellow block is clear, \
the hand is empty, the red block is on top of the blue block, the yellow block is on top of the orange block, \
the blue block is on the table and the orange block is on the table.\nMy goal is to have that the orange block \
is on top of the red block.\nMy plan is as follows:\n[End Of STATEMENT]\n"
        );
    }

    #[test]
    fn zero_shot_opens_with_instructions() {
        let p = sample_problem();
        let text = render_prompt(&p, &[], &PromptTemplate::zero_shot(TemplateKind::Easy)).unwrap();
        assert!(text.starts_with("I am playing with a set of blocks"));
        assert!(text.ends_with("[End Of STATEMENT]\n\n[PLAN]\n"));
        assert!(DOMAIN_INTRO.starts_with("I am playing with a set of objects"));
    }

    fn demo(p: Problem) -> Demonstration {
        let mut plan = Vec::new();
        let mut s = p.initial.clone();
        while !p.is_goal(&s) {
            let a = *bfs_min_plan(&p, &s).unwrap().first_optimal_actions.iter().next().unwrap();
            s = s.apply(&a).unwrap();
            plan.push(a);
        }
        Demonstration { problem: p, plan }
    }

    #[test]
    fn easy_uses_same_length_pool_and_hard_does_not() {
        let four = demo(sample_problem());
        let two = demo(second_example()); // unstack yellow... longer than two; length computed below
        let mut other_four = sample_problem();
        other_four.blocks.swap(0, 3);
        let other_four = demo(other_four);
        let pool = vec![four.clone(), two.clone(), other_four.clone()];
        let query = {
            let mut q = sample_problem();
            q.blocks[0] = "green".into();
            q
        };
        let easy = PromptTemplate { kind: TemplateKind::Easy, shots: 2, pool: pool.clone(), seed: 1 };
        let picked = easy.select(&query, 4).unwrap();
        assert!(picked.iter().all(|d| d.plan.len() == 4));
        let easy3 = PromptTemplate { shots: 3, ..easy };
        if two.plan.len() != 4 {
            assert!(matches!(easy3.select(&query, 4), Err(BlocksError::MissingDemonstrations { .. })));
        }
        let hard = PromptTemplate { kind: TemplateKind::Hard, shots: 3, pool, seed: 1 };
        assert_eq!(hard.select(&query, 4).unwrap().len(), 3);
        let text = render_prompt(&query, &four.plan[..1], &PromptTemplate { shots: 2, ..hard }).unwrap();
        assert_eq!(text.matches("[STATEMENT]").count(), 3);
        assert_eq!(text.matches("[PLAN END]").count(), 2);
        assert!(text.ends_with("[PLAN]\nunstack the blue block from on top of the orange block\n"));
    }
}
