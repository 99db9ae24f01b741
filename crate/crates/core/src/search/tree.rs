use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockAction, BlocksState, Problem};
use crate::decoding::SpecStats;
use crate::reward::RewardBreakdown;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrigin {
    Root,
    Expansion,
    Rollout,
}

/// Token and forward-pass counts spent generating one node's action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub tokens: u64,
    pub target_forwards: u64,
    pub draft_forwards: u64,
    pub speculative: Option<SpecStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub action: Option<BlockAction>,
    pub state: BlocksState,
    pub depth: usize,
    pub v: f64,
    pub visits: u64,
    pub children: Vec<NodeId>,
    /// Goal reached, depth limit hit, generation failed, or no child could be
    /// produced.
    pub terminal: bool,
    pub malformed: bool,
    pub goal: bool,
    /// True once the node has had its own expansion step.
    pub expanded: bool,
    pub origin: NodeOrigin,
    pub reward: Option<RewardBreakdown>,
    pub decode: DecodeRecord,
}

/// Arena of search nodes; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new(root_state: BlocksState, goal: bool) -> Self {
        let root = SearchNode {
            id: 0,
            parent: None,
            action: None,
            state: root_state,
            depth: 0,
            v: 0.0,
            visits: 0,
            children: Vec::new(),
            terminal: goal,
            malformed: false,
            goal,
            expanded: false,
            origin: NodeOrigin::Root,
            reward: None,
            decode: DecodeRecord::default(),
        };
        Self { nodes: vec![root] }
    }

    pub const ROOT: NodeId = 0;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SearchNode {
        &mut self.nodes[id]
    }

    /// Adds a child and returns its id.
    #[allow(clippy::too_many_arguments)]
    pub fn add_child(
        &mut self,
        parent: NodeId,
        action: Option<BlockAction>,
        state: BlocksState,
        v: f64,
        terminal: bool,
        goal: bool,
        origin: NodeOrigin,
        reward: Option<RewardBreakdown>,
        decode: DecodeRecord,
    ) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            malformed: action.is_none(),
            action,
            state,
            depth,
            v,
            visits: 0,
            children: Vec::new(),
            terminal,
            goal,
            expanded: false,
            origin,
            reward,
            decode,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Node ids from the root to `id`.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Actions along the path to `id`.
    pub fn actions(&self, id: NodeId) -> Vec<BlockAction> {
        self.path(id).into_iter().filter_map(|n| self.nodes[n].action).collect()
    }

    pub fn child_with_action(&self, parent: NodeId, action: &BlockAction) -> Option<NodeId> {
        self.nodes[parent].children.iter().copied().find(|&c| self.nodes[c].action.as_ref() == Some(action))
    }

    /// Running mean of composite rewards along the path to `id`: entry `i`
    /// averages the rewards of the first `i` steps, and the root entry is 0.
    pub fn prefix_means(&self, id: NodeId) -> Vec<f64> {
        let mut acc = 0.0;
        self.path(id)
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                if i == 0 {
                    return 0.0;
                }
                acc += self.nodes[n].reward.as_ref().map_or(0.0, |r| r.composite);
                acc / i as f64
            })
            .collect()
    }

    /// Mean composite reward of the steps leading to `id`.
    pub fn plan_score(&self, id: NodeId) -> f64 {
        self.prefix_means(id).last().copied().unwrap_or(0.0)
    }

    /// The ended plan (goal reached or depth limit hit) with the highest
    /// [`plan_score`](Self::plan_score); without one, the highest-valued
    /// well-formed node. Ties go to the lower id.
    pub fn best_node(&self) -> NodeId {
        let best = |score: &dyn Fn(&SearchNode) -> f64, ended: bool| {
            self.nodes
                .iter()
                .filter(|n| n.id != Self::ROOT && !n.malformed && (!ended || n.terminal))
                .fold(None::<(NodeId, f64)>, |best, n| {
                    let s = score(n);
                    match best {
                        Some((_, b)) if b >= s => best,
                        _ => Some((n.id, s)),
                    }
                })
                .map(|(id, _)| id)
        };
        best(&|n| self.plan_score(n.id), true).or_else(|| best(&|n| n.v, false)).unwrap_or(Self::ROOT)
    }

    /// Graphviz rendering; nodes show action, value and visits, and the path
    /// to `highlight` is drawn bold.
    pub fn to_dot(&self, problem: &Problem, highlight: Option<NodeId>) -> String {
        let on_path: std::collections::HashSet<NodeId> =
            highlight.map(|h| self.path(h).into_iter().collect()).unwrap_or_default();
        let mut out = String::from("digraph search {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        for n in &self.nodes {
            let label = match (&n.action, n.malformed) {
                (_, true) => "(malformed)".to_string(),
                (Some(a), _) => a.describe(&problem.blocks),
                (None, _) => "root".to_string(),
            };
            let mut style = Vec::new();
            if on_path.contains(&n.id) {
                style.push("penwidth=2.5, color=\"#1f77b4\"".to_string());
            }
            if n.goal {
                style.push("style=filled, fillcolor=\"#d5f5d5\"".to_string());
            } else if n.malformed {
                style.push("style=dashed".to_string());
            }
            let extra = if style.is_empty() { String::new() } else { format!(", {}", style.join(", ")) };
            let _ = writeln!(
                out,
                "  n{} [label=\"{}\\nv={:.3} N={}\"{}];",
                n.id,
                label.replace('"', "\\\""),
                n.v,
                n.visits,
                extra
            );
        }
        for n in &self.nodes {
            for &c in &n.children {
                let bold = on_path.contains(&n.id) && on_path.contains(&c);
                let _ = writeln!(out, "  n{} -> n{}{};", n.id, c, if bold { " [penwidth=2.5]" } else { "" });
            }
        }
        out.push_str("}\n");
        out
    }
}
