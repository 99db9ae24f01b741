use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::BlocksError;

/// Index of a block inside its [`Problem`](super::Problem) block list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Block(pub u8);

impl Block {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Where a block currently rests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Table,
    On(Block),
    Held,
}

/// A Blocksworld configuration.
///
/// Stored as one [`Support`] per block; the `on`, `on_table`, `clear` and
/// `holding` relations are derived from it, so the relational invariants
/// hold by construction once [`BlocksState::from_supports`] has accepted the
/// input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Support>", into = "Vec<Support>")]
pub struct BlocksState {
    supports: Vec<Support>,
}

impl TryFrom<Vec<Support>> for BlocksState {
    type Error = BlocksError;

    fn try_from(supports: Vec<Support>) -> Result<Self, Self::Error> {
        BlocksState::from_supports(supports)
    }
}

impl From<BlocksState> for Vec<Support> {
    fn from(s: BlocksState) -> Self {
        s.supports
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    PickUp,
    PutDown,
    Stack,
    Unstack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockAction {
    pub kind: ActionKind,
    pub subject: Block,
    pub target: Option<Block>,
}

impl BlockAction {
    pub fn pick_up(b: Block) -> Self {
        Self { kind: ActionKind::PickUp, subject: b, target: None }
    }

    pub fn put_down(b: Block) -> Self {
        Self { kind: ActionKind::PutDown, subject: b, target: None }
    }

    pub fn stack(b: Block, onto: Block) -> Self {
        Self { kind: ActionKind::Stack, subject: b, target: Some(onto) }
    }

    pub fn unstack(b: Block, from: Block) -> Self {
        Self { kind: ActionKind::Unstack, subject: b, target: Some(from) }
    }

    /// The action that undoes this one.
    pub fn inverse(&self) -> Self {
        match self.kind {
            ActionKind::PickUp => Self::put_down(self.subject),
            ActionKind::PutDown => Self::pick_up(self.subject),
            ActionKind::Stack => Self::unstack(self.subject, self.target.unwrap()),
            ActionKind::Unstack => Self::stack(self.subject, self.target.unwrap()),
        }
    }

    /// Natural-language rendering, e.g. `stack the red block on top of the blue block`.
    pub fn describe(&self, names: &[String]) -> String {
        let s = &names[self.subject.index()];
        match (self.kind, self.target) {
            (ActionKind::PickUp, _) => format!("pick up the {s} block"),
            (ActionKind::PutDown, _) => format!("put down the {s} block"),
            (ActionKind::Stack, Some(t)) => {
                format!("stack the {s} block on top of the {} block", names[t.index()])
            }
            (ActionKind::Unstack, Some(t)) => {
                format!("unstack the {s} block from on top of the {} block", names[t.index()])
            }
            _ => unreachable!("stack/unstack without target"),
        }
    }
}

impl fmt::Display for BlockAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            Some(t) => write!(f, "{:?}({}, {})", self.kind, self.subject.0, t.0),
            None => write!(f, "{:?}({})", self.kind, self.subject.0),
        }
    }
}

impl BlocksState {
    /// All blocks on the table, hand empty.
    pub fn all_on_table(n: usize) -> Self {
        Self { supports: vec![Support::Table; n] }
    }

    pub fn from_supports(supports: Vec<Support>) -> Result<Self, BlocksError> {
        let n = supports.len();
        if n > 16 {
            return Err(BlocksError::InvalidState(format!("{n} blocks exceeds the 16 block maximum")));
        }
        let mut held = 0;
        let mut supported = vec![false; n];
        for (i, s) in supports.iter().enumerate() {
            match *s {
                Support::Held => held += 1,
                Support::On(b) => {
                    if b.index() >= n || b.index() == i {
                        return Err(BlocksError::InvalidState(format!("block {i} rests on invalid block {}", b.0)));
                    }
                    if supports[b.index()] == Support::Held {
                        return Err(BlocksError::InvalidState(format!("block {i} rests on a held block")));
                    }
                    if supported[b.index()] {
                        return Err(BlocksError::InvalidState(format!("block {} supports two blocks", b.0)));
                    }
                    supported[b.index()] = true;
                }
                Support::Table => {}
            }
        }
        if held > 1 {
            return Err(BlocksError::InvalidState("more than one block held".into()));
        }
        // Every chain must bottom out on the table or in the hand.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Support::On(b) = supports[cur] {
                cur = b.index();
                steps += 1;
                if steps > n {
                    return Err(BlocksError::InvalidState("cyclic on-relation".into()));
                }
            }
        }
        Ok(Self { supports })
    }

    pub fn num_blocks(&self) -> usize {
        self.supports.len()
    }

    pub fn support(&self, b: Block) -> Support {
        self.supports[b.index()]
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> {
        (0..self.supports.len() as u8).map(Block)
    }

    pub fn holding(&self) -> Option<Block> {
        self.blocks().find(|&b| self.support(b) == Support::Held)
    }

    pub fn hand_empty(&self) -> bool {
        self.holding().is_none()
    }

    /// The block resting directly on `b`, if any.
    pub fn above(&self, b: Block) -> Option<Block> {
        self.blocks().find(|&x| self.support(x) == Support::On(b))
    }

    pub fn is_on(&self, top: Block, bottom: Block) -> bool {
        self.support(top) == Support::On(bottom)
    }

    pub fn is_clear(&self, b: Block) -> bool {
        self.support(b) != Support::Held && self.above(b).is_none()
    }

    pub fn on_pairs(&self) -> BTreeSet<(Block, Block)> {
        self.blocks()
            .filter_map(|b| match self.support(b) {
                Support::On(t) => Some((b, t)),
                _ => None,
            })
            .collect()
    }

    pub fn on_table(&self) -> BTreeSet<Block> {
        self.blocks().filter(|&b| self.support(b) == Support::Table).collect()
    }

    pub fn clear(&self) -> BTreeSet<Block> {
        self.blocks().filter(|&b| self.is_clear(b)).collect()
    }

    /// Packs the state into a `u64`, five bits per block.
    pub fn key(&self) -> u64 {
        self.supports.iter().enumerate().fold(0u64, |acc, (i, s)| {
            let code = match s {
                Support::Table => 0u64,
                Support::Held => 1,
                Support::On(b) => 2 + b.0 as u64,
            };
            acc | (code << (5 * i))
        })
    }

    pub fn from_key(key: u64, n: usize) -> Self {
        let supports = (0..n)
            .map(|i| match (key >> (5 * i)) & 0x1f {
                0 => Support::Table,
                1 => Support::Held,
                c => Support::On(Block((c - 2) as u8)),
            })
            .collect();
        Self { supports }
    }

    /// Checks the relational invariants directly on the derived relations.
    pub fn check_invariants(&self) -> Result<(), BlocksError> {
        let on = self.on_pairs();
        let table = self.on_table();
        let clear = self.clear();
        for b in self.blocks() {
            let places = on.iter().filter(|(t, _)| *t == b).count()
                + usize::from(table.contains(&b))
                + usize::from(self.holding() == Some(b));
            if places != 1 {
                return Err(BlocksError::InvalidState(format!("block {} has {places} placements", b.0)));
            }
            let covered = on.iter().filter(|(_, bottom)| *bottom == b).count();
            if covered > 1 {
                return Err(BlocksError::InvalidState(format!("block {} supports {covered} blocks", b.0)));
            }
            let expect_clear = covered == 0 && self.holding() != Some(b);
            if clear.contains(&b) != expect_clear {
                return Err(BlocksError::InvalidState(format!("clear flag of block {} inconsistent", b.0)));
            }
        }
        BlocksState::from_supports(self.supports.clone()).map(|_| ())
    }

    pub fn legal_actions(&self) -> Vec<BlockAction> {
        match self.holding() {
            Some(h) => {
                let mut out = vec![BlockAction::put_down(h)];
                out.extend(self.blocks().filter(|&b| b != h && self.is_clear(b)).map(|b| BlockAction::stack(h, b)));
                out
            }
            None => self
                .blocks()
                .filter(|&b| self.is_clear(b))
                .map(|b| match self.support(b) {
                    Support::Table => BlockAction::pick_up(b),
                    Support::On(t) => BlockAction::unstack(b, t),
                    Support::Held => unreachable!(),
                })
                .collect(),
        }
    }

    pub fn is_legal(&self, action: &BlockAction) -> bool {
        let n = self.num_blocks();
        if action.subject.index() >= n || action.target.is_some_and(|t| t.index() >= n) {
            return false;
        }
        let s = action.subject;
        match (action.kind, action.target) {
            (ActionKind::PickUp, None) => self.hand_empty() && self.support(s) == Support::Table && self.is_clear(s),
            (ActionKind::Unstack, Some(t)) => self.hand_empty() && self.is_on(s, t) && self.is_clear(s),
            (ActionKind::PutDown, None) => self.holding() == Some(s),
            (ActionKind::Stack, Some(t)) => self.holding() == Some(s) && t != s && self.is_clear(t),
            _ => false,
        }
    }

    pub fn apply(&self, action: &BlockAction) -> Result<BlocksState, BlocksError> {
        if !self.is_legal(action) {
            return Err(BlocksError::IllegalAction(*action));
        }
        let mut next = self.clone();
        next.supports[action.subject.index()] = match action.kind {
            ActionKind::PickUp | ActionKind::Unstack => Support::Held,
            ActionKind::PutDown => Support::Table,
            ActionKind::Stack => Support::On(action.target.unwrap()),
        };
        Ok(next)
    }

    /// True when every `(top, bottom)` pair in `goal` holds.
    pub fn satisfies(&self, goal: &[(Block, Block)]) -> bool {
        goal.iter().all(|&(t, b)| self.is_on(t, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Block = Block(0);
    const B: Block = Block(1);
    const C: Block = Block(2);

    #[test]
    fn pick_up_legal_stack_not() {
        let s = BlocksState::all_on_table(2);
        let acts = s.legal_actions();
        assert!(acts.contains(&BlockAction::pick_up(A)));
        assert!(!acts.iter().any(|a| a.kind == ActionKind::Stack));
    }

    #[test]
    fn holding_gives_put_down_and_stack() {
        let s = BlocksState::from_supports(vec![Support::Held, Support::Table]).unwrap();
        let acts: BTreeSet<_> = s.legal_actions().into_iter().collect();
        let expected: BTreeSet<_> = [BlockAction::put_down(A), BlockAction::stack(A, B)].into();
        assert_eq!(acts, expected);
    }

    #[test]
    fn unstack_then_put_down() {
        let s = BlocksState::from_supports(vec![Support::On(B), Support::Table]).unwrap();
        let t = s.apply(&BlockAction::unstack(A, B)).unwrap();
        assert_eq!(t.holding(), Some(A));
        assert!(t.is_clear(B));
        let u = t.apply(&BlockAction::put_down(A)).unwrap();
        assert!(u.on_table().contains(&A) && u.is_clear(A) && u.hand_empty());
    }

    #[test]
    fn illegal_action_is_rejected() {
        let s = BlocksState::from_supports(vec![Support::On(B), Support::Table]).unwrap();
        assert!(matches!(s.apply(&BlockAction::pick_up(B)), Err(BlocksError::IllegalAction(_))));
        assert!(s.apply(&BlockAction::stack(A, C)).is_err());
    }

    #[test]
    fn rejects_invalid_supports() {
        assert!(BlocksState::from_supports(vec![Support::On(B), Support::On(A)]).is_err());
        assert!(BlocksState::from_supports(vec![Support::Held, Support::Held]).is_err());
        assert!(BlocksState::from_supports(vec![Support::On(C), Support::On(C), Support::Table]).is_err());
        assert!(BlocksState::from_supports(vec![Support::On(B), Support::Held]).is_err());
    }

    #[test]
    fn key_round_trips() {
        let s = BlocksState::from_supports(vec![Support::On(C), Support::Held, Support::Table]).unwrap();
        assert_eq!(BlocksState::from_key(s.key(), 3), s);
    }
}
