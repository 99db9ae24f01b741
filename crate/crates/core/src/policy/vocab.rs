use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::blocks::{statement, ActionKind, Block, BlockAction, Problem};

pub type TokenId = u32;

pub const NEWLINE: &str = "\n";
pub const PLAN_MARKER: &str = "[PLAN]";

/// Word-level tokens of the statement and action grammars.
const BASE_TOKENS: &[&str] = &[
    "\n",
    "[STATEMENT]",
    "[End Of STATEMENT]",
    "[PLAN]",
    "[PLAN END]",
    "As",
    "initial",
    "conditions",
    "I",
    "am",
    "holding",
    "have",
    "that",
    ",",
    "the",
    "block",
    "is",
    "clear",
    "hand",
    "empty",
    "on",
    "top",
    "of",
    "table",
    "and",
    ".",
    "My",
    "goal",
    "to",
    "plan",
    "as",
    "follows",
    ":",
    "pick",
    "up",
    "unstack",
    "from",
    "put",
    "down",
    "stack",
    "Is",
    "this",
    "answer",
    "correct/good",
    "?",
    "good",
    "bad",
];

/// Ordered, duplicate-free token list plus the markers that end an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyDoc")]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos_markers: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

#[derive(Deserialize)]
struct VocabularyDoc {
    tokens: Vec<String>,
    eos_markers: Vec<String>,
}

impl TryFrom<VocabularyDoc> for Vocabulary {
    type Error = PolicyError;

    fn try_from(doc: VocabularyDoc) -> Result<Self, Self::Error> {
        Vocabulary::new(doc.tokens, doc.eos_markers)
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_markers: Vec<String>) -> Result<Self, PolicyError> {
        if tokens.is_empty() {
            return Err(PolicyError::Vocabulary("empty vocabulary".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(PolicyError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        for m in &eos_markers {
            if !index.contains_key(m) {
                return Err(PolicyError::Vocabulary(format!("stop marker {m:?} not in vocabulary")));
            }
        }
        Ok(Self { tokens, eos_markers, index })
    }

    /// Grammar tokens plus one token per block name. Actions end at a newline.
    pub fn blocksworld(block_names: &[String]) -> Result<Self, PolicyError> {
        let mut tokens: Vec<String> = BASE_TOKENS.iter().map(|s| s.to_string()).collect();
        for name in block_names {
            if BASE_TOKENS.contains(&name.as_str()) {
                return Err(PolicyError::Vocabulary(format!("block name {name:?} collides with a grammar word")));
            }
            tokens.push(name.clone());
        }
        Self::new(tokens, vec![NEWLINE.to_string()])
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn expect_id(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or_else(|| panic!("token {token:?} missing from vocabulary"))
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_eos(&self, id: TokenId) -> bool {
        self.eos_markers.iter().any(|m| m == self.token(id))
    }

    /// Splits text into words, `,.:?` punctuation, newlines and `[...]`
    /// markers.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, PolicyError> {
        let mut out = Vec::new();
        let mut chars = text.char_indices().peekable();
        let lookup = |s: &str| self.id(s).ok_or_else(|| PolicyError::UnknownToken(s.to_string()));
        while let Some(&(start, c)) = chars.peek() {
            if c == '\n' {
                out.push(lookup(NEWLINE)?);
                chars.next();
            } else if c.is_whitespace() {
                chars.next();
            } else if c == '[' {
                let end = text[start..].find(']').map(|e| start + e + 1).unwrap_or(text.len());
                out.push(lookup(&text[start..end])?);
                while chars.peek().is_some_and(|&(i, _)| i < end) {
                    chars.next();
                }
            } else if ",.:?".contains(c) {
                out.push(lookup(&text[start..start + 1])?);
                chars.next();
            } else {
                let mut end = start;
                while let Some(&(i, ch)) = chars.peek() {
                    if ch.is_whitespace() || ",.:?[".contains(ch) {
                        break;
                    }
                    end = i + ch.len_utf8();
                    chars.next();
                }
                out.push(lookup(&text[start..end])?);
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id);
            let glue = out.is_empty() || out.ends_with('\n') || t == NEWLINE || ",.:?".contains(t);
            if !glue {
                out.push(' ');
            }
            out.push_str(t);
        }
        out
    }
}

/// Maps between [`BlockAction`]s and their word-level token spelling for a
/// specific problem.
#[derive(Debug, Clone)]
pub struct ActionGrammar {
    block_tokens: Vec<TokenId>,
    block_of: HashMap<TokenId, Block>,
    w: Words,
}

#[derive(Debug, Clone, Copy)]
struct Words {
    pick: TokenId,
    up: TokenId,
    put: TokenId,
    down: TokenId,
    stack: TokenId,
    unstack: TokenId,
    the: TokenId,
    block: TokenId,
    on: TokenId,
    top: TokenId,
    of: TokenId,
    from: TokenId,
    newline: TokenId,
    plan: TokenId,
}

impl ActionGrammar {
    pub fn new(vocab: &Vocabulary, problem: &Problem) -> Result<Self, PolicyError> {
        let mut block_tokens = Vec::new();
        let mut block_of = HashMap::new();
        for (i, name) in problem.blocks.iter().enumerate() {
            let id = vocab.id(name).ok_or_else(|| PolicyError::UnknownToken(name.clone()))?;
            block_tokens.push(id);
            block_of.insert(id, Block(i as u8));
        }
        let g = |s: &str| vocab.id(s).ok_or_else(|| PolicyError::UnknownToken(s.to_string()));
        let w = Words {
            pick: g("pick")?,
            up: g("up")?,
            put: g("put")?,
            down: g("down")?,
            stack: g("stack")?,
            unstack: g("unstack")?,
            the: g("the")?,
            block: g("block")?,
            on: g("on")?,
            top: g("top")?,
            of: g("of")?,
            from: g("from")?,
            newline: g(NEWLINE)?,
            plan: g(PLAN_MARKER)?,
        };
        Ok(Self { block_tokens, block_of, w })
    }

    pub fn newline(&self) -> TokenId {
        self.w.newline
    }

    pub fn plan_marker(&self) -> TokenId {
        self.w.plan
    }

    /// Action tokens without the trailing newline.
    pub fn tokens(&self, a: &BlockAction) -> Vec<TokenId> {
        let w = &self.w;
        let s = self.block_tokens[a.subject.index()];
        match (a.kind, a.target) {
            (ActionKind::PickUp, _) => vec![w.pick, w.up, w.the, s, w.block],
            (ActionKind::PutDown, _) => vec![w.put, w.down, w.the, s, w.block],
            (ActionKind::Stack, Some(t)) => {
                let t = self.block_tokens[t.index()];
                vec![w.stack, w.the, s, w.block, w.on, w.top, w.of, w.the, t, w.block]
            }
            (ActionKind::Unstack, Some(t)) => {
                let t = self.block_tokens[t.index()];
                vec![w.unstack, w.the, s, w.block, w.from, w.on, w.top, w.of, w.the, t, w.block]
            }
            _ => unreachable!("stack/unstack without target"),
        }
    }

    /// Parses one action, ignoring a single trailing newline.
    pub fn parse(&self, tokens: &[TokenId]) -> Option<BlockAction> {
        let tokens = match tokens.split_last() {
            Some((&last, rest)) if last == self.w.newline => rest,
            _ => tokens,
        };
        let w = &self.w;
        let blk = |t: TokenId| self.block_of.get(&t).copied();
        match tokens {
            [p, u, th, s, b] if *p == w.pick && *u == w.up && *th == w.the && *b == w.block => {
                Some(BlockAction::pick_up(blk(*s)?))
            }
            [p, d, th, s, b] if *p == w.put && *d == w.down && *th == w.the && *b == w.block => {
                Some(BlockAction::put_down(blk(*s)?))
            }
            [st, rest @ ..] if *st == w.stack => {
                let a = BlockAction::stack(blk(*rest.get(1)?)?, blk(*rest.get(7)?)?);
                (self.tokens(&a) == tokens).then_some(a)
            }
            [un, rest @ ..] if *un == w.unstack => {
                let a = BlockAction::unstack(blk(*rest.get(1)?)?, blk(*rest.get(8)?)?);
                (self.tokens(&a) == tokens).then_some(a)
            }
            _ => None,
        }
    }
}

/// Token prefix used for the synthetic backends: the query statement, the
/// open plan marker and the actions taken so far.
pub fn plan_context(
    vocab: &Vocabulary,
    grammar: &ActionGrammar,
    problem: &Problem,
    history: &[BlockAction],
) -> Result<Vec<TokenId>, PolicyError> {
    let mut tokens = vocab.tokenize(&statement(problem, &problem.initial))?;
    tokens.push(grammar.plan_marker());
    tokens.push(grammar.newline());
    for a in history {
        tokens.extend(grammar.tokens(a));
        tokens.push(grammar.newline());
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::sample_problem;

    #[test]
    fn statement_tokenizes_and_round_trips() {
        let p = sample_problem();
        let v = Vocabulary::blocksworld(&p.blocks).unwrap();
        let text = statement(&p, &p.initial);
        let ids = v.tokenize(&text).unwrap();
        assert_eq!(v.tokenize(&v.detokenize(&ids)).unwrap(), ids);
        assert_eq!(v.token(ids[0]), "[STATEMENT]");
        assert_eq!(v.token(*ids.last().unwrap()), "\n");
    }

    #[test]
    fn unknown_word_is_an_error() {
        let v = Vocabulary::blocksworld(&["red".to_string()]).unwrap();
        assert!(matches!(v.tokenize("the purple block"), Err(PolicyError::UnknownToken(_))));
    }

    #[test]
    fn rejects_duplicates_and_colliding_names() {
        assert!(Vocabulary::new(vec!["a".into(), "a".into()], vec![]).is_err());
        assert!(Vocabulary::blocksworld(&["table".to_string()]).is_err());
    }

    #[test]
    fn grammar_round_trips_every_legal_action() {
        let p = sample_problem();
        let v = Vocabulary::blocksworld(&p.blocks).unwrap();
        let g = ActionGrammar::new(&v, &p).unwrap();
        let mut s = p.initial.clone();
        for _ in 0..3 {
            for a in s.legal_actions() {
                let toks = g.tokens(&a);
                assert_eq!(g.parse(&toks), Some(a));
                assert_eq!(v.detokenize(&toks), a.describe(&p.blocks));
            }
            let a = s.legal_actions()[0];
            s = s.apply(&a).unwrap();
        }
        assert_eq!(g.parse(&v.tokenize("pick up the block").unwrap()), None);
        assert_eq!(g.parse(&v.tokenize("stack the red block on top of the").unwrap()), None);
    }
}
