// SPDX-License-Identifier: Apache-2.0

//! Per-function control-flow graphs.
//!
//! Blocks hold only simple statements; control flow lives in the
//! terminator. A block is closed at every branch, loop head, trylock and
//! after any statement that calls or spawns a program function, so a call
//! site is always the last statement of its block.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Pos, Stmt};
use super::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminator {
    Jump(BlockId),
    Branch {
        cond: Expr,
        then_to: BlockId,
        else_to: BlockId,
        loop_head: bool,
        pos: Pos,
    },
    TryLock {
        mutex: String,
        acquired: BlockId,
        busy: BlockId,
        pos: Pos,
    },
    Return {
        value: Option<Expr>,
        pos: Pos,
    },
}

impl Terminator {
    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Terminator::Jump(b) => vec![*b],
            Terminator::Branch { then_to, else_to, .. } => vec![*then_to, *else_to],
            Terminator::TryLock { acquired, busy, .. } => vec![*acquired, *busy],
            Terminator::Return { .. } => Vec::new(),
        }
    }

    /// Successor taken for a decision polarity on a two-way terminator.
    pub fn edge(&self, polarity: bool) -> Option<BlockId> {
        match self {
            Terminator::Branch { then_to, else_to, .. } => Some(if polarity { *then_to } else { *else_to }),
            Terminator::TryLock { acquired, busy, .. } => Some(if polarity { *acquired } else { *busy }),
            _ => None,
        }
    }

    pub fn is_decision(&self) -> bool {
        matches!(self, Terminator::Branch { .. } | Terminator::TryLock { .. })
    }

    fn remap(&mut self, map: &[Option<usize>]) {
        let fix = |b: &mut BlockId| b.0 = map[b.0].expect("edge into dropped block");
        match self {
            Terminator::Jump(b) => fix(b),
            Terminator::Branch { then_to, else_to, .. } => {
                fix(then_to);
                fix(else_to);
            }
            Terminator::TryLock { acquired, busy, .. } => {
                fix(acquired);
                fix(busy);
            }
            Terminator::Return { .. } => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub stmts: Vec<Stmt>,
    pub term: Terminator,
    pub line: u32,
}

impl Block {
    pub fn is_loop_head(&self) -> bool {
        matches!(self.term, Terminator::Branch { loop_head: true, .. })
    }

    /// Number of extern calls evaluated anywhere in the block.
    pub fn extern_calls(&self) -> usize {
        let mut n: usize = self
            .stmts
            .iter()
            .flat_map(|s| s.exprs())
            .map(|e| e.extern_calls())
            .sum();
        if let Terminator::Branch { cond, .. } = &self.term {
            n += cond.extern_calls();
        }
        if let Terminator::Return { value: Some(v), .. } = &self.term {
            n += v.extern_calls();
        }
        n
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    pub back_edges: Vec<(BlockId, BlockId)>,
}

impl Cfg {
    pub fn entry(&self) -> BlockId {
        BlockId(0)
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn is_back_edge(&self, from: BlockId, to: BlockId) -> bool {
        self.back_edges.contains(&(from, to))
    }

    pub fn predecessors(&self, id: BlockId) -> Vec<BlockId> {
        self.blocks
            .iter()
            .filter(|b| b.term.successors().contains(&id))
            .map(|b| b.id)
            .collect()
    }

    pub fn exits(&self) -> impl Iterator<Item = &Block> {
        self.blocks
            .iter()
            .filter(|b| matches!(b.term, Terminator::Return { .. }))
    }
}

struct Partial {
    stmts: Vec<Stmt>,
    term: Option<Terminator>,
    line: u32,
}

struct Builder {
    blocks: Vec<Partial>,
    back_edges: Vec<(usize, usize)>,
}

impl Builder {
    fn new_block(&mut self, line: u32) -> usize {
        self.blocks.push(Partial {
            stmts: Vec::new(),
            term: None,
            line,
        });
        self.blocks.len() - 1
    }

    fn terminate(&mut self, b: usize, term: Terminator) {
        if self.blocks[b].term.is_none() {
            self.blocks[b].term = Some(term);
        }
    }

    fn lower(&mut self, stmts: &[Stmt], mut cur: usize) -> usize {
        for stmt in stmts {
            let line = stmt.pos().line;
            if self.blocks[cur].stmts.is_empty() && self.blocks[cur].line == 0 {
                self.blocks[cur].line = line;
            }
            match stmt {
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                    pos,
                } => {
                    let then_b = self.new_block(line);
                    let else_b = (!else_body.is_empty()).then(|| self.new_block(line));
                    let join = self.new_block(0);
                    self.terminate(
                        cur,
                        Terminator::Branch {
                            cond: cond.clone(),
                            then_to: BlockId(then_b),
                            else_to: BlockId(else_b.unwrap_or(join)),
                            loop_head: false,
                            pos: *pos,
                        },
                    );
                    let then_end = self.lower(then_body, then_b);
                    self.terminate(then_end, Terminator::Jump(BlockId(join)));
                    if let Some(else_b) = else_b {
                        let else_end = self.lower(else_body, else_b);
                        self.terminate(else_end, Terminator::Jump(BlockId(join)));
                    }
                    cur = join;
                }
                Stmt::TryLock {
                    mutex,
                    then_body,
                    else_body,
                    pos,
                } => {
                    let then_b = self.new_block(line);
                    let else_b = (!else_body.is_empty()).then(|| self.new_block(line));
                    let join = self.new_block(0);
                    self.terminate(
                        cur,
                        Terminator::TryLock {
                            mutex: mutex.clone(),
                            acquired: BlockId(then_b),
                            busy: BlockId(else_b.unwrap_or(join)),
                            pos: *pos,
                        },
                    );
                    let then_end = self.lower(then_body, then_b);
                    self.terminate(then_end, Terminator::Jump(BlockId(join)));
                    if let Some(else_b) = else_b {
                        let else_end = self.lower(else_body, else_b);
                        self.terminate(else_end, Terminator::Jump(BlockId(join)));
                    }
                    cur = join;
                }
                Stmt::While { cond, body, pos } => {
                    let head = self.new_block(line);
                    let body_b = self.new_block(line);
                    let exit = self.new_block(0);
                    self.terminate(cur, Terminator::Jump(BlockId(head)));
                    self.terminate(
                        head,
                        Terminator::Branch {
                            cond: cond.clone(),
                            then_to: BlockId(body_b),
                            else_to: BlockId(exit),
                            loop_head: true,
                            pos: *pos,
                        },
                    );
                    let body_end = self.lower(body, body_b);
                    if self.blocks[body_end].term.is_none() {
                        self.terminate(body_end, Terminator::Jump(BlockId(head)));
                        self.back_edges.push((body_end, head));
                    }
                    cur = exit;
                }
                Stmt::Return { value, pos } => {
                    self.terminate(
                        cur,
                        Terminator::Return {
                            value: value.clone(),
                            pos: *pos,
                        },
                    );
                }
                simple => {
                    self.blocks[cur].stmts.push(simple.clone());
                    let splits =
                        matches!(simple, Stmt::Spawn { .. }) || simple.exprs().iter().any(|e| e.contains_call());
                    if splits {
                        let next = self.new_block(0);
                        self.terminate(cur, Terminator::Jump(BlockId(next)));
                        cur = next;
                    }
                }
            }
        }
        cur
    }
}

/// Builds the CFG of a resolved function body. `end` is the position used
/// for the implicit `return` at the end of the body.
pub fn build_cfg(body: &[Stmt], start_line: u32, end: Pos) -> Result<Cfg, ParseError> {
    let mut b = Builder {
        blocks: Vec::new(),
        back_edges: Vec::new(),
    };
    let entry = b.new_block(start_line);
    let last = b.lower(body, entry);
    b.terminate(last, Terminator::Return { value: None, pos: end });

    // Reachability from the entry; unreachable blocks must be empty.
    let n = b.blocks.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    while let Some(x) = stack.pop() {
        if std::mem::replace(&mut seen[x], true) {
            continue;
        }
        let term = b.blocks[x].term.as_ref().expect("every block is terminated");
        for s in term.successors() {
            stack.push(s.0);
        }
    }
    let mut map = vec![None; n];
    let mut next = 0;
    for (i, reachable) in seen.iter().enumerate() {
        if *reachable {
            map[i] = Some(next);
            next += 1;
        } else if let Some(s) = b.blocks[i].stmts.first() {
            return Err(ParseError::Syntax {
                pos: s.pos(),
                msg: "unreachable code".into(),
            });
        }
    }

    let mut blocks = Vec::with_capacity(next);
    for (i, p) in b.blocks.into_iter().enumerate() {
        let Some(new_id) = map[i] else { continue };
        let mut term = p.term.expect("every block is terminated");
        term.remap(&map);
        let line = if p.line != 0 {
            p.line
        } else {
            term_line(&term).unwrap_or(start_line)
        };
        blocks.push(Block {
            id: BlockId(new_id),
            stmts: p.stmts,
            term,
            line,
        });
    }
    let back_edges = b
        .back_edges
        .into_iter()
        .filter_map(|(from, to)| Some((BlockId(map[from]?), BlockId(map[to]?))))
        .collect();
    Ok(Cfg { blocks, back_edges })
}

fn term_line(t: &Terminator) -> Option<u32> {
    match t {
        Terminator::Branch { pos, .. } | Terminator::TryLock { pos, .. } | Terminator::Return { pos, .. } => {
            Some(pos.line)
        }
        Terminator::Jump(_) => None,
    }
}

/// Blocks reachable from `from` without following back edges.
pub fn forward_reach(cfg: &Cfg, from: BlockId) -> BTreeSet<BlockId> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(b) = stack.pop() {
        if !seen.insert(b) {
            continue;
        }
        for s in cfg.block(b).term.successors() {
            if !cfg.is_back_edge(b, s) {
                stack.push(s);
            }
        }
    }
    seen
}
