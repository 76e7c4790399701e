// SPDX-License-Identifier: Apache-2.0

//! The MTC language: a small imperative language with global shared state,
//! records, mutexes and thread spawning.

pub mod ast;
pub mod callgraph;
pub mod cfg;
mod lexer;
mod parser;
pub mod printer;
mod resolve;

use thiserror::Error;

pub use ast::*;
pub use callgraph::{CallGraph, CallSite, EdgeKind};
pub use cfg::{Block, BlockId, Cfg, Terminator};
pub use printer::{expr_text, harness_text, place_text, program_text};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: type error: {msg}")]
    Type { pos: Pos, msg: String },
    #[error("{pos}: unresolved name `{name}`")]
    Unresolved { pos: Pos, name: String },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::Type { pos, .. } | ParseError::Unresolved { pos, .. } => *pos,
        }
    }
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = parser::Parser::new(src)?;
    let raw = p.program()?;
    resolve::resolve_program(raw)
}

/// Parses a standalone `harness { ... }` block against an already parsed
/// program.
pub fn parse_harness(src: &str, program: &Program) -> Result<HarnessBlock, ParseError> {
    let mut p = parser::Parser::new(src)?;
    let h = p.harness()?;
    p.expect_eof()?;
    resolve::resolve_harness(&h, program, &resolve::globals_of(program))
}

/// Returns a copy of `program` with `harness` installed.
pub fn with_harness(program: &Program, harness: HarnessBlock) -> Program {
    let mut p = program.clone();
    p.harness = Some(harness);
    p
}
