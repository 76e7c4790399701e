// SPDX-License-Identifier: Apache-2.0

//! Recursive-descent parser producing an unresolved tree. Names stay as
//! `Expr::Name`/`Dot`/`Index` until [`super::resolve`] classifies them.

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::ParseError;

pub(crate) const KEYWORDS: &[&str] = &[
    "record", "global", "extern", "fn", "int", "atomic", "mutex", "ref", "if", "else", "while", "lock", "unlock",
    "trylock", "new", "return", "spawn", "join", "harness",
];

#[derive(Debug)]
pub(crate) struct RawFunction {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Default)]
pub(crate) struct RawProgram {
    pub records: Vec<RecordDecl>,
    pub globals: Vec<GlobalDecl>,
    pub externs: Vec<ExternDecl>,
    pub functions: Vec<RawFunction>,
    pub harness: Option<HarnessBlock>,
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    i: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, i: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let idx = (self.i + n).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", Self::describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", Self::describe(&other))),
        }
    }

    fn int_literal(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat_punct("-");
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                fold_literal(v, neg, pos)
            }
            other => self.err(format!("expected integer, found {}", Self::describe(&other))),
        }
    }

    fn size_literal(&mut self) -> Result<usize, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v as usize)
            }
            other => self.err(format!("expected integer, found {}", Self::describe(&other))),
        }
    }

    pub fn program(&mut self) -> Result<RawProgram, ParseError> {
        let mut prog = RawProgram::default();
        loop {
            let pos = self.pos();
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "record" => {
                        let r = self.record()?;
                        prog.records.push(r);
                    }
                    "global" => {
                        let g = self.global()?;
                        prog.globals.push(g);
                    }
                    "extern" => {
                        let e = self.extern_decl()?;
                        prog.externs.push(e);
                    }
                    "fn" => {
                        let f = self.function()?;
                        prog.functions.push(f);
                    }
                    "harness" => {
                        if prog.harness.is_some() {
                            return Err(ParseError::Syntax {
                                pos,
                                msg: "duplicate harness block".into(),
                            });
                        }
                        prog.harness = Some(self.harness()?);
                    }
                    _ => return self.err(format!("expected top-level item, found `{kw}`")),
                },
                other => return self.err(format!("expected top-level item, found {}", Self::describe(&other))),
            }
        }
        Ok(prog)
    }

    fn record(&mut self) -> Result<RecordDecl, ParseError> {
        let pos = self.pos();
        self.expect_kw("record")?;
        let name = self.ident()?;
        self.expect_punct("{")?;
        let mut fields = Vec::new();
        while !self.eat_punct("}") {
            let atomic = self.eat_kw("atomic");
            self.expect_kw("int")?;
            let fname = self.ident()?;
            self.expect_punct(";")?;
            fields.push(FieldDecl { name: fname, atomic });
        }
        Ok(RecordDecl { name, fields, pos })
    }

    fn global(&mut self) -> Result<GlobalDecl, ParseError> {
        let pos = self.pos();
        self.expect_kw("global")?;
        let ty = if self.eat_kw("atomic") {
            self.expect_kw("int")?;
            GlobalType::AtomicInt
        } else if self.eat_kw("int") {
            if self.eat_punct("[") {
                let n = self.size_literal()?;
                self.expect_punct("]")?;
                GlobalType::IntArray(n)
            } else {
                GlobalType::Int
            }
        } else if self.eat_kw("mutex") {
            GlobalType::Mutex
        } else {
            GlobalType::Record(self.ident()?)
        };
        let name = self.ident()?;
        let init = if self.eat_punct("=") {
            Some(self.int_literal()?)
        } else {
            None
        };
        self.expect_punct(";")?;
        Ok(GlobalDecl { name, ty, init, pos })
    }

    fn extern_decl(&mut self) -> Result<ExternDecl, ParseError> {
        let pos = self.pos();
        self.expect_kw("extern")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut arity = 0;
        if !self.eat_punct(")") {
            loop {
                self.expect_kw("int")?;
                arity += 1;
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        self.expect_punct("->")?;
        self.expect_kw("int")?;
        self.expect_punct(";")?;
        Ok(ExternDecl { name, arity, pos })
    }

    fn function(&mut self) -> Result<RawFunction, ParseError> {
        let pos = self.pos();
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                let pname = self.ident()?;
                self.expect_punct(":")?;
                let ty = if self.eat_kw("ref") {
                    ParamType::Ref(self.ident()?)
                } else {
                    self.expect_kw("int")?;
                    ParamType::Int
                };
                params.push(Param { name: pname, ty });
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        let body = self.block()?;
        Ok(RawFunction {
            name,
            params,
            body,
            pos,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.eat_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.err("unterminated block");
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.pos();
        if self.eat_kw("if") {
            if self.eat_kw("trylock") {
                let mutex = self.ident()?;
                let then_body = self.block()?;
                let else_body = if self.eat_kw("else") { self.block()? } else { Vec::new() };
                return Ok(Stmt::TryLock {
                    mutex,
                    then_body,
                    else_body,
                    pos,
                });
            }
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then_body = self.block()?;
            let else_body = if self.eat_kw("else") {
                if self.is_kw("if") {
                    vec![self.stmt()?]
                } else {
                    self.block()?
                }
            } else {
                Vec::new()
            };
            return Ok(Stmt::If {
                cond,
                then_body,
                else_body,
                pos,
            });
        }
        if self.eat_kw("while") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(Stmt::While { cond, body, pos });
        }
        if self.eat_kw("lock") {
            let mutex = self.ident()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Lock { mutex, pos });
        }
        if self.eat_kw("unlock") {
            let mutex = self.ident()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Unlock { mutex, pos });
        }
        if self.eat_kw("return") {
            let value = if self.eat_punct(";") {
                None
            } else {
                let e = self.expr()?;
                self.expect_punct(";")?;
                Some(e)
            };
            return Ok(Stmt::Return { value, pos });
        }
        if self.eat_kw("spawn") {
            let func = self.ident()?;
            let args = self.call_args()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Spawn { func, args, pos });
        }
        if self.eat_kw("join") {
            self.expect_punct(";")?;
            return Ok(Stmt::Join { pos });
        }
        // Call statement or assignment.
        if matches!(self.peek_at(1), Tok::Punct("(")) {
            let name = self.ident()?;
            let args = self.call_args()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Call {
                expr: Expr::Call(name, args),
                pos,
            });
        }
        let target = self.lvalue()?;
        self.expect_punct("=")?;
        if self.eat_kw("new") {
            let record = self.ident()?;
            self.expect_punct(";")?;
            let name = match target {
                LValue::Name(n, _) => n,
                _ => {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: "`new` may only be assigned to a local variable".into(),
                    })
                }
            };
            return Ok(Stmt::New {
                target: name,
                record,
                site: AllocSite(0),
                pos,
            });
        }
        let value = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Assign { target, value, pos })
    }

    fn lvalue(&mut self) -> Result<LValue, ParseError> {
        let pos = self.pos();
        let name = self.ident()?;
        if self.eat_punct(".") {
            let field = self.ident()?;
            Ok(LValue::Dot(name, field, pos))
        } else if self.eat_punct("[") {
            let idx = self.expr()?;
            self.expect_punct("]")?;
            Ok(LValue::Index(name, Box::new(idx), pos))
        } else {
            Ok(LValue::Name(name, pos))
        }
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if self.eat_punct(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(")") {
                return Ok(args);
            }
            self.expect_punct(",")?;
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else {
            return None;
        };
        Some(match *p {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_punct("-") {
            // Negative literals fold into a single constant.
            if let Tok::Int(v) = self.peek().clone() {
                let pos = self.pos();
                self.bump();
                return Ok(Expr::Int(fold_literal(v, true, pos)?));
            }
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(e)));
        }
        if self.eat_punct("!") {
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(fold_literal(v, false, pos)?))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.is_punct("(") {
                    let args = self.call_args()?;
                    // Extern vs function is decided during resolution.
                    Ok(Expr::Call(name, args))
                } else if self.eat_punct(".") {
                    let field = self.ident()?;
                    Ok(Expr::Dot(name, field, pos))
                } else if self.eat_punct("[") {
                    let idx = self.expr()?;
                    self.expect_punct("]")?;
                    Ok(Expr::Index(name, Box::new(idx), pos))
                } else {
                    Ok(Expr::Name(name, pos))
                }
            }
            other => self.err(format!("expected expression, found {}", Self::describe(&other))),
        }
    }

    pub fn harness(&mut self) -> Result<HarnessBlock, ParseError> {
        let pos = self.pos();
        self.expect_kw("harness")?;
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.eat_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.err("unterminated harness block");
            }
            stmts.push(self.harness_stmt()?);
        }
        Ok(HarnessBlock { stmts, pos })
    }

    fn harness_args(&mut self) -> Result<Vec<HarnessArg>, ParseError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if self.eat_punct(")") {
            return Ok(args);
        }
        loop {
            if matches!(self.peek(), Tok::Ident(_)) {
                args.push(HarnessArg::Object(self.ident()?));
            } else {
                args.push(HarnessArg::Int(self.int_literal()?));
            }
            if self.eat_punct(")") {
                return Ok(args);
            }
            self.expect_punct(",")?;
        }
    }

    fn harness_stmt(&mut self) -> Result<HarnessStmt, ParseError> {
        let pos = self.pos();
        if self.eat_kw("spawn") {
            let func = self.ident()?;
            let args = self.harness_args()?;
            self.expect_punct(";")?;
            return Ok(HarnessStmt::Spawn { func, args, pos });
        }
        if self.eat_kw("join") {
            self.expect_punct(";")?;
            return Ok(HarnessStmt::Join { pos });
        }
        let name = self.ident()?;
        if self.is_punct("(") {
            let args = self.harness_args()?;
            self.expect_punct(";")?;
            return Ok(HarnessStmt::Call { func: name, args, pos });
        }
        let target = if self.eat_punct(".") {
            let field = self.ident()?;
            // Global record vs harness object is decided during resolution.
            HarnessTarget::ObjectField(name, field)
        } else if self.eat_punct("[") {
            let idx = self.size_literal()?;
            self.expect_punct("]")?;
            HarnessTarget::Element(name, idx)
        } else {
            HarnessTarget::Global(name)
        };
        self.expect_punct("=")?;
        if self.eat_kw("new") {
            let record = self.ident()?;
            self.expect_punct(";")?;
            let HarnessTarget::Global(name) = target else {
                return Err(ParseError::Syntax {
                    pos,
                    msg: "`new` may only be bound to a harness object name".into(),
                });
            };
            return Ok(HarnessStmt::New {
                name,
                record,
                site: AllocSite(0),
                pos,
            });
        }
        let value = self.int_literal()?;
        self.expect_punct(";")?;
        Ok(HarnessStmt::Assign { target, value, pos })
    }

    pub fn expect_eof(&self) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.err(format!("unexpected {}", Self::describe(self.peek())))
        }
    }
}

fn fold_literal(v: u64, neg: bool, pos: Pos) -> Result<i64, ParseError> {
    let wide = if neg { -(v as i128) } else { v as i128 };
    i64::try_from(wide).map_err(|_| ParseError::Syntax {
        pos,
        msg: format!("integer literal `{}{v}` out of range", if neg { "-" } else { "" }),
    })
}
