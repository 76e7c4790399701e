// SPDX-License-Identifier: Apache-2.0

//! Constraint summaries: one record per decision on a path, with local
//! variables substituted by the values they carry along that path.

use std::collections::{BTreeMap, BTreeSet};

use super::{ConstraintKind, ConstraintRecord, PathCandidate, PathConstraintSummary};
use crate::minilang::{expr_text, place_text, BlockId, Expr, Function, LValue, Place, Program, Stmt, Terminator};

/// Locals assigned in the natural loop of each back edge into `head`.
fn loop_assigned(f: &Function, head: BlockId) -> BTreeSet<String> {
    let cfg = &f.cfg;
    let mut body = BTreeSet::from([head]);
    let mut stack: Vec<BlockId> = cfg
        .back_edges
        .iter()
        .filter(|(_, h)| *h == head)
        .map(|(t, _)| *t)
        .collect();
    while let Some(b) = stack.pop() {
        if body.insert(b) {
            stack.extend(cfg.predecessors(b));
        }
    }
    let mut out = BTreeSet::new();
    for b in body {
        for s in &cfg.block(b).stmts {
            match s {
                Stmt::Assign {
                    target: LValue::Local(n),
                    ..
                } => {
                    out.insert(n.clone());
                }
                Stmt::New { target, .. } => {
                    out.insert(target.clone());
                }
                _ => {}
            }
        }
    }
    out
}

struct Env {
    /// Current symbolic value of each local; absent locals are still 0.
    locals: BTreeMap<String, Expr>,
    /// Integer parameters of the current function mapped to root terms.
    params: BTreeMap<String, Expr>,
}

impl Env {
    fn subst(&self, e: &Expr) -> Expr {
        match e {
            Expr::Local(n) => self.locals.get(n).cloned().unwrap_or(Expr::Int(0)),
            Expr::Param(n) => self.params.get(n).cloned().unwrap_or_else(|| e.clone()),
            Expr::Unary(op, x) => Expr::Unary(*op, Box::new(self.subst(x))),
            Expr::Binary(op, l, r) => Expr::Binary(*op, Box::new(self.subst(l)), Box::new(self.subst(r))),
            Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(|a| self.subst(a)).collect()),
            Expr::Extern(n, args) => Expr::Extern(n.clone(), args.iter().map(|a| self.subst(a)).collect()),
            Expr::Load(a) => {
                let mut a = a.clone();
                if let Place::Element(arr, idx) = &a.place {
                    a.place = Place::Element(arr.clone(), Box::new(self.subst(idx)));
                }
                Expr::Load(a)
            }
            _ => e.clone(),
        }
    }

    fn run_stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign {
                target: LValue::Local(n),
                value,
                ..
            } => {
                let v = if value.contains_call() {
                    // A call result depends on program state.
                    Expr::Local(n.clone())
                } else {
                    self.subst(value)
                };
                self.locals.insert(n.clone(), v);
            }
            Stmt::New { target, .. } => {
                self.locals.insert(target.clone(), Expr::Local(target.clone()));
            }
            _ => {}
        }
    }
}

fn classify(e: &Expr) -> (ConstraintKind, Vec<String>) {
    let mut symbols = BTreeSet::new();
    let mut opaque = false;
    let mut stateful = false;
    e.walk(&mut |x| match x {
        Expr::Param(n) => {
            symbols.insert(n.clone());
        }
        Expr::Local(n) | Expr::GlobalObj(n) => {
            stateful = true;
            symbols.insert(n.clone());
        }
        Expr::Load(a) => {
            stateful = true;
            symbols.insert(match &a.place {
                Place::Element(arr, _) => arr.clone(),
                other => place_text(other),
            });
        }
        Expr::Call(n, _) => {
            stateful = true;
            symbols.insert(format!("{n}()"));
        }
        Expr::Extern(n, _) => {
            opaque = true;
            symbols.insert(format!("{n}()"));
        }
        _ => {}
    });
    let kind = if opaque {
        ConstraintKind::Opaque
    } else if stateful {
        ConstraintKind::GlobalState
    } else {
        ConstraintKind::ParamArith
    };
    (kind, symbols.into_iter().collect())
}

fn sentence(r: &ConstraintRecord) -> String {
    match r.kind {
        ConstraintKind::LoopExit if !r.polarity => {
            format!("the loop at line {} must exit with !({})", r.line, r.predicate)
        }
        ConstraintKind::LoopExit => {
            format!("the loop at line {} must be entered with {}", r.line, r.predicate)
        }
        _ if r.predicate.starts_with("trylock ") => format!(
            "at block {}, {} must {}",
            r.block,
            r.predicate,
            if r.polarity { "succeed" } else { "fail" }
        ),
        _ => format!("at block {}, condition {} must be {}", r.block, r.predicate, r.polarity),
    }
}

pub fn render(records: &[ConstraintRecord]) -> String {
    if records.is_empty() {
        return "no constraints".to_string();
    }
    records.iter().map(sentence).collect::<Vec<_>>().join("; ")
}

pub fn summarize(path: &PathCandidate, p: &Program) -> PathConstraintSummary {
    let mut records = Vec::new();
    let mut env = Env {
        locals: BTreeMap::new(),
        params: BTreeMap::new(),
    };
    let decisions: BTreeMap<(&str, BlockId), bool> = path
        .decisions
        .iter()
        .map(|d| ((d.function.as_str(), d.block), d.polarity))
        .collect();
    let steps = &path.steps;
    for (i, step) in steps.iter().enumerate() {
        let f = p.function(&step.function).expect("path functions exist");
        let block = f.cfg.block(step.block);
        let next = steps.get(i + 1);
        let leaves_function = next.is_some_and(|n| n.function != step.function);
        if block.is_loop_head() {
            for n in loop_assigned(f, step.block) {
                env.locals.insert(n.clone(), Expr::Local(n));
            }
        }
        if leaves_function {
            // Call-site block: bind the callee's integer parameters.
            let callee_name = &next.expect("checked above").function;
            let callee = p.function(callee_name).expect("callees exist");
            let mut args: Option<Vec<Expr>> = None;
            for s in &block.stmts {
                if let Stmt::Spawn { func, args: a, .. } = s {
                    if func == callee_name {
                        args = Some(a.iter().map(|x| env.subst(x)).collect());
                        break;
                    }
                }
                let mut found = None;
                for e in s.exprs() {
                    e.walk(&mut |x| {
                        if let Expr::Call(n, a) = x {
                            if n == callee_name && found.is_none() {
                                found = Some(a.clone());
                            }
                        }
                    });
                }
                if let Some(a) = found {
                    args = Some(a.iter().map(|x| env.subst(x)).collect());
                    break;
                }
                env.run_stmt(s);
            }
            if args.is_none() {
                if let Terminator::Branch { cond, .. } | Terminator::Return { value: Some(cond), .. } = &block.term {
                    cond.walk(&mut |x| {
                        if let Expr::Call(n, a) = x {
                            if n == callee_name && args.is_none() {
                                args = Some(a.iter().map(|y| env.subst(y)).collect());
                            }
                        }
                    });
                }
            }
            let args = args.unwrap_or_default();
            let mut params = BTreeMap::new();
            for (prm, a) in callee.params.iter().zip(args) {
                if prm.ty == crate::minilang::ParamType::Int {
                    params.insert(prm.name.clone(), a);
                }
            }
            env = Env {
                locals: BTreeMap::new(),
                params,
            };
            continue;
        }
        if next.is_none() {
            break;
        }
        for s in &block.stmts {
            env.run_stmt(s);
        }
        let Some(&polarity) = decisions.get(&(step.function.as_str(), step.block)) else {
            continue;
        };
        let label = format!("{}:{}", step.function, step.block);
        match &block.term {
            Terminator::Branch {
                cond, loop_head, pos, ..
            } => {
                let resolved = env.subst(cond);
                let (kind, symbols) = classify(&resolved);
                let kind = if *loop_head { ConstraintKind::LoopExit } else { kind };
                records.push(ConstraintRecord {
                    block: label,
                    line: pos.line,
                    predicate: expr_text(cond),
                    resolved_text: expr_text(&resolved),
                    resolved: Some(resolved),
                    polarity,
                    symbols,
                    kind,
                });
            }
            Terminator::TryLock { mutex, pos, .. } => {
                records.push(ConstraintRecord {
                    block: label,
                    line: pos.line,
                    predicate: format!("trylock {mutex}"),
                    resolved_text: format!("trylock {mutex}"),
                    resolved: None,
                    polarity,
                    symbols: vec![mutex.clone()],
                    kind: ConstraintKind::GlobalState,
                });
            }
            _ => {}
        }
    }
    let text = render(&records);
    PathConstraintSummary {
        target: path.target,
        entry: path.root.clone(),
        records,
        text,
    }
}
