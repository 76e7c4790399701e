// SPDX-License-Identifier: Apache-2.0

//! Abstract memory locations and a flow-insensitive points-to relation for
//! reference parameters and locals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::minilang::{Access, AllocSite, CallGraph, Expr, ParamType, Place, Program, Stmt, Terminator};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjId {
    /// Object passed into a function through a reference parameter by a
    /// caller outside the program (the harness).
    Param {
        function: String,
        param: String,
    },
    Alloc(AllocSite),
    Global(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    Global(String),
    Element(String, usize),
    /// Whole array; used once any access indexes it with a non-constant.
    Array(String),
    Field(ObjId, String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Global(g) => f.write_str(g),
            Location::Element(a, k) => write!(f, "{a}[{k}]"),
            Location::Array(a) => write!(f, "{a}[*]"),
            Location::Field(ObjId::Param { function, param }, x) => {
                write!(f, "{function}:{param}.{x}")
            }
            Location::Field(ObjId::Alloc(s), x) => write!(f, "new#{s}.{x}"),
            Location::Field(ObjId::Global(g), x) => write!(f, "{g}.{x}"),
        }
    }
}

impl Location {
    pub fn is_global(&self) -> bool {
        !matches!(self, Location::Field(ObjId::Param { .. } | ObjId::Alloc(_), _))
    }
}

type Key = (String, String);

/// May-point-to sets for every reference parameter and reference local.
#[derive(Clone, Debug, Default)]
pub struct PointsTo {
    map: BTreeMap<Key, BTreeSet<ObjId>>,
}

fn arg_objects(pts: &PointsTo, func: &str, arg: &Expr) -> BTreeSet<ObjId> {
    match arg {
        Expr::Param(n) | Expr::Local(n) => pts.get(func, n).clone(),
        Expr::GlobalObj(g) => BTreeSet::from([ObjId::Global(g.clone())]),
        _ => BTreeSet::new(),
    }
}

fn visit_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match s {
            Stmt::If {
                then_body, else_body, ..
            }
            | Stmt::TryLock {
                then_body, else_body, ..
            } => {
                visit_stmts(then_body, f);
                visit_stmts(else_body, f);
            }
            Stmt::While { body, .. } => visit_stmts(body, f),
            _ => {}
        }
    }
}

/// Every (callee, args) invocation in `func`, calls and spawns alike.
pub(crate) fn invocations<'a>(p: &'a Program, func: &str) -> Vec<(&'a str, &'a [Expr], bool)> {
    let mut out = Vec::new();
    let Some(f) = p.function(func) else {
        return out;
    };
    let push_expr = |e: &'a Expr, out: &mut Vec<(&'a str, &'a [Expr], bool)>| {
        e.walk(&mut |x| {
            if let Expr::Call(n, args) = x {
                out.push((n.as_str(), args.as_slice(), false));
            }
        })
    };
    for b in &f.cfg.blocks {
        for s in &b.stmts {
            if let Stmt::Spawn { func, args, .. } = s {
                out.push((func.as_str(), args.as_slice(), true));
            }
            for e in s.exprs() {
                push_expr(e, &mut out);
            }
        }
        match &b.term {
            Terminator::Branch { cond, .. } => push_expr(cond, &mut out),
            Terminator::Return { value: Some(v), .. } => push_expr(v, &mut out),
            _ => {}
        }
    }
    out
}

impl PointsTo {
    pub fn build(p: &Program, cg: &CallGraph) -> PointsTo {
        let mut pts = PointsTo::default();
        for root in &cg.roots {
            let f = p.function(root).expect("roots are functions");
            for prm in &f.params {
                if matches!(prm.ty, ParamType::Ref(_)) {
                    pts.add(
                        root,
                        &prm.name,
                        ObjId::Param {
                            function: root.clone(),
                            param: prm.name.clone(),
                        },
                    );
                }
            }
        }
        for f in &p.functions {
            visit_stmts(&f.body, &mut |s| {
                if let Stmt::New { target, site, .. } = s {
                    pts.add(&f.name, target, ObjId::Alloc(*site));
                }
            });
        }
        loop {
            let mut changed = false;
            for f in &p.functions {
                for (callee, args, _) in invocations(p, &f.name) {
                    let Some(cf) = p.function(callee) else {
                        continue;
                    };
                    for (prm, a) in cf.params.iter().zip(args) {
                        if prm.ty == ParamType::Int {
                            continue;
                        }
                        for o in arg_objects(&pts, &f.name, a) {
                            changed |= pts.add(callee, &prm.name, o);
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // Reference parameters no caller feeds (dead code) get a
        // placeholder object of their own.
        for f in &p.functions {
            for prm in &f.params {
                if matches!(prm.ty, ParamType::Ref(_)) && pts.get(&f.name, &prm.name).is_empty() {
                    pts.add(
                        &f.name,
                        &prm.name,
                        ObjId::Param {
                            function: f.name.clone(),
                            param: prm.name.clone(),
                        },
                    );
                }
            }
        }
        pts
    }

    fn add(&mut self, func: &str, var: &str, o: ObjId) -> bool {
        self.map
            .entry((func.to_string(), var.to_string()))
            .or_default()
            .insert(o)
    }

    pub fn get(&self, func: &str, var: &str) -> &BTreeSet<ObjId> {
        static EMPTY: BTreeSet<ObjId> = BTreeSet::new();
        self.map.get(&(func.to_string(), var.to_string())).unwrap_or(&EMPTY)
    }

    /// Objects passed as reference arguments of `spawn` inside `func`.
    pub fn spawn_objects(&self, p: &Program, func: &str) -> BTreeSet<ObjId> {
        let mut out = BTreeSet::new();
        for (callee, args, spawn) in invocations(p, func) {
            let Some(cf) = p.function(callee) else {
                continue;
            };
            if !spawn {
                continue;
            }
            for (prm, a) in cf.params.iter().zip(args) {
                if prm.ty != ParamType::Int {
                    out.extend(arg_objects(self, func, a));
                }
            }
        }
        out
    }
}

/// Arrays indexed with a non-constant expression anywhere in the program.
pub fn collapsed_arrays(p: &Program) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for f in &p.functions {
        for b in &f.cfg.blocks {
            let mut check = |a: &Access| {
                if let Place::Element(name, idx) = &a.place {
                    if idx.as_int().is_none() {
                        out.insert(name.clone());
                    }
                }
            };
            for s in &b.stmts {
                s.accesses().into_iter().for_each(&mut check);
            }
            match &b.term {
                Terminator::Branch { cond, .. } => cond.accesses().into_iter().for_each(&mut check),
                Terminator::Return { value: Some(v), .. } => v.accesses().into_iter().for_each(&mut check),
                _ => {}
            }
        }
    }
    out
}

/// Abstract locations an access in `func` may touch.
pub fn access_locations(func: &str, place: &Place, pts: &PointsTo, collapsed: &BTreeSet<String>) -> Vec<Location> {
    match place {
        Place::Global(g) => vec![Location::Global(g.clone())],
        Place::GlobalField(g, f) => vec![Location::Field(ObjId::Global(g.clone()), f.clone())],
        Place::Element(a, idx) => {
            if collapsed.contains(a) {
                vec![Location::Array(a.clone())]
            } else {
                let k = idx.as_int().expect("non-collapsed arrays use constant indices");
                vec![Location::Element(a.clone(), k as usize)]
            }
        }
        Place::RefField(v, f) => pts
            .get(func, v)
            .iter()
            .map(|o| Location::Field(o.clone(), f.clone()))
            .collect(),
    }
}
