// SPDX-License-Identifier: Apache-2.0

//! Static call graph over program functions and externs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Pos, Program, Stmt};
use super::cfg::{BlockId, Terminator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Call,
    Spawn,
    Extern,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub caller: String,
    pub callee: String,
    pub kind: EdgeKind,
    pub block: BlockId,
    pub pos: Pos,
}

#[derive(Clone, Debug, Default)]
pub struct CallGraph {
    pub sites: Vec<CallSite>,
    /// Non-extern functions without incoming call or spawn edges, by name.
    pub roots: Vec<String>,
    succ: BTreeMap<String, BTreeSet<String>>,
}

fn expr_calls(e: &Expr, pos: Pos, out: &mut Vec<(String, EdgeKind, Pos)>) {
    e.walk(&mut |x| match x {
        Expr::Call(n, _) => out.push((n.clone(), EdgeKind::Call, pos)),
        Expr::Extern(n, _) => out.push((n.clone(), EdgeKind::Extern, pos)),
        _ => {}
    });
}

impl CallGraph {
    pub fn build(p: &Program) -> CallGraph {
        let mut sites = Vec::new();
        for f in &p.functions {
            for b in &f.cfg.blocks {
                let mut found = Vec::new();
                for s in &b.stmts {
                    if let Stmt::Spawn { func, .. } = s {
                        found.push((func.clone(), EdgeKind::Spawn, s.pos()));
                    }
                    for e in s.exprs() {
                        expr_calls(e, s.pos(), &mut found);
                    }
                }
                match &b.term {
                    Terminator::Branch { cond, pos, .. } => expr_calls(cond, *pos, &mut found),
                    Terminator::Return { value: Some(v), pos } => expr_calls(v, *pos, &mut found),
                    _ => {}
                }
                for (callee, kind, pos) in found {
                    sites.push(CallSite {
                        caller: f.name.clone(),
                        callee,
                        kind,
                        block: b.id,
                        pos,
                    });
                }
            }
        }
        let mut succ: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut has_incoming = BTreeSet::new();
        for s in &sites {
            if s.kind != EdgeKind::Extern {
                succ.entry(s.caller.clone()).or_default().insert(s.callee.clone());
                has_incoming.insert(s.callee.clone());
            }
        }
        let mut roots: Vec<String> = p
            .functions
            .iter()
            .map(|f| f.name.clone())
            .filter(|n| !has_incoming.contains(n))
            .collect();
        roots.sort();
        CallGraph { sites, roots, succ }
    }

    pub fn callees(&self, f: &str) -> impl Iterator<Item = &String> {
        self.succ.get(f).into_iter().flatten()
    }

    pub fn sites_from<'a>(&'a self, f: &'a str) -> impl Iterator<Item = &'a CallSite> + 'a {
        self.sites.iter().filter(move |s| s.caller == f)
    }

    /// Functions reachable from any root, roots included.
    pub fn reachable(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = self.roots.iter().map(String::as_str).collect();
        while let Some(f) = stack.pop() {
            if seen.insert(f.to_string()) {
                stack.extend(self.callees(f).map(String::as_str));
            }
        }
        seen
    }

    /// Shortest call chain `from ... to`, breaking ties by callee name.
    pub fn chain(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(f) = queue.pop_front() {
            if f == to {
                let mut chain = vec![to.to_string()];
                let mut cur = to;
                while let Some(p) = prev.get(cur) {
                    chain.push(p.to_string());
                    cur = p;
                }
                chain.reverse();
                return Some(chain);
            }
            for c in self.callees(f) {
                if seen.insert(c.as_str()) {
                    prev.insert(c.as_str(), f);
                    queue.push_back(c.as_str());
                }
            }
        }
        None
    }

    /// One chain per root that reaches `to`, in root order.
    pub fn chains_to(&self, to: &str) -> Vec<Vec<String>> {
        self.roots.iter().filter_map(|r| self.chain(r, to)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_program;

    #[test]
    fn roots_and_chains() {
        let p = parse_program(
            "global int g;\nfn a() { b(); spawn c(1); }\nfn b() { g = 1; }\nfn c(x: int) { b(); }\nfn lone() { }\nfn ping() { pong(); }\nfn pong() { ping(); }",
        )
        .unwrap();
        let cg = CallGraph::build(&p);
        assert_eq!(cg.roots, vec!["a", "lone"]);
        assert_eq!(cg.chain("a", "b").unwrap(), vec!["a", "b"]);
        assert_eq!(cg.chains_to("b"), vec![vec!["a".to_string(), "b".to_string()]]);
        let reach = cg.reachable();
        assert!(reach.contains("c") && !reach.contains("ping"));
    }
}
