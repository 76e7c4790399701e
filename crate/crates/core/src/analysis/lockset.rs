// SPDX-License-Identifier: Apache-2.0

//! Interprocedural must-lockset dataflow.
//!
//! Locksets only shrink at merge points. A function's entry set is the
//! intersection over its call sites; roots, spawn targets and functions
//! outside the reachable set start with nothing held.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::minilang::{AccessId, BlockId, CallGraph, EdgeKind, Expr, Function, Program, Stmt, Terminator};

pub type Lockset = BTreeSet<String>;

/// Mutexes each function may release, directly or through callees.
fn may_unlock(p: &Program, cg: &CallGraph) -> BTreeMap<String, Lockset> {
    let mut direct: BTreeMap<String, Lockset> = BTreeMap::new();
    for f in &p.functions {
        let set = direct.entry(f.name.clone()).or_default();
        for b in &f.cfg.blocks {
            for s in &b.stmts {
                if let Stmt::Unlock { mutex, .. } = s {
                    set.insert(mutex.clone());
                }
            }
        }
    }
    loop {
        let mut changed = false;
        for site in &cg.sites {
            if site.kind != EdgeKind::Call {
                continue;
            }
            let add = direct.get(&site.callee).cloned().unwrap_or_default();
            let set = direct.entry(site.caller.clone()).or_default();
            for m in add {
                changed |= set.insert(m);
            }
        }
        if !changed {
            return direct;
        }
    }
}

fn called(e: &Expr, out: &mut Vec<String>) {
    e.walk(&mut |x| {
        if let Expr::Call(n, _) = x {
            out.push(n.clone());
        }
    });
}

#[derive(Debug, Default)]
pub struct LockFacts {
    /// Lockset held when each access executes.
    pub at_access: BTreeMap<AccessId, Lockset>,
}

struct FnResult {
    call_sites: Vec<(String, Lockset)>,
    at_access: Vec<(AccessId, Lockset)>,
}

fn analyze_fn(f: &Function, entry: &Lockset, unlocks: &BTreeMap<String, Lockset>) -> FnResult {
    let cfg = &f.cfg;
    let n = cfg.blocks.len();
    let mut inset: Vec<Option<Lockset>> = vec![None; n];
    inset[0] = Some(entry.clone());
    let mut work = VecDeque::from([BlockId(0)]);
    let mut res = FnResult {
        call_sites: Vec::new(),
        at_access: Vec::new(),
    };
    let run_block = |b: BlockId, start: &Lockset, res: Option<&mut FnResult>| -> Vec<(BlockId, Lockset)> {
        let block = cfg.block(b);
        let mut cur = start.clone();
        let mut sink = res;
        for s in &block.stmts {
            if let Some(r) = sink.as_deref_mut() {
                for a in s.accesses() {
                    r.at_access.push((a.id, cur.clone()));
                }
            }
            let mut callees = Vec::new();
            for e in s.exprs() {
                called(e, &mut callees);
            }
            if let Some(r) = sink.as_deref_mut() {
                for c in &callees {
                    r.call_sites.push((c.clone(), cur.clone()));
                }
            }
            match s {
                Stmt::Lock { mutex, .. } => {
                    cur.insert(mutex.clone());
                }
                Stmt::Unlock { mutex, .. } => {
                    cur.remove(mutex);
                }
                _ => {}
            }
            for c in &callees {
                if let Some(u) = unlocks.get(c) {
                    cur.retain(|m| !u.contains(m));
                }
            }
        }
        let mut term_calls = Vec::new();
        match &block.term {
            Terminator::Branch { cond, .. } => {
                if let Some(r) = sink.as_deref_mut() {
                    for a in cond.accesses() {
                        r.at_access.push((a.id, cur.clone()));
                    }
                }
                called(cond, &mut term_calls);
            }
            Terminator::Return { value: Some(v), .. } => {
                if let Some(r) = sink.as_deref_mut() {
                    for a in v.accesses() {
                        r.at_access.push((a.id, cur.clone()));
                    }
                }
                called(v, &mut term_calls);
            }
            _ => {}
        }
        if let Some(r) = sink {
            for c in &term_calls {
                r.call_sites.push((c.clone(), cur.clone()));
            }
        }
        for c in &term_calls {
            if let Some(u) = unlocks.get(c) {
                cur.retain(|m| !u.contains(m));
            }
        }
        match &block.term {
            Terminator::TryLock {
                mutex, acquired, busy, ..
            } => {
                let mut held = cur.clone();
                held.insert(mutex.clone());
                vec![(*acquired, held), (*busy, cur)]
            }
            t => t.successors().into_iter().map(|s| (s, cur.clone())).collect(),
        }
    };
    while let Some(b) = work.pop_front() {
        let start = inset[b.0].clone().expect("queued blocks have an in-set");
        for (succ, out) in run_block(b, &start, None) {
            let next = match &inset[succ.0] {
                None => out,
                Some(old) => old.intersection(&out).cloned().collect(),
            };
            if inset[succ.0].as_ref() != Some(&next) {
                inset[succ.0] = Some(next);
                if !work.contains(&succ) {
                    work.push_back(succ);
                }
            }
        }
    }
    for b in &cfg.blocks {
        if let Some(start) = inset[b.id.0].clone() {
            run_block(b.id, &start, Some(&mut res));
        }
    }
    res
}

pub fn compute(p: &Program, cg: &CallGraph) -> LockFacts {
    let reachable = cg.reachable();
    let unlocks = may_unlock(p, cg);
    let spawned: BTreeSet<&str> = cg
        .sites
        .iter()
        .filter(|s| s.kind == EdgeKind::Spawn)
        .map(|s| s.callee.as_str())
        .collect();
    // None stands for "every mutex" (not yet constrained by any call site).
    let mut entry: BTreeMap<&str, Option<Lockset>> = BTreeMap::new();
    for f in &p.functions {
        let pinned = !reachable.contains(&f.name) || cg.roots.contains(&f.name) || spawned.contains(f.name.as_str());
        entry.insert(&f.name, pinned.then(Lockset::new));
    }
    loop {
        let mut meet: BTreeMap<String, Option<Lockset>> = BTreeMap::new();
        for f in &p.functions {
            if !reachable.contains(&f.name) {
                continue;
            }
            let Some(Some(e)) = entry.get(f.name.as_str()) else {
                continue;
            };
            for (callee, held) in analyze_fn(f, e, &unlocks).call_sites {
                let slot = meet.entry(callee).or_insert(None);
                *slot = Some(match slot.take() {
                    None => held,
                    Some(old) => old.intersection(&held).cloned().collect(),
                });
            }
        }
        let mut changed = false;
        for f in &p.functions {
            let cur = entry.get_mut(f.name.as_str()).expect("all functions have entries");
            let pinned =
                !reachable.contains(&f.name) || cg.roots.contains(&f.name) || spawned.contains(f.name.as_str());
            if pinned {
                continue;
            }
            if let Some(Some(m)) = meet.get(&f.name) {
                if cur.as_ref() != Some(m) {
                    *cur = Some(m.clone());
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut facts = LockFacts::default();
    for f in &p.functions {
        let e = entry.get(f.name.as_str()).cloned().flatten().unwrap_or_default();
        for (id, held) in analyze_fn(f, &e, &unlocks).at_access {
            facts.at_access.insert(id, held);
        }
    }
    facts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_program;

    fn held(src: &str) -> Vec<(u32, Vec<String>)> {
        let p = parse_program(src).unwrap();
        let cg = CallGraph::build(&p);
        compute(&p, &cg)
            .at_access
            .into_iter()
            .map(|(id, s)| (id.0, s.into_iter().collect()))
            .collect()
    }

    #[test]
    fn lock_regions_and_trylock_edges() {
        let got = held(
            "global mutex m;\nglobal int a;\nfn f() { a = 1; lock m; a = 2; unlock m; a = 3; if trylock m { a = 4; unlock m; } else { a = 5; } }",
        );
        let m = vec!["m".to_string()];
        assert_eq!(got, vec![(1, vec![]), (2, m.clone()), (3, vec![]), (4, m), (5, vec![])]);
    }

    #[test]
    fn merge_is_intersection() {
        let got = held("global mutex m;\nglobal int a;\nfn f(x: int) { if (x > 0) { lock m; } a = 1; }");
        assert_eq!(got, vec![(1, vec![])]);
    }

    #[test]
    fn callee_entry_inherits_held_locks() {
        let got = held(
            "global mutex m;\nglobal int a;\nfn f() { lock m; g(); unlock m; }\nfn g() { a = 1; }\nfn h() { spawn g(); }",
        );
        // `g` is also a spawn target, so nothing is known to be held.
        assert_eq!(got, vec![(1, vec![])]);
        let got = held("global mutex m;\nglobal int a;\nfn f() { lock m; g(); unlock m; }\nfn g() { a = 1; }");
        assert_eq!(got, vec![(1, vec!["m".to_string()])]);
    }
}
