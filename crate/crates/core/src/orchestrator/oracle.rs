// SPDX-License-Identifier: Apache-2.0

//! Exhaustive ground truth for small programs: every harness from a
//! finite menu, under every schedule within a preemption bound.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::TargetReport;
use crate::harnessgen::{arg_tuples, assignment_menu, precall_menu, render, Invocation};
use crate::minilang::{parse_harness, AccessId, CallGraph, ParamType, Program};
use crate::pathfinder::{ArgValue, SetupAction};
use crate::runtime::{Address, Compiled, Executable, Limits, Machine};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Integer domain bound for arguments and assigned values.
    pub bound: i64,
    /// Maximum number of preemptive context switches per schedule.
    pub preemptions: u32,
    pub limits: Limits,
    /// Cap on executed harnesses; enumeration stops early once every
    /// pair is found.
    pub max_harnesses: usize,
    /// Per-harness cap on explored schedules.
    pub max_schedules: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            bound: 4,
            preemptions: 2,
            limits: Limits {
                max_steps: 20_000,
                max_threads: 8,
            },
            max_harnesses: 1_000_000,
            max_schedules: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle bound exceeded: {dimension} = {size} (limit {limit})")]
    TooLarge {
        dimension: String,
        size: usize,
        limit: usize,
    },
}

fn too_large(dimension: impl Into<String>, size: usize, limit: usize) -> OracleError {
    OracleError::TooLarge {
        dimension: dimension.into(),
        size,
        limit,
    }
}

/// Pairs left to find, with a per-leaf check.
struct Goal {
    pairs: Vec<(u32, AccessId, AccessId)>,
    found: Mutex<BTreeSet<u32>>,
    done: AtomicBool,
}

impl Goal {
    fn open(&self) -> Vec<(u32, AccessId, AccessId)> {
        let found = self.found.lock().unwrap();
        self.pairs
            .iter()
            .filter(|(id, _, _)| !found.contains(id))
            .copied()
            .collect()
    }

    fn record(&self, m: &Machine, open: &mut Vec<(u32, AccessId, AccessId)>) {
        let mut seen: HashMap<AccessId, Vec<(&Address, usize)>> = HashMap::new();
        for r in &m.records {
            let v = seen.entry(r.access_id).or_default();
            if !v.contains(&(&r.addr, r.thread)) {
                v.push((&r.addr, r.thread));
            }
        }
        let hit = |a: AccessId, b: AccessId| {
            let (Some(xs), Some(ys)) = (seen.get(&a), seen.get(&b)) else {
                return false;
            };
            xs.iter().any(|(ax, at)| ys.iter().any(|(bx, bt)| ax == bx && at != bt))
        };
        let newly: Vec<u32> = open
            .iter()
            .filter(|(_, a, b)| hit(*a, *b))
            .map(|(id, _, _)| *id)
            .collect();
        if newly.is_empty() {
            return;
        }
        open.retain(|(id, _, _)| !newly.contains(id));
        let mut found = self.found.lock().unwrap();
        found.extend(newly);
        if found.len() == self.pairs.len() {
            self.done.store(true, Ordering::Relaxed);
        }
    }
}

struct Dfs<'a> {
    goal: &'a Goal,
    open: Vec<(u32, AccessId, AccessId)>,
    bound: u32,
    leaves: usize,
    max_leaves: usize,
}

impl Dfs<'_> {
    fn explore(&mut self, m: Machine, current: Option<usize>, used: u32) -> Result<(), OracleError> {
        if self.open.is_empty() || self.goal.done.load(Ordering::Relaxed) {
            return Ok(());
        }
        let enabled = m.enabled();
        if enabled.is_empty() {
            self.leaves += 1;
            if self.leaves > self.max_leaves {
                return Err(too_large("schedules", self.leaves, self.max_leaves));
            }
            self.goal.record(&m, &mut self.open);
            return Ok(());
        }
        let cur_enabled = current.filter(|c| enabled.contains(c));
        let choices: Vec<(usize, u32)> = enabled
            .iter()
            .map(|&t| (t, used + u32::from(cur_enabled.is_some_and(|c| c != t))))
            .filter(|&(_, u)| u <= self.bound)
            .collect();
        let last = choices.len() - 1;
        let mut m = Some(m);
        for (i, (t, u)) in choices.into_iter().enumerate() {
            let mut next = if i == last {
                m.take().expect("machine kept for the last branch")
            } else {
                m.as_ref().expect("machine kept until the last branch").clone()
            };
            next.fire(t);
            self.explore(next, Some(t), u)?;
        }
        Ok(())
    }
}

/// Pair ids reachable by some menu harness under some bounded schedule.
pub fn run_oracle(p: &Program, report: &TargetReport, cfg: &OracleConfig) -> Result<BTreeSet<u32>, OracleError> {
    let cg = CallGraph::build(p);
    let b = cfg.bound.max(0);
    let mut entries: Vec<(String, Vec<Vec<ArgValue>>)> = Vec::new();
    for root in &cg.roots {
        let f = p.function(root).expect("roots are functions");
        let ints = f.params.iter().filter(|x| x.ty == ParamType::Int).count();
        if ints > 2 {
            return Err(too_large(format!("int parameters of {root}"), ints, 2));
        }
        entries.push((root.clone(), arg_tuples(&f.params, b)));
    }
    let assigns = assignment_menu(p, b);
    let calls = precall_menu(p, b);
    let mut setups: Vec<Vec<SetupAction>> = vec![Vec::new()];
    setups.extend(calls.iter().map(|c| vec![c.clone()]));
    setups.extend(assigns.iter().map(|a| vec![a.clone()]));
    for a in &assigns {
        setups.extend(calls.iter().map(|c| vec![a.clone(), c.clone()]));
    }
    let invocations: Vec<Invocation> = entries
        .iter()
        .flat_map(|(f, tuples)| {
            tuples.iter().map(|args| Invocation {
                function: f.clone(),
                args: args.clone(),
            })
        })
        .collect();
    let total = setups
        .len()
        .saturating_mul(invocations.len())
        .saturating_mul(invocations.len());

    let goal = Goal {
        pairs: report.pairs.iter().map(|x| (x.pair_id, x.first, x.second)).collect(),
        found: Mutex::new(BTreeSet::new()),
        done: AtomicBool::new(report.pairs.is_empty()),
    };
    let code = Arc::new(Compiled::new(p));
    let n = invocations.len();
    let executed = AtomicUsize::new(0);
    (0..total).into_par_iter().try_for_each(|k| {
        if goal.done.load(Ordering::Relaxed) {
            return Ok(());
        }
        let count = executed.fetch_add(1, Ordering::Relaxed) + 1;
        if count > cfg.max_harnesses {
            return Err(too_large("harnesses", total, cfg.max_harnesses));
        }
        let (s, rest) = (k / (n * n), k % (n * n));
        let spawns = [invocations[rest / n].clone(), invocations[rest % n].clone()];
        let text = render(p, &setups[s], &[], &spawns);
        let Ok(h) = parse_harness(&text, p) else {
            return Ok(());
        };
        let exe = Executable::with_code(code.clone(), p, &h, cfg.limits);
        let mut dfs = Dfs {
            goal: &goal,
            open: goal.open(),
            bound: cfg.preemptions,
            leaves: 0,
            max_leaves: cfg.max_schedules,
        };
        dfs.explore(exe.machine(), None, 0)
    })?;
    Ok(goal.found.into_inner().unwrap())
}
