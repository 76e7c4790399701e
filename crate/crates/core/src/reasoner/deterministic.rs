// SPDX-License-Identifier: Apache-2.0

//! Bounded-enumeration backend. Integer parameters are enumerated over
//! [-B, B] against the parameter-only constraints; simple global
//! comparisons become setup assignments. Paths with loop or stateful
//! constraints fall back to a replay search over a small setup menu.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse, SolveContext};
use crate::harnessgen::{assignment_menu, bind_args, merge_setup, precall_menu, render, IntTuples, Invocation};
use crate::minilang::{parse_harness, place_text, BinOp, Expr, ParamType, Place, Program};
use crate::pathfinder::{ArgValue, ConstraintKind, ConstraintRecord, SetupAction, Verdict};
use crate::runtime::{schedule::RoundRobin, Executable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicConfig {
    /// Integer domain bound B.
    pub bound: i64,
    /// Enables the replay search for loop and stateful constraints.
    pub state_search: bool,
    /// Maximum number of replays per request.
    pub replay_budget: usize,
}

impl Default for DeterministicConfig {
    fn default() -> Self {
        DeterministicConfig {
            bound: 8,
            state_search: true,
            replay_budget: 20_000,
        }
    }
}

pub struct DeterministicReasoner {
    cfg: DeterministicConfig,
}

/// Evaluates a parameter-only expression.
pub(crate) fn eval(e: &Expr, env: &BTreeMap<&str, i64>) -> Option<i64> {
    Some(match e {
        Expr::Int(v) => *v,
        Expr::Param(n) => *env.get(n.as_str())?,
        Expr::Unary(op, x) => op.apply(eval(x, env)?),
        Expr::Binary(op, l, r) => op.apply(eval(l, env)?, eval(r, env)?),
        _ => return None,
    })
}

fn holds(r: &ConstraintRecord, env: &BTreeMap<&str, i64>) -> bool {
    r.resolved
        .as_ref()
        .and_then(|e| eval(e, env))
        .is_some_and(|v| (v != 0) == r.polarity)
}

fn is_trylock(r: &ConstraintRecord) -> bool {
    r.resolved.is_none() && r.predicate.starts_with("trylock ")
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    }
}

fn negate(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        other => other,
    }
}

/// `g <op> c` (either side) over a global scalar, field or constant
/// element becomes one assignment satisfying the required polarity.
fn simple_assignment(r: &ConstraintRecord) -> Option<SetupAction> {
    let Some(Expr::Binary(op, l, rhs)) = &r.resolved else {
        return None;
    };
    if !op.is_comparison() {
        return None;
    }
    let (place, c, op) = match (l.as_ref(), rhs.as_ref()) {
        (Expr::Load(a), Expr::Int(c)) => (&a.place, *c, *op),
        (Expr::Int(c), Expr::Load(a)) => (&a.place, *c, flip(*op)),
        _ => return None,
    };
    let target = match place {
        Place::Global(_) | Place::GlobalField(..) => place_text(place),
        Place::Element(arr, idx) => match idx.as_ref() {
            Expr::Int(k) => format!("{arr}[{k}]"),
            _ => return None,
        },
        Place::RefField(..) => return None,
    };
    let op = if r.polarity { op } else { negate(op) };
    let value = match op {
        BinOp::Eq | BinOp::Ge | BinOp::Le => c,
        BinOp::Ne | BinOp::Gt => c.wrapping_add(1),
        BinOp::Lt => c.wrapping_sub(1),
        _ => return None,
    };
    Some(SetupAction::Assign { target, value })
}

fn args_for(req: &ReasonerRequest, ints: &[i64]) -> Vec<ArgValue> {
    bind_args(&req.entry.params, ints)
}

/// Setup candidates tried by the replay search, after the empty one:
/// single pre-calls of root functions, then single global assignments.
fn setup_menu(p: &Program, b: i64) -> Vec<SetupAction> {
    let mut out = precall_menu(p, b);
    out.extend(assignment_menu(p, b));
    out
}

impl DeterministicReasoner {
    pub fn new(cfg: DeterministicConfig) -> DeterministicReasoner {
        DeterministicReasoner { cfg }
    }

    /// Runs preconditions, `setup`, then the entry in its own thread, and
    /// checks that the entry's threads take every path decision and
    /// execute the target.
    fn replay(&self, req: &ReasonerRequest, ctx: &SolveContext<'_>, setup: &[SetupAction], args: &[ArgValue]) -> bool {
        let p = ctx.program;
        let Ok(full) = merge_setup(&[&req.preconditions.setup, setup]) else {
            return false;
        };
        let calls: Vec<Invocation> = req.preconditions.partner.iter().cloned().collect();
        let entry = Invocation {
            function: req.entry.function.clone(),
            args: args.to_vec(),
        };
        let text = render(p, &full, &calls, &[entry]);
        let Ok(h) = parse_harness(&text, p) else {
            return false;
        };
        let exe = Executable::with_code(ctx.code.clone(), p, &h, ctx.limits);
        let mut m = exe.machine_with(true, false);
        exe.run_machine(&mut m, &RoundRobin, 0);
        let Some(&t) = m.children(0).last() else {
            return false;
        };
        let threads: BTreeSet<usize> = m.descendants(t).into_iter().collect();
        let obs = m.observations.as_ref().expect("observed machine");
        let reached = obs
            .accessed
            .iter()
            .any(|(th, a)| *a == req.target && threads.contains(th));
        reached
            && req.decisions.iter().all(|d| {
                obs.edges.iter().any(|(th, f, b, pol)| {
                    threads.contains(th) && *f == d.function && *b == d.block.0 && *pol == d.polarity
                })
            })
    }
}

impl Reasoner for DeterministicReasoner {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn capabilities(&self) -> &'static [ConstraintKind] {
        &[ConstraintKind::ParamArith, ConstraintKind::GlobalState]
    }

    fn solve(&self, req: &ReasonerRequest, ctx: &SolveContext<'_>) -> Result<ReasonerResponse, ReasonerError> {
        let b = self.cfg.bound.max(1);
        let n = req.entry.int_params();
        if n > 4 && b > 16 {
            return Err(ReasonerError::DomainTooLarge { params: n, bound: b });
        }
        let records = &req.summary.records;
        if let Some(r) = records.iter().find(|r| r.kind == ConstraintKind::Opaque) {
            return Ok(ReasonerResponse::unknown(format!(
                "opaque constraint at {}: {}",
                r.block, r.resolved_text
            )));
        }
        if let Some(r) = records.iter().find(|r| is_trylock(r) && !r.polarity) {
            return Ok(ReasonerResponse::unknown(format!(
                "path needs `{}` to fail at {}",
                r.predicate, r.block
            )));
        }
        let names: Vec<&str> = req
            .entry
            .params
            .iter()
            .filter(|x| x.ty == ParamType::Int)
            .map(|x| x.name.as_str())
            .collect();
        let arith: Vec<&ConstraintRecord> = records
            .iter()
            .filter(|r| r.kind == ConstraintKind::ParamArith)
            .collect();
        let solutions = IntTuples::new(n, b).filter(|t| {
            let env: BTreeMap<&str, i64> = names.iter().copied().zip(t.iter().copied()).collect();
            arith.iter().all(|r| holds(r, &env))
        });
        let mut solutions = solutions.peekable();
        let Some(first) = solutions.peek().cloned() else {
            return Ok(ReasonerResponse::unsat(format!(
                "parameter constraints have no solution in [-{b}, {b}]"
            )));
        };

        let mut assigns = Vec::new();
        let mut complex = Vec::new();
        for r in records {
            match r.kind {
                ConstraintKind::GlobalState if is_trylock(r) => {}
                ConstraintKind::GlobalState => match simple_assignment(r) {
                    Some(a) => assigns.push(a),
                    None => complex.push(r),
                },
                ConstraintKind::LoopExit => complex.push(r),
                _ => {}
            }
        }
        let assigns = match merge_setup(&[&req.preconditions.setup, &assigns]) {
            Ok(_) => merge_setup(&[&assigns]).expect("subset of a mergeable list"),
            Err(_) => {
                complex.extend(records.iter().filter(|r| r.kind == ConstraintKind::GlobalState));
                Vec::new()
            }
        };
        let pure = complex.is_empty()
            && (req.preconditions.partner.is_none()
                || !self.cfg.state_search
                || self.replay(req, ctx, &assigns, &args_for(req, &first)));
        if pure {
            let mut rationale = format!("first solution in [-{b}, {b}]");
            if !assigns.is_empty() {
                let s: Vec<String> = assigns.iter().map(|a| a.to_string()).collect();
                rationale.push_str(&format!(" with setup {}", s.join(", ")));
            }
            return Ok(ReasonerResponse {
                verdict: Verdict::Sat,
                args: Some(args_for(req, &first)),
                setup: assigns,
                rationale,
            });
        }
        if let (false, Some(r)) = (self.cfg.state_search, complex.first()) {
            return Ok(ReasonerResponse::unknown(format!(
                "unsupported constraint at {}: {}",
                r.block, r.resolved_text
            )));
        }

        let tuples: Vec<Vec<i64>> = solutions.collect();
        let mut menu = vec![None];
        menu.extend(setup_menu(ctx.program, b).into_iter().map(Some));
        let mut runs = 0;
        for extra in &menu {
            let mut setup = assigns.clone();
            if let Some(a) = extra {
                if setup.contains(a) {
                    continue;
                }
                // An extra assignment overrides the base one on its target.
                if let SetupAction::Assign { target, .. } = a {
                    setup.retain(|x| !matches!(x, SetupAction::Assign { target: t, .. } if t == target));
                }
                setup.push(a.clone());
            }
            for t in &tuples {
                if runs >= self.cfg.replay_budget {
                    return Ok(ReasonerResponse::unknown(format!(
                        "replay budget of {} runs exhausted",
                        self.cfg.replay_budget
                    )));
                }
                runs += 1;
                let args = args_for(req, t);
                if self.replay(req, ctx, &setup, &args) {
                    let how = match extra {
                        None => "without extra setup".to_string(),
                        Some(a) => format!("after setup {a}"),
                    };
                    return Ok(ReasonerResponse {
                        verdict: Verdict::Sat,
                        args: Some(args),
                        setup,
                        rationale: format!("replay reaches the target {how}"),
                    });
                }
            }
        }
        Ok(ReasonerResponse::unknown(format!(
            "no setup in the search menu reaches the target ({runs} replays)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuples_are_lexicographic() {
        let all: Vec<Vec<i64>> = IntTuples::new(2, 1).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![-1, -1]);
        assert_eq!(all[1], vec![-1, 0]);
        assert_eq!(all[8], vec![1, 1]);
        assert_eq!(IntTuples::new(0, 3).collect::<Vec<_>>(), vec![Vec::<i64>::new()]);
    }
}
