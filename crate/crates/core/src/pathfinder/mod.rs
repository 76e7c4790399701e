// SPDX-License-Identifier: Apache-2.0

//! Path search toward a target access, constraint summaries, and the
//! extract/deduce/prune loop that drives a reasoner.

pub mod plan;
mod search;
mod summary;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::TargetReport;
use crate::coverage::FeedbackRecord;
use crate::minilang::{AccessId, BlockId, CallGraph, Expr, Program};
use crate::reasoner::{Reasoner, ReasonerError, ReasonerRequest, SolveContext};
pub use plan::{ArgValue, ConcreteInputPlan, ConcreteInputs, SetupAction, Verdict};
pub use summary::{render, summarize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weights {
    pub w_env: u64,
    pub w_loop: u64,
    pub p_fail: u64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            w_env: 10,
            w_loop: 2,
            p_fail: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_blocks: usize,
    pub max_candidates: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_blocks: 64,
            max_candidates: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub function: String,
    pub block: BlockId,
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.function, self.block)
    }
}

/// Edge taken at a two-way terminator: `polarity` is true for the
/// then/acquired successor.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub function: String,
    pub block: BlockId,
    pub polarity: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCandidate {
    pub target: AccessId,
    pub root: String,
    pub steps: Vec<PathStep>,
    pub decisions: Vec<Decision>,
    pub cost: u64,
    pub loops: usize,
    pub externs: usize,
}

impl PathCandidate {
    pub fn order_key(&self) -> (u64, Vec<(&str, usize)>) {
        (
            self.cost,
            self.steps.iter().map(|s| (s.function.as_str(), s.block.0)).collect(),
        )
    }

    pub fn labels(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.to_string()).collect()
    }

    /// Checks adjacency (CFG edges inside a function, call or spawn sites
    /// across functions), the root entry start and the target end.
    pub fn validate(&self, p: &Program, cg: &CallGraph) -> Result<(), String> {
        let first = self.steps.first().ok_or("empty path")?;
        if first.function != self.root || first.block != BlockId(0) {
            return Err(format!("path starts at {first}, not the entry of {}", self.root));
        }
        for w in self.steps.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.function == b.function {
                let f = p.function(&a.function).ok_or("unknown function")?;
                if !f.cfg.block(a.block).term.successors().contains(&b.block) {
                    return Err(format!("{a} -> {b} is not a CFG edge"));
                }
            } else {
                let linked = cg
                    .sites
                    .iter()
                    .any(|s| s.caller == a.function && s.callee == b.function && s.block == a.block);
                if !linked || b.block != BlockId(0) {
                    return Err(format!("{a} -> {b} is not a call edge"));
                }
            }
        }
        let last = self.steps.last().expect("checked non-empty");
        let site = p.access(self.target).ok_or("unknown target")?;
        if site.function != last.function || site.block != last.block.0 {
            return Err(format!("path ends at {last}, target is elsewhere"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    ParamArith,
    GlobalState,
    LoopExit,
    Opaque,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub block: String,
    pub line: u32,
    pub predicate: String,
    pub resolved_text: String,
    /// Predicate with path-local values substituted; absent for trylock.
    pub resolved: Option<Expr>,
    pub polarity: bool,
    pub symbols: Vec<String>,
    pub kind: ConstraintKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathConstraintSummary {
    pub target: AccessId,
    pub entry: String,
    pub records: Vec<ConstraintRecord>,
    pub text: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("no path left for access {0}")]
    NoPathLeft(AccessId),
    #[error("access {0} is not a reachable target")]
    UnknownTarget(AccessId),
    #[error("feedback for pair {pair} does not concern access {target}")]
    FeedbackMismatch { pair: u32, target: AccessId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prune {
    /// Never proposed again.
    Hard,
    /// May come back once no fresh candidate remains, for backends that
    /// retry UNKNOWN answers.
    Soft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Fresh,
    Pruned(Prune),
}

/// Candidate queue for one target access.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub target: AccessId,
    candidates: Vec<PathCandidate>,
    slots: Vec<Slot>,
    penalty: Vec<u64>,
    weights: Weights,
}

impl SearchState {
    pub fn new(
        p: &Program,
        cg: &CallGraph,
        report: &TargetReport,
        target: AccessId,
        weights: Weights,
        limits: SearchLimits,
    ) -> Result<SearchState, PathError> {
        let chain = report
            .pairs
            .iter()
            .find_map(|pair| pair.chain_for(target))
            .filter(|c| !c.is_empty())
            .ok_or(PathError::UnknownTarget(target))?;
        let candidates = search::enumerate(p, cg, chain, target, &weights, &limits);
        let n = candidates.len();
        Ok(SearchState {
            target,
            candidates,
            slots: vec![Slot::Fresh; n],
            penalty: vec![0; n],
            weights,
        })
    }

    pub fn candidates(&self) -> &[PathCandidate] {
        &self.candidates
    }

    pub fn remaining(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Fresh).count()
    }

    fn best(&self, allow: impl Fn(Slot) -> bool) -> Option<usize> {
        (0..self.candidates.len())
            .filter(|&i| allow(self.slots[i]))
            .min_by(|&a, &b| {
                let ka = (
                    self.candidates[a].cost + self.penalty[a],
                    self.candidates[a].order_key(),
                );
                let kb = (
                    self.candidates[b].cost + self.penalty[b],
                    self.candidates[b].order_key(),
                );
                ka.cmp(&kb)
            })
    }

    /// Index of the cheapest fresh candidate; with `revisit_soft`, softly
    /// pruned candidates are considered once no fresh one remains.
    pub fn extract(&self, revisit_soft: bool) -> Result<usize, PathError> {
        self.best(|s| s == Slot::Fresh)
            .or_else(|| {
                revisit_soft
                    .then(|| self.best(|s| s == Slot::Pruned(Prune::Soft)))
                    .flatten()
            })
            .ok_or(PathError::NoPathLeft(self.target))
    }

    pub fn candidate(&self, idx: usize) -> &PathCandidate {
        &self.candidates[idx]
    }

    pub fn prune(&mut self, idx: usize, how: Prune) {
        let penalty = match how {
            Prune::Hard => self.weights.p_fail,
            Prune::Soft => self.weights.p_fail / 10,
        };
        self.penalty[idx] += penalty;
        self.slots[idx] = match (self.slots[idx], how) {
            (Slot::Pruned(Prune::Hard), _) | (_, Prune::Hard) => Slot::Pruned(Prune::Hard),
            _ => Slot::Pruned(Prune::Soft),
        };
    }

    /// Hard-prunes the candidate whose decisions match a failed path named
    /// by `fb` for this target.
    pub fn apply_feedback(&mut self, fb: &FeedbackRecord) -> Result<(), PathError> {
        if !fb.targets.contains(&self.target) {
            return Err(PathError::FeedbackMismatch {
                pair: fb.pair_id,
                target: self.target,
            });
        }
        let target = self.target;
        for failed in fb.failed_paths.iter().filter(|f| f.target == target) {
            if let Some(i) = self
                .candidates
                .iter()
                .position(|c| c.decisions == failed.decisions && c.root == failed.entry)
            {
                self.prune(i, Prune::Hard);
            }
        }
        Ok(())
    }
}

/// Result of running the extract/deduce/prune loop for one target.
#[derive(Clone, Debug)]
pub struct Deduction {
    pub plan: ConcreteInputPlan,
    /// Index of the candidate the plan was deduced for.
    pub candidate: Option<usize>,
    /// Plans rejected on the way, in order.
    pub rejected: Vec<ConcreteInputPlan>,
}

fn plan_for(path: &PathCandidate, summary: &PathConstraintSummary, p: &Program, backend: &str) -> ConcreteInputPlan {
    let site = p.access(path.target).expect("targets are program accesses");
    ConcreteInputPlan {
        target: path.target,
        target_location: format!("{}:{}: {} {}", site.function, site.pos.line, site.kind, site.place),
        feasible_path: path.labels(),
        decisions: path.decisions.clone(),
        constraints: summary.records.clone(),
        concrete_inputs: None,
        verdict: Verdict::Unknown,
        backend: backend.to_string(),
        rationale: String::new(),
    }
}

/// Builds the reasoner request for a candidate.
pub fn request_for(
    path: &PathCandidate,
    p: &Program,
    preconditions: &crate::reasoner::Preconditions,
) -> ReasonerRequest {
    let summary = summarize(path, p);
    ReasonerRequest::new(p, path, summary, preconditions.clone())
}

/// Asks `backend` about one candidate and validates the answer.
pub fn deduce_inputs(
    path: &PathCandidate,
    p: &Program,
    backend: &dyn Reasoner,
    ctx: &SolveContext<'_>,
    preconditions: &crate::reasoner::Preconditions,
) -> Result<ConcreteInputPlan, ReasonerError> {
    let req = request_for(path, p, preconditions);
    let resp = backend.solve(&req, ctx)?;
    let mut plan = plan_for(path, &req.summary, p, backend.name());
    plan.rationale = resp.rationale.clone();
    plan.verdict = resp.verdict;
    if resp.verdict == Verdict::Sat {
        match crate::reasoner::validate_plan(&resp, &req.entry, p) {
            Ok(inputs) => plan.concrete_inputs = Some(inputs),
            Err(why) => {
                plan.verdict = Verdict::Unknown;
                plan.rationale = format!("invalid plan: {why}");
            }
        }
    }
    Ok(plan)
}

/// Runs extract → deduce → prune until a SAT plan appears, the queue is
/// exhausted, or `max_attempts` candidates have been tried.
pub fn search_plan(
    state: &mut SearchState,
    p: &Program,
    backend: &dyn Reasoner,
    ctx: &SolveContext<'_>,
    preconditions: &crate::reasoner::Preconditions,
    max_attempts: usize,
) -> Result<Deduction, ReasonerError> {
    let mut rejected = Vec::new();
    for _ in 0..max_attempts.max(1) {
        let idx = match state.extract(backend.retries_unknown()) {
            Ok(i) => i,
            Err(_) => break,
        };
        let plan = deduce_inputs(state.candidate(idx), p, backend, ctx, preconditions)?;
        match plan.verdict {
            Verdict::Sat => {
                return Ok(Deduction {
                    plan,
                    candidate: Some(idx),
                    rejected,
                })
            }
            Verdict::Unsat => state.prune(idx, Prune::Hard),
            Verdict::Unknown => state.prune(idx, Prune::Soft),
        }
        rejected.push(plan);
    }
    let plan = match rejected.last() {
        Some(last) => last.clone(),
        None => ConcreteInputPlan {
            target: state.target,
            target_location: String::new(),
            feasible_path: Vec::new(),
            decisions: Vec::new(),
            constraints: Vec::new(),
            concrete_inputs: None,
            verdict: Verdict::Unsat,
            backend: backend.name().to_string(),
            rationale: "no path left".to_string(),
        },
    };
    Ok(Deduction {
        plan,
        candidate: None,
        rejected,
    })
}
