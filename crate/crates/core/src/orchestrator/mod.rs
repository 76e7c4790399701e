// SPDX-License-Identifier: Apache-2.0

//! The refinement loop: analysis once, then per iteration path search,
//! input deduction, harness synthesis, execution and coverage feedback.

mod oracle;
mod rundir;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, AnalysisOptions, ReportStatus, TargetReport};
use crate::coverage::{accumulate, make_feedback, match_pairs, CoverageReport, FeedbackRecord, UncoveredReason};
use crate::harnessgen::{
    merge_setup, partition_tasks, synthesize_harness, AnchorTask, Harness, Invocation, ManifestEntry,
};
use crate::minilang::{parse_program, CallGraph, ParseError, Program};
use crate::pathfinder::{
    deduce_inputs, search_plan, ConcreteInputPlan, PathError, Prune, SearchLimits, SearchState, Weights,
};
use crate::reasoner::{
    builtin_reasoners, DeterministicConfig, Preconditions, Reasoner, ReasonerError, ReasonerRegistry, RemoteConfig,
    SolveContext,
};
use crate::runtime::{builtin_policies, Compiled, Executable, Limits, Trace};

pub use oracle::{run_oracle, OracleConfig, OracleError};
pub use rundir::write_run_dir;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub refine_budget: u32,
    pub reasoner: String,
    pub deterministic: DeterministicConfig,
    pub policy: String,
    /// Schedule seeds every harness runs under.
    pub seeds: Vec<u64>,
    pub weights: Weights,
    pub search: SearchLimits,
    pub analysis: AnalysisOptions,
    pub limits: Limits,
    /// Candidates one Phase II call may try before giving up.
    pub max_attempts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            refine_budget: 3,
            reasoner: "deterministic".into(),
            deterministic: DeterministicConfig::default(),
            policy: "seeded-random".into(),
            seeds: (0..4).collect(),
            weights: Weights::default(),
            search: SearchLimits::default(),
            analysis: AnalysisOptions::default(),
            limits: Limits::default(),
            max_attempts: 64,
        }
    }
}

impl RunConfig {
    /// `n` consecutive seeds starting at `base`.
    pub fn with_seeds(mut self, base: u64, n: u64) -> RunConfig {
        self.seeds = (base..base + n).collect();
        self
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}: no declarations")]
    Empty { path: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Coverage(#[from] crate::coverage::CoverageError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    NoTargets,
    AllCovered,
    NoPathLeft,
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub attempted: Vec<u32>,
    pub harnesses: Vec<String>,
    /// Pairs skipped because the reasoner was unreachable.
    pub skipped: Vec<u32>,
    /// Pairs whose path queues ran dry this iteration.
    pub abandoned: Vec<u32>,
    /// Coverage of this iteration's traces alone.
    pub coverage: CoverageReport,
    /// Cumulative coverage after this iteration.
    pub aggregate: CoverageReport,
    /// Newly covered pair, and the harness that first covered it.
    pub covered_by: BTreeMap<u32, String>,
    pub feedback: Vec<FeedbackRecord>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub program: String,
    pub status: ReportStatus,
    pub total_pairs: usize,
    pub iterations: Vec<IterationRecord>,
    pub stop: StopReason,
    pub aggregate: CoverageReport,
    pub wall_ms: u64,
}

impl RunLedger {
    /// A copy with every wall-clock field zeroed.
    pub fn without_timestamps(&self) -> RunLedger {
        let mut l = self.clone();
        l.wall_ms = 0;
        for it in &mut l.iterations {
            it.wall_ms = 0;
        }
        l
    }

    pub fn smap_series(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .map(|it| it.aggregate.smap.unwrap_or(0.0))
            .collect()
    }

    pub fn is_covered(&self, pair_id: u32) -> bool {
        self.aggregate.is_covered(pair_id)
    }
}

/// Everything a run produced, for writing a run directory.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub report: TargetReport,
    pub manifest: Vec<ManifestEntry>,
    pub harnesses: Vec<Harness>,
    /// (harness file, trace) in execution order.
    pub traces: Vec<(String, Trace)>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub ledger: RunLedger,
    pub artifacts: RunArtifacts,
}

impl RunResult {
    pub fn harness(&self, file: &str) -> Option<&Harness> {
        self.artifacts.harnesses.iter().find(|h| h.file_name == file)
    }

    /// Harness that first covered `pair_id`.
    pub fn winning_harness(&self, pair_id: u32) -> Option<&Harness> {
        self.ledger
            .iterations
            .iter()
            .find_map(|it| it.covered_by.get(&pair_id))
            .and_then(|f| self.harness(f))
    }
}

/// Per-pair search state carried across iterations.
struct PairWork {
    task: AnchorTask,
    anchor: SearchState,
    /// `None` for self-pairs, which share the anchor queue.
    partner: Option<SearchState>,
    abandoned: bool,
    last_partner: Option<usize>,
}

impl PairWork {
    fn partner_mut(&mut self) -> &mut SearchState {
        self.partner.as_mut().unwrap_or(&mut self.anchor)
    }
}

enum TaskOutcome {
    Abandoned,
    Built {
        entry: ManifestEntry,
        harness: Option<Harness>,
    },
}

pub fn default_registry(cfg: &RunConfig) -> ReasonerRegistry {
    builtin_reasoners(cfg.deterministic, RemoteConfig::from_env())
}

pub fn program_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "program".into())
}

pub fn load_program(path: &Path) -> Result<Program, OrchestratorError> {
    let src = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let p = parse_program(&src)?;
    if p.records.is_empty() && p.globals.is_empty() && p.externs.is_empty() && p.functions.is_empty() {
        return Err(OrchestratorError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(p)
}

/// Reads and runs the program at `path` with the built-in reasoners.
pub fn run_pipeline(path: &Path, cfg: &RunConfig) -> Result<RunResult, OrchestratorError> {
    let p = load_program(path)?;
    let reg = default_registry(cfg);
    let backend = reg
        .get(&cfg.reasoner)
        .ok_or_else(|| OrchestratorError::Config(format!("unknown reasoner `{}`", cfg.reasoner)))?;
    run_program(&p, &program_name(path), cfg, backend.as_ref())
}

/// Anchor plan, then the partner plan, each re-deduced once against the
/// other side's setup and invocation.
fn resolve_context(
    work: &mut PairWork,
    p: &Program,
    backend: &dyn Reasoner,
    ctx: &SolveContext<'_>,
    mut anchor: (ConcreteInputPlan, usize),
    mut partner: (ConcreteInputPlan, usize),
) -> Result<(ConcreteInputPlan, ConcreteInputPlan), ReasonerError> {
    let invocation =
        |plan: &ConcreteInputPlan| Invocation::from(plan.concrete_inputs.as_ref().expect("SAT plans carry inputs"));
    let setup_of = |plan: &ConcreteInputPlan| {
        plan.concrete_inputs
            .as_ref()
            .map(|c| c.setup.clone())
            .unwrap_or_default()
    };
    let Ok(merged) = merge_setup(&[&setup_of(&anchor.0), &setup_of(&partner.0)]) else {
        return Ok((anchor.0, partner.0));
    };
    let adopt = |old: &mut ConcreteInputPlan, mut new: ConcreteInputPlan, pre: &Preconditions| {
        if !new.is_sat() {
            return;
        }
        let ci = new.concrete_inputs.as_mut().expect("SAT plans carry inputs");
        if let Ok(s) = merge_setup(&[&pre.setup, &ci.setup]) {
            ci.setup = s;
            *old = new;
        }
    };
    let pre = Preconditions {
        setup: merged.clone(),
        partner: Some(invocation(&partner.0)),
    };
    let redo = deduce_inputs(work.anchor.candidate(anchor.1), p, backend, ctx, &pre)?;
    adopt(&mut anchor.0, redo, &pre);
    let pre = Preconditions {
        setup: merge_setup(&[&merged, &setup_of(&anchor.0)]).unwrap_or(merged),
        partner: Some(invocation(&anchor.0)),
    };
    let redo = deduce_inputs(work.partner_mut().candidate(partner.1), p, backend, ctx, &pre)?;
    adopt(&mut partner.0, redo, &pre);
    Ok((anchor.0, partner.0))
}

/// Phase II and the synthesis half of Phase III for one pair.
fn attempt_pair(
    work: &mut PairWork,
    p: &Program,
    name: &str,
    iteration: u32,
    backend: &dyn Reasoner,
    ctx: &SolveContext<'_>,
    cfg: &RunConfig,
) -> Result<TaskOutcome, ReasonerError> {
    let none = Preconditions::default();
    let da = search_plan(&mut work.anchor, p, backend, ctx, &none, cfg.max_attempts)?;
    let Some(ai) = da.candidate else {
        return Ok(TaskOutcome::Abandoned);
    };
    let dp = search_plan(work.partner_mut(), p, backend, ctx, &none, cfg.max_attempts)?;
    let Some(pi) = dp.candidate else {
        return Ok(TaskOutcome::Abandoned);
    };
    work.last_partner = Some(pi);
    let (a, b) = resolve_context(work, p, backend, ctx, (da.plan, ai), (dp.plan, pi))?;
    let (harness, diagnostics) = match synthesize_harness(&work.task, &a, &b, p, name, iteration) {
        Ok(h) => (Some(h), Vec::new()),
        Err(e) => (None, e.diagnostics()),
    };
    Ok(TaskOutcome::Built {
        entry: ManifestEntry {
            harness_file: harness.as_ref().map(|h| h.file_name.clone()),
            pair_id: work.task.pair_id,
            iteration,
            plans: vec![a, b],
            diagnostics,
        },
        harness,
    })
}

fn build_works(p: &Program, cg: &CallGraph, report: &TargetReport, cfg: &RunConfig) -> Vec<PairWork> {
    let mut works = Vec::new();
    for task in partition_tasks(report) {
        let state = |t| SearchState::new(p, cg, report, t, cfg.weights, cfg.search);
        let anchor = state(task.anchor);
        let partner = (task.anchor != task.partner).then(|| state(task.partner)).transpose();
        // Pairs without a root chain never get a task.
        if let (Ok(anchor), Ok(partner)) = (anchor, partner) {
            works.push(PairWork {
                task,
                anchor,
                partner,
                abandoned: false,
                last_partner: None,
            });
        }
    }
    works
}

/// Plans and harnesses of a first iteration, without executing them.
/// Pairs whose reasoner call failed are left out.
pub fn generate(
    p: &Program,
    name: &str,
    cfg: &RunConfig,
    backend: &dyn Reasoner,
) -> (Vec<ManifestEntry>, Vec<Harness>) {
    let report = analyze(p, &cfg.analysis);
    let cg = CallGraph::build(p);
    let ctx = SolveContext::new(p, cfg.limits);
    let mut manifest = Vec::new();
    let mut harnesses = Vec::new();
    for mut w in build_works(p, &cg, &report, cfg) {
        if let Ok(TaskOutcome::Built { entry, harness }) = attempt_pair(&mut w, p, name, 1, backend, &ctx, cfg) {
            manifest.push(entry);
            harnesses.extend(harness);
        }
    }
    (manifest, harnesses)
}

/// Runs the refinement loop over an already parsed program.
pub fn run_program(
    p: &Program,
    name: &str,
    cfg: &RunConfig,
    backend: &dyn Reasoner,
) -> Result<RunResult, OrchestratorError> {
    if cfg.refine_budget == 0 {
        return Err(OrchestratorError::Config("refine budget must be at least 1".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(OrchestratorError::Config("no schedule seeds".into()));
    }
    let policies = builtin_policies();
    let policy = policies
        .get(&cfg.policy)
        .ok_or_else(|| OrchestratorError::Config(format!("unknown schedule policy `{}`", cfg.policy)))?;
    let started = Instant::now();
    let report = analyze(p, &cfg.analysis);
    let cg = CallGraph::build(p);
    let ctx = SolveContext {
        program: p,
        code: Arc::new(Compiled::new(p)),
        limits: cfg.limits,
    };
    let mut artifacts = RunArtifacts {
        report: report.clone(),
        manifest: Vec::new(),
        harnesses: Vec::new(),
        traces: Vec::new(),
    };
    let mut aggregate = match_pairs(&[], &report, &BTreeSet::new())?;
    let mut ledger = RunLedger {
        program: name.to_string(),
        status: report.status,
        total_pairs: report.pairs.len(),
        iterations: Vec::new(),
        stop: StopReason::NoTargets,
        aggregate: aggregate.clone(),
        wall_ms: 0,
    };
    if report.pairs.is_empty() {
        ledger.wall_ms = started.elapsed().as_millis() as u64;
        return Ok(RunResult { ledger, artifacts });
    }

    let mut works = build_works(p, &cg, &report, cfg);

    ledger.stop = StopReason::Budget;
    for iteration in 1..=cfg.refine_budget {
        let it_start = Instant::now();
        let pending: Vec<&mut PairWork> = works
            .iter_mut()
            .filter(|w| !w.abandoned && !aggregate.is_covered(w.task.pair_id))
            .collect();
        if pending.is_empty() {
            ledger.stop = StopReason::NoPathLeft;
            break;
        }
        let attempted: Vec<u32> = pending.iter().map(|w| w.task.pair_id).collect();
        let outcomes: Vec<(u32, Result<TaskOutcome, ReasonerError>)> = pending
            .into_par_iter()
            .map(|w| {
                let out = attempt_pair(w, p, name, iteration, backend, &ctx, cfg);
                (w.task.pair_id, out)
            })
            .collect();

        let mut skipped = Vec::new();
        let mut abandoned = Vec::new();
        let mut invalid = BTreeSet::new();
        let mut manifest = Vec::new();
        let mut harnesses = Vec::new();
        for (pair_id, out) in outcomes {
            match out {
                Err(_) => skipped.push(pair_id),
                Ok(TaskOutcome::Abandoned) => abandoned.push(pair_id),
                Ok(TaskOutcome::Built { entry, harness }) => {
                    if harness.is_none() {
                        invalid.insert(pair_id);
                    }
                    manifest.push(entry);
                    harnesses.extend(harness);
                }
            }
        }
        for w in works.iter_mut().filter(|w| abandoned.contains(&w.task.pair_id)) {
            w.abandoned = true;
        }

        let runs: Vec<Vec<Trace>> = harnesses
            .par_iter()
            .map(|h| {
                let exe = Executable::with_code(ctx.code.clone(), p, &h.block, cfg.limits);
                cfg.seeds.iter().map(|&s| exe.run(policy.as_ref(), s)).collect()
            })
            .collect();
        let mut covered_by = BTreeMap::new();
        for (h, traces) in harnesses.iter().zip(&runs) {
            for c in match_pairs(traces, &report, &BTreeSet::new())?.covered {
                if !aggregate.is_covered(c.pair_id) {
                    covered_by.entry(c.pair_id).or_insert_with(|| h.file_name.clone());
                }
            }
        }
        let all: Vec<Trace> = runs.iter().flatten().cloned().collect();
        let coverage = match_pairs(&all, &report, &invalid)?;
        aggregate = accumulate(&aggregate, &coverage)?;
        let feedback = make_feedback(&coverage, &manifest, iteration);
        for fb in &feedback {
            let Some(w) = works.iter_mut().find(|w| w.task.pair_id == fb.pair_id) else {
                continue;
            };
            if fb.reason == UncoveredReason::HarnessInvalid {
                if let Some(i) = w.last_partner {
                    w.partner_mut().prune(i, Prune::Hard);
                }
                continue;
            }
            let _ = w.anchor.apply_feedback(fb);
            if let Some(s) = w.partner.as_mut() {
                let _ = s.apply_feedback(fb);
            }
        }
        for w in works.iter_mut().filter(|w| !w.abandoned) {
            let dry = |s: &SearchState| matches!(s.extract(false), Err(PathError::NoPathLeft(_)));
            if backend.retries_unknown() {
                continue;
            }
            if dry(&w.anchor) || w.partner.as_ref().is_some_and(dry) {
                w.abandoned = true;
                abandoned.push(w.task.pair_id);
            }
        }
        abandoned.sort_unstable();
        abandoned.dedup();

        for (h, traces) in harnesses.iter().zip(runs) {
            for t in traces {
                artifacts.traces.push((h.file_name.clone(), t));
            }
        }
        artifacts.manifest.extend(manifest);
        let harness_files = harnesses.iter().map(|h| h.file_name.clone()).collect();
        artifacts.harnesses.extend(harnesses);
        ledger.iterations.push(IterationRecord {
            iteration,
            attempted,
            harnesses: harness_files,
            skipped,
            abandoned,
            coverage,
            aggregate: aggregate.clone(),
            covered_by,
            feedback,
            wall_ms: it_start.elapsed().as_millis() as u64,
        });
        let open: Vec<&PairWork> = works.iter().filter(|w| !aggregate.is_covered(w.task.pair_id)).collect();
        if open.is_empty() {
            ledger.stop = StopReason::AllCovered;
            break;
        }
        if open.iter().all(|w| w.abandoned) {
            ledger.stop = StopReason::NoPathLeft;
            break;
        }
    }
    if aggregate.covered.len() == aggregate.total {
        ledger.stop = StopReason::AllCovered;
    }
    ledger.aggregate = aggregate;
    ledger.wall_ms = started.elapsed().as_millis() as u64;
    Ok(RunResult { ledger, artifacts })
}
