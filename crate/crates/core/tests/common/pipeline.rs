// SPDX-License-Identifier: Apache-2.0

//! End-to-end checks over the corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use concov::analysis::{analyze, AnalysisOptions, TargetReport};
use concov::coverage::UncoveredReason;
use concov::minilang::{parse_harness, CallGraph, HarnessArg, HarnessStmt, Program};
use concov::orchestrator::{
    default_registry, program_name, run_oracle, run_program, OracleConfig, RunConfig, RunLedger, RunResult, StopReason,
};
use concov::pathfinder::{request_for, ConstraintKind, SearchState};
use concov::reasoner::Preconditions;

/// Domain bound shared by the pipeline and the oracle in corpus-wide
/// comparisons.
pub const BOUND: i64 = 4;

pub fn config(budget: u32, bound: i64) -> RunConfig {
    let mut cfg = RunConfig {
        refine_budget: budget,
        ..RunConfig::default()
    };
    cfg.deterministic.bound = bound;
    cfg
}

pub fn run(path: &Path, cfg: &RunConfig) -> RunResult {
    let p = super::load(path);
    let reg = default_registry(cfg);
    let backend = reg.get(&cfg.reasoner).expect("registered reasoner");
    run_program(&p, &program_name(path), cfg, backend.as_ref()).expect("pipeline run")
}

fn int_args(args: &[HarnessArg]) -> Vec<i64> {
    args.iter()
        .filter_map(|a| match a {
            HarnessArg::Int(v) => Some(*v),
            _ => None,
        })
        .collect()
}

/// Runs the CLI `loop` on the hash map and inspects the winning harness
/// for the mask write/read pair.
pub fn hashmap_mask_pair() -> Result<String, String> {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let file = super::corpus("hashmap");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_concov"))
        .arg("loop")
        .arg(&file)
        .args(["--reasoner", "deterministic", "--refine-budget", "3", "--out"])
        .arg(out.path())
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let ledger: RunLedger =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("ledger.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let p = super::load(&file);
    let report = analyze(&p, &AnalysisOptions::default());
    // The read of `mask` guarded by the trylock runs only for a key that
    // is already present.
    let src = std::fs::read_to_string(&file).map_err(|e| e.to_string())?;
    let line = src
        .lines()
        .position(|l| l.trim() == "m = mask;")
        .ok_or("no guarded mask read")? as u32
        + 1;
    let pair = report
        .pairs
        .iter()
        .find(|x| report.access_point(x.second).is_some_and(|a| a.line == line) && x.first != x.second)
        .ok_or("no mask write/read pair")?;
    let file_name = ledger
        .iterations
        .iter()
        .find_map(|it| it.covered_by.get(&pair.pair_id))
        .ok_or(format!("pair {} uncovered", pair.pair_id))?;
    let text = std::fs::read_to_string(out.path().join("harnesses").join(file_name)).map_err(|e| e.to_string())?;
    let h = parse_harness(&text, &p).map_err(|e| e.to_string())?;
    let mut pre = Vec::new();
    let mut spawned = Vec::new();
    for s in &h.stmts {
        match s {
            HarnessStmt::Call { func, args, .. } if func == "insert" => pre.extend(int_args(args)),
            HarnessStmt::Spawn { func, args, .. } if func == "insert" => spawned.extend(int_args(args)),
            _ => {}
        }
    }
    let distinct: BTreeSet<i64> = spawned.iter().copied().collect();
    if pre.is_empty() || spawned.len() != 2 || distinct.len() != 2 || !pre.iter().any(|k| distinct.contains(k)) {
        return Err(format!("winning harness lacks the pre-insert shape:\n{text}"));
    }
    if elapsed > Duration::from_secs(5) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("pair {} won by {file_name} in {elapsed:.2?}", pair.pair_id))
}

/// Whether every candidate path of every target only carries constraint
/// kinds the deterministic backend declares.
pub fn in_capability(p: &Program, report: &TargetReport) -> bool {
    let cfg = RunConfig::default();
    let cg = CallGraph::build(p);
    let targets: BTreeSet<_> = report.pairs.iter().flat_map(|x| [x.first, x.second]).collect();
    targets.into_iter().all(|t| {
        let Ok(state) = SearchState::new(p, &cg, report, t, cfg.weights, cfg.search) else {
            return true;
        };
        state.candidates().iter().all(|c| {
            request_for(c, p, &Preconditions::default())
                .kinds()
                .all(|k| matches!(k, ConstraintKind::ParamArith | ConstraintKind::GlobalState))
        })
    })
}

pub struct OracleRow {
    pub program: String,
    pub in_capability: bool,
    pub covered: BTreeSet<u32>,
    pub reachable: BTreeSet<u32>,
}

pub fn oracle_rows() -> Vec<OracleRow> {
    let oracle = OracleConfig {
        bound: BOUND,
        ..OracleConfig::default()
    };
    super::corpus_files()
        .iter()
        .map(|f| {
            let p = super::load(f);
            let report = analyze(&p, &AnalysisOptions::default());
            let res = run(f, &config(3, BOUND));
            OracleRow {
                program: program_name(f),
                in_capability: in_capability(&p, &report),
                covered: res.ledger.aggregate.covered_ids(),
                reachable: run_oracle(&p, &report, &oracle).expect("oracle within limits"),
            }
        })
        .collect()
}

pub fn oracle_completeness() -> Result<String, String> {
    let start = Instant::now();
    let rows = oracle_rows();
    let mut inside = Vec::new();
    for r in &rows {
        if !r.covered.is_subset(&r.reachable) {
            return Err(format!(
                "{}: covered {:?} not within oracle {:?}",
                r.program, r.covered, r.reachable
            ));
        }
        if r.in_capability {
            inside.push(r.program.clone());
            if r.covered != r.reachable {
                return Err(format!(
                    "{}: covered {:?}, oracle {:?}",
                    r.program, r.covered, r.reachable
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    if inside.is_empty() {
        return Err("no corpus program inside the deterministic capability".into());
    }
    if elapsed > Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "{} programs, complete on [{}], in {elapsed:.2?}",
        rows.len(),
        inside.join(", ")
    ))
}

pub fn budget_and_termination() -> Result<String, String> {
    let three = super::corpus("threepaths");
    let one = run(&three, &config(1, 8));
    if !one.ledger.aggregate.covered.is_empty() {
        return Err("threepaths covered with budget 1".into());
    }
    let full = run(&three, &config(3, 8));
    let total = full.ledger.total_pairs;
    if total == 0 || full.ledger.aggregate.covered.len() != total {
        return Err("threepaths not covered with budget 3".into());
    }
    let dead = run(&super::corpus("deadbranch"), &config(3, 8));
    if dead.ledger.iterations.len() > 3 || dead.ledger.total_pairs == 0 {
        return Err("deadbranch ran past its budget".into());
    }
    let reasons: BTreeMap<u32, UncoveredReason> = dead
        .ledger
        .aggregate
        .uncovered
        .iter()
        .map(|u| (u.pair_id, u.reason))
        .collect();
    if !dead.ledger.aggregate.covered.is_empty() || reasons.len() != dead.ledger.total_pairs {
        return Err("deadbranch pair covered or missing a reason".into());
    }
    if dead.ledger.stop == StopReason::AllCovered {
        return Err("deadbranch stopped as covered".into());
    }
    Ok(format!(
        "threepaths covered in {} iterations; deadbranch stops {:?} with {:?}",
        full.ledger.iterations.len(),
        dead.ledger.stop,
        reasons.values().next().unwrap()
    ))
}

pub fn monotone_and_deterministic() -> Result<String, String> {
    let mut runs = 0;
    for f in super::corpus_files() {
        let cfg = config(3, 8);
        let a = run(&f, &cfg);
        let b = run(&f, &cfg);
        let series = a.ledger.smap_series();
        if series.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("{}: smap decreases: {series:?}", f.display()));
        }
        let ja = serde_json::to_string_pretty(&a.ledger.without_timestamps()).unwrap();
        let jb = serde_json::to_string_pretty(&b.ledger.without_timestamps()).unwrap();
        if ja != jb {
            return Err(format!("{}: ledgers differ between identical runs", f.display()));
        }
        runs += 2;
    }
    Ok(format!("{runs} runs"))
}
