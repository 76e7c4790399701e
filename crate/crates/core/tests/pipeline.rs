// SPDX-License-Identifier: Apache-2.0

mod common;

use concov::coverage::UncoveredReason;
use concov::orchestrator::{write_run_dir, StopReason};

use common::pipeline::{config, oracle_rows, run, BOUND};

#[test]
fn hashmap_pre_insert_wins_the_mask_pair() {
    common::pipeline::hashmap_mask_pair().unwrap();
}

#[test]
fn corpus_coverage_stays_within_the_oracle() {
    for row in oracle_rows() {
        assert!(row.covered.is_subset(&row.reachable), "{}", row.program);
        if row.in_capability {
            assert_eq!(row.covered, row.reachable, "{}", row.program);
        }
    }
}

#[test]
fn threepaths_needs_three_iterations() {
    let f = common::corpus("threepaths");
    let counts: Vec<usize> = (1..=3)
        .map(|k| run(&f, &config(k, 8)).ledger.aggregate.covered.len())
        .collect();
    assert_eq!(counts, vec![0, 0, 1]);
    let full = run(&f, &config(3, 8));
    assert_eq!(full.ledger.stop, StopReason::AllCovered);
    assert_eq!(full.ledger.smap_series(), vec![0.0, 0.0, 1.0]);
}

#[test]
fn deadbranch_stops_with_a_reason() {
    let res = run(&common::corpus("deadbranch"), &config(3, 8));
    assert_eq!(res.ledger.stop, StopReason::NoPathLeft);
    assert_eq!(res.ledger.aggregate.reason(1), Some(UncoveredReason::AnchorUnreached));
}

#[test]
fn conflicting_setups_are_reported_as_invalid() {
    let res = run(&common::corpus("conflict"), &config(3, BOUND));
    let invalid: Vec<u32> = res
        .ledger
        .aggregate
        .uncovered
        .iter()
        .filter(|u| u.reason == UncoveredReason::HarnessInvalid)
        .map(|u| u.pair_id)
        .collect();
    assert_eq!(invalid, vec![2]);
    let fb = &res.ledger.iterations[0].feedback;
    let rec = fb.iter().find(|f| f.pair_id == 2).unwrap();
    assert_eq!(rec.reason, UncoveredReason::HarnessInvalid);
    assert!(!rec.diagnostics.is_empty());
    assert!(rec.failed_paths.is_empty());
}

#[test]
fn programs_without_targets_stop_immediately() {
    let res = run(&common::corpus("nolocks"), &config(3, 8));
    assert_eq!(res.ledger.stop, StopReason::NoTargets);
    assert_eq!(res.ledger.total_pairs, 0);
    assert!(res.ledger.aggregate.smap.is_none());
}

#[test]
fn budget_caps_iterations_everywhere() {
    for f in common::corpus_files() {
        for k in [1, 2] {
            let res = run(&f, &config(k, 8));
            assert!(res.ledger.iterations.len() <= k as usize, "{}", f.display());
        }
    }
}

#[test]
fn runs_are_reproducible() {
    common::pipeline::monotone_and_deterministic().unwrap();
}

#[test]
fn seeds_change_traces_not_structure() {
    let f = common::corpus("tokens");
    let mut a = config(3, 8);
    a.seeds = vec![0, 1, 2, 3];
    let mut b = config(3, 8);
    b.seeds = vec![100, 101, 102, 103];
    let (ra, rb) = (run(&f, &a), run(&f, &b));
    assert_eq!(ra.ledger.total_pairs, rb.ledger.total_pairs);
    assert_eq!(
        ra.artifacts.harnesses.first().map(|h| &h.text),
        rb.artifacts.harnesses.first().map(|h| &h.text)
    );
}

#[test]
fn covered_pairs_carry_rechecked_witnesses() {
    for f in common::corpus_files() {
        let res = run(&f, &config(3, 8));
        for c in &res.ledger.aggregate.covered {
            let pair = res.artifacts.report.pair(c.pair_id).unwrap();
            assert!(c.witnesses(pair), "{}: pair {}", f.display(), c.pair_id);
        }
        for (pair, file) in res.ledger.iterations.iter().flat_map(|it| &it.covered_by) {
            assert!(res.harness(file).is_some(), "pair {pair}: missing harness {file}");
        }
    }
}

#[test]
fn run_directory_layout() {
    let res = run(&common::corpus("hashmap"), &config(3, 8));
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &res).unwrap();
    for f in [
        "targets.json",
        "ledger.json",
        "coverage_iter1.json",
        "harnesses/manifest.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let count = |sub: &str| std::fs::read_dir(dir.path().join(sub)).unwrap().count();
    assert_eq!(count("plans"), res.artifacts.manifest.len());
    assert_eq!(count("harnesses"), res.artifacts.harnesses.len() + 1);
    assert_eq!(count("traces"), res.artifacts.traces.len());
    let ledger: concov::orchestrator::RunLedger =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger.without_timestamps(), res.ledger.without_timestamps());
}
