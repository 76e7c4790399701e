// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use concov::analysis::TargetReport;
use concov::coverage::{accumulate, match_pairs, UncoveredReason};

use common::reference::{coverage_cases, coverage_oracle, pretty};

fn targets() -> TargetReport {
    let path = common::fixtures().join("coverage").join("targets.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Goldens are written from the reference oracle when `CONCOV_BLESS` is
/// set, never from `match_pairs`.
#[test]
fn fixtures_match_golden_reports() {
    let report = targets();
    let cases = coverage_cases(&common::fixtures().join("coverage"));
    assert_eq!(cases.len(), 20);
    let bless = std::env::var_os("CONCOV_BLESS").is_some();
    for case in &cases {
        let expected = pretty(&coverage_oracle(&case.traces, &report, &case.invalid));
        if bless {
            std::fs::write(&case.golden, &expected).unwrap();
        }
        let golden = std::fs::read_to_string(&case.golden).unwrap();
        assert_eq!(golden, expected, "{}: golden drifted from the oracle", case.name);
        let got = pretty(&match_pairs(&case.traces, &report, &case.invalid).unwrap());
        assert_eq!(got, golden, "{}", case.name);
    }
}

#[test]
fn fixtures_exercise_every_reason() {
    let report = targets();
    let mut reasons = BTreeSet::new();
    let (mut self_covered, mut self_uncovered) = (false, false);
    for case in coverage_cases(&common::fixtures().join("coverage")) {
        let cr = match_pairs(&case.traces, &report, &case.invalid).unwrap();
        reasons.extend(cr.uncovered.iter().map(|u| u.reason));
        for p in report.pairs.iter().filter(|p| p.is_self_pair()) {
            self_covered |= cr.is_covered(p.pair_id);
            self_uncovered |= cr.reason(p.pair_id) == Some(UncoveredReason::SameThreadOnly);
        }
    }
    assert_eq!(reasons.len(), 5, "{reasons:?}");
    assert!(self_covered && self_uncovered);
}

#[test]
fn witness_ordering_and_tie_breaks() {
    let report = targets();
    let cases = coverage_cases(&common::fixtures().join("coverage"));
    let case = |n: &str| cases.iter().find(|c| c.name == n).unwrap();

    let c = case("18_read_first");
    let cr = match_pairs(&c.traces, &report, &c.invalid).unwrap();
    let w = &cr.covered.iter().find(|x| x.pair_id == 2).unwrap().witness;
    assert_eq!(
        (w[0].access_id.0, w[0].thread, w[1].access_id.0, w[1].thread),
        (1, 1, 4, 2)
    );

    let c = case("17_first_completion");
    let cr = match_pairs(&c.traces, &report, &c.invalid).unwrap();
    let w = &cr.covered.iter().find(|x| x.pair_id == 2).unwrap().witness;
    assert_eq!((w[0].thread, w[1].thread), (1, 2));
    let w = &cr.covered.iter().find(|x| x.pair_id == 1).unwrap().witness;
    assert_eq!((w[0].thread, w[1].thread), (1, 3));
}

#[test]
fn accumulating_fixture_reports_is_monotone() {
    let report = targets();
    let cases = coverage_cases(&common::fixtures().join("coverage"));
    let mut agg = match_pairs(&[], &report, &BTreeSet::new()).unwrap();
    let mut last = 0;
    for c in &cases {
        let cr = match_pairs(&c.traces, &report, &c.invalid).unwrap();
        agg = accumulate(&agg, &cr).unwrap();
        assert!(agg.covered.len() >= last);
        assert!(cr.covered_ids().is_subset(&agg.covered_ids()));
        last = agg.covered.len();
    }
    assert_eq!(agg.covered.len(), report.pairs.len());
}

#[test]
fn unknown_access_ids_are_rejected() {
    let report = targets();
    let t = concov::runtime::Trace::parse("TRACE seed=0 policy=x status=complete\nACC 1 W 99 G:x\n").unwrap();
    assert!(match_pairs(&[t], &report, &BTreeSet::new()).is_err());
}
