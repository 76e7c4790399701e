// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use concov::analysis::TargetReport;
use concov::coverage::{accumulate, match_pairs};
use concov::minilang::{AccessId, MemOp};
use concov::runtime::{Address, Trace, TraceRecord, TraceStatus};
use proptest::prelude::*;

use common::reference::coverage_oracle;

fn targets() -> TargetReport {
    let path = common::fixtures().join("coverage").join("targets.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn record() -> impl Strategy<Value = TraceRecord> {
    (0usize..4, 1u32..7, 0usize..3).prop_map(|(thread, id, slot)| {
        let (op, addr) = match id {
            1 => (
                MemOp::Write,
                Address::Global {
                    name: "x".into(),
                    field: None,
                },
            ),
            4 => (
                MemOp::Read,
                Address::Global {
                    name: "x".into(),
                    field: None,
                },
            ),
            2 | 5 => (
                if id == 2 { MemOp::Write } else { MemOp::Read },
                Address::Element {
                    name: "a".into(),
                    index: slot,
                },
            ),
            _ => (
                MemOp::Write,
                Address::Heap {
                    site: 1,
                    counter: slot as u64 + 1,
                    field: "val".into(),
                },
            ),
        };
        TraceRecord {
            thread,
            op,
            access_id: AccessId(id),
            addr,
        }
    })
}

fn trace() -> impl Strategy<Value = Trace> {
    (prop::collection::vec(record(), 0..12), 0u64..4).prop_map(|(records, seed)| Trace {
        seed,
        policy: "seeded-random".into(),
        status: TraceStatus::Complete,
        records,
        faults: Vec::new(),
    })
}

proptest! {
    #[test]
    fn matches_the_reference(traces in prop::collection::vec(trace(), 0..4), invalid in prop::collection::btree_set(1u32..6, 0..3)) {
        let report = targets();
        let got = match_pairs(&traces, &report, &invalid).unwrap();
        prop_assert_eq!(got, coverage_oracle(&traces, &report, &invalid));
    }

    #[test]
    fn witnesses_recheck(traces in prop::collection::vec(trace(), 1..4)) {
        let report = targets();
        let got = match_pairs(&traces, &report, &BTreeSet::new()).unwrap();
        for c in &got.covered {
            prop_assert!(c.witnesses(report.pair(c.pair_id).unwrap()));
        }
        prop_assert_eq!(got.covered.len() + got.uncovered.len(), got.total);
    }

    #[test]
    fn accumulate_is_an_idempotent_union(a in prop::collection::vec(trace(), 0..3), b in prop::collection::vec(trace(), 0..3)) {
        let report = targets();
        let none = BTreeSet::new();
        let ra = match_pairs(&a, &report, &none).unwrap();
        let rb = match_pairs(&b, &report, &none).unwrap();
        let ab = accumulate(&ra, &rb).unwrap();
        prop_assert_eq!(accumulate(&ab, &rb).unwrap().covered_ids(), ab.covered_ids());
        prop_assert_eq!(&accumulate(&ra, &ra).unwrap(), &ra);
        let union: BTreeSet<u32> = ra.covered_ids().union(&rb.covered_ids()).copied().collect();
        prop_assert_eq!(ab.covered_ids(), union);
        prop_assert!(ab.smap.unwrap() >= ra.smap.unwrap());
        for c in &ra.covered {
            prop_assert!(ab.covered.contains(c));
        }
    }

    #[test]
    fn trace_text_round_trips(t in trace()) {
        prop_assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
    }
}
