// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use concov::minilang::{parse_harness, parse_program};
use concov::runtime::{builtin_policies, Address, Executable, Limits, TraceStatus};
use proptest::prelude::*;

use common::checks::{addresses_are_fresh, block, exe, mutual_exclusion_holds, replay_is_deterministic};

#[test]
fn replay_determinism() {
    replay_is_deterministic().unwrap();
}

#[test]
fn mutual_exclusion() {
    mutual_exclusion_holds().unwrap();
}

#[test]
fn address_freshness() {
    addresses_are_fresh().unwrap();
}

#[test]
fn trylock_fails_while_held() {
    let src = "global mutex m;\nglobal int hit;\nglobal int miss;\n\
               fn hold(k: int) { lock m; hit = hit + 1; unlock m; }\n\
               fn probe(k: int) { if trylock m { hit = hit + 1; unlock m; } else { miss = 1; } }\n";
    let p = parse_program(src).unwrap();
    let e = exe(&p, "spawn hold(0);\nspawn probe(0);\njoin;\n");
    let pol = builtin_policies().get("seeded-random").unwrap();
    let mut saw_miss = false;
    for seed in 0..200 {
        let t = e.run(pol.as_ref(), seed);
        assert_eq!(t.status, TraceStatus::Complete);
        saw_miss |= t
            .records
            .iter()
            .any(|r| matches!(&r.addr, Address::Global { name, .. } if name == "miss"));
    }
    assert!(saw_miss);
}

#[test]
fn out_of_bounds_faults_the_thread() {
    let src = "global int[2] a;\nfn put(i: int) { a[i] = 1; }\n";
    let p = parse_program(src).unwrap();
    let pol = builtin_policies().get("round-robin").unwrap();
    let t = exe(&p, "spawn put(5);\njoin;\n").run(pol.as_ref(), 0);
    assert_eq!(t.status, TraceStatus::Faulted);
    assert!(!t.faults.is_empty());
}

#[test]
fn step_limit_marks_trace_incomplete() {
    let src = "global int g;\nfn spin(k: int) { while (1 > 0) { g = g + 1; } }\n";
    let p = parse_program(src).unwrap();
    let h = parse_harness(&block("spawn spin(0);\njoin;\n"), &p).unwrap();
    let e = Executable::new(
        &p,
        &h,
        Limits {
            max_steps: 500,
            max_threads: 8,
        },
    );
    let t = e.run(builtin_policies().get("round-robin").unwrap().as_ref(), 0);
    assert_eq!(t.status, TraceStatus::Incomplete);
}

#[test]
fn lock_cycle_deadlocks() {
    let src = "global mutex a;\nglobal mutex b;\nglobal int g;\n\
               fn ab(k: int) { lock a; lock b; g = 1; unlock b; unlock a; }\n\
               fn ba(k: int) { lock b; lock a; g = 2; unlock a; unlock b; }\n";
    let p = parse_program(src).unwrap();
    let e = exe(&p, "spawn ab(0);\nspawn ba(0);\njoin;\n");
    let pol = builtin_policies().get("seeded-random").unwrap();
    let statuses: BTreeSet<_> = (0..200).map(|s| format!("{}", e.run(pol.as_ref(), s).status)).collect();
    assert!(
        statuses.contains("deadlock") && statuses.contains("complete"),
        "{statuses:?}"
    );
}

#[test]
fn trace_text_round_trips() {
    let p = common::load(&common::corpus("hashmap"));
    let e = exe(&p, "insert(1);\nspawn insert(2);\nspawn insert(1);\njoin;\n");
    let pol = builtin_policies().get("seeded-random").unwrap();
    for seed in 0..20 {
        let t = e.run(pol.as_ref(), seed);
        let back = concov::runtime::Trace::parse(&t.to_text()).unwrap();
        assert_eq!(back.records, t.records);
        assert_eq!(back.status, t.status);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_programs_replay_identically(prog in 0u64..10_000, seed in 0u64..1_000) {
        let src = common::random_program(prog);
        let p = parse_program(&src).unwrap();
        let needs_obj = src.contains("ref R");
        let args = if needs_obj { "1, o" } else { "1" };
        let mut h = String::new();
        if needs_obj {
            h.push_str("o = new R;\n");
        }
        h.push_str(&format!("spawn f0({args});\nspawn f0({args});\njoin;\n"));
        let e = exe(&p, &h);
        let pol = builtin_policies().get("seeded-random").unwrap();
        let a = e.run(pol.as_ref(), seed);
        prop_assert_eq!(&a, &e.run(pol.as_ref(), seed));
        prop_assert_ne!(a.status, TraceStatus::Incomplete);
    }
}
