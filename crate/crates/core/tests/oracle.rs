// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use concov::analysis::{analyze, AnalysisOptions};
use concov::minilang::parse_program;
use concov::orchestrator::{run_oracle, OracleConfig, OracleError};

fn reachable(src: &str, cfg: &OracleConfig) -> Result<BTreeSet<u32>, OracleError> {
    let p = parse_program(src).unwrap();
    run_oracle(&p, &analyze(&p, &AnalysisOptions::default()), cfg)
}

#[test]
fn dead_store_is_unreachable() {
    let p = common::load(&common::corpus("deadbranch"));
    let r = analyze(&p, &AnalysisOptions::default());
    assert_eq!(r.pairs.len(), 1);
    assert!(run_oracle(&p, &r, &OracleConfig::default()).unwrap().is_empty());
}

#[test]
fn bound_limits_what_is_found() {
    let src = "global int g;\nglobal mutex m;\n\
               fn f(x: int) {\n    if (x == 3) {\n        lock m;\n        g = x;\n        unlock m;\n    }\n}\n";
    let small = OracleConfig {
        bound: 2,
        ..OracleConfig::default()
    };
    assert!(reachable(src, &small).unwrap().is_empty());
    assert_eq!(reachable(src, &OracleConfig::default()).unwrap(), BTreeSet::from([1]));
}

#[test]
fn needs_an_interleaving() {
    // The write runs only if `b` stores its flag between the store and
    // the check in `a`.
    let src = "global int flag;\nglobal int g;\nglobal mutex m;\n\
               fn a(x: int) {\n    flag = 1;\n    if (flag == 2) {\n        lock m;\n        g = 1;\n        unlock m;\n    }\n}\n\
               fn b(x: int) {\n    flag = 2;\n    lock m;\n    t = g;\n    unlock m;\n}\n";
    let p = parse_program(src).unwrap();
    let r = analyze(&p, &AnalysisOptions::default());
    let id = r
        .pairs
        .iter()
        .find(|x| x.first != x.second && r.access_point(x.first).unwrap().function == "a")
        .expect("write/read pair on g")
        .pair_id;
    let none = OracleConfig {
        bound: 1,
        preemptions: 0,
        ..OracleConfig::default()
    };
    assert!(!run_oracle(&p, &r, &none).unwrap().contains(&id));
    let one = OracleConfig {
        bound: 1,
        preemptions: 1,
        ..OracleConfig::default()
    };
    assert!(run_oracle(&p, &r, &one).unwrap().contains(&id));
}

#[test]
fn oversized_menus_are_refused() {
    let src = "global int g;\nglobal mutex m;\n\
               fn f(a: int, b: int, c: int) {\n    lock m;\n    g = a + b + c;\n    unlock m;\n}\n";
    assert!(matches!(
        reachable(src, &OracleConfig::default()),
        Err(OracleError::TooLarge { .. })
    ));
    let src = "global int g;\nglobal int h;\nglobal mutex m;\n\
               fn f(a: int, b: int) {\n    if (h == 4) {\n        lock m;\n        g = a + b;\n        unlock m;\n    }\n}\n";
    let tight = OracleConfig {
        max_harnesses: 10,
        ..OracleConfig::default()
    };
    assert!(matches!(reachable(src, &tight), Err(OracleError::TooLarge { .. })));
}
