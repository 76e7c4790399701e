// SPDX-License-Identifier: Apache-2.0

//! Instrumented interpreter. Threads are simulated and switched only at
//! memory accesses, lock operations, spawns and joins, so a (program,
//! harness, schedule) triple always yields the same trace.

mod lower;
mod machine;
pub mod schedule;
mod trace;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minilang::{HarnessBlock, Program};
pub use lower::Compiled;
pub use machine::{Event, Machine, Observations, ThreadState};
pub use schedule::{builtin_policies, PolicyRegistry, SchedulePolicy};
pub use trace::{Address, Trace, TraceParseError, TraceRecord, TraceStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: u64,
    pub max_threads: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 100_000,
            max_threads: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub seed: u64,
    pub policy: String,
}

impl Schedule {
    pub fn round_robin() -> Schedule {
        Schedule {
            seed: 0,
            policy: "round-robin".to_string(),
        }
    }

    pub fn seeded(seed: u64) -> Schedule {
        Schedule {
            seed,
            policy: "seeded-random".to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("unknown schedule policy `{0}`")]
    UnknownPolicy(String),
    #[error("no schedule seeds given")]
    NoSeeds,
}

/// A program and harness lowered once, ready for repeated execution.
#[derive(Clone, Debug)]
pub struct Executable {
    code: Arc<Compiled>,
    harness: Arc<lower::Code>,
    pub limits: Limits,
}

impl Executable {
    pub fn new(p: &Program, h: &HarnessBlock, limits: Limits) -> Executable {
        Executable::with_code(Arc::new(Compiled::new(p)), p, h, limits)
    }

    /// Reuses an already lowered program for another harness.
    pub fn with_code(code: Arc<Compiled>, p: &Program, h: &HarnessBlock, limits: Limits) -> Executable {
        let harness = Arc::new(code.lower_harness(p, h));
        Executable { code, harness, limits }
    }

    /// A fresh machine with every thread advanced to its first event.
    pub fn machine(&self) -> Machine {
        self.machine_with(false, false)
    }

    /// Like [`Executable::machine`], optionally recording control-flow
    /// observations and the lock/access event log from the first step.
    pub fn machine_with(&self, observe: bool, log_events: bool) -> Machine {
        let mut m = Machine::new(self.code.clone(), self.harness.clone(), self.limits);
        if observe {
            m.observations = Some(Observations::default());
        }
        if log_events {
            m.events = Some(Vec::new());
        }
        m.settle();
        m
    }

    /// Drives `m` to completion under `policy`.
    pub fn run_machine(&self, m: &mut Machine, policy: &dyn SchedulePolicy, seed: u64) {
        let mut picker = policy.picker(seed);
        loop {
            let enabled = m.enabled();
            if enabled.is_empty() {
                break;
            }
            m.fire(picker.pick(&enabled));
        }
    }

    pub fn run(&self, policy: &dyn SchedulePolicy, seed: u64) -> Trace {
        let mut m = self.machine();
        self.run_machine(&mut m, policy, seed);
        Trace {
            seed,
            policy: policy.name().to_string(),
            status: m.status(),
            records: m.records,
            faults: m.faults,
        }
    }
}

pub fn execute(p: &Program, h: &HarnessBlock, s: &Schedule, limits: Limits) -> Result<Trace, RuntimeError> {
    let policy = builtin_policies()
        .get(&s.policy)
        .ok_or_else(|| RuntimeError::UnknownPolicy(s.policy.clone()))?;
    Ok(Executable::new(p, h, limits).run(policy.as_ref(), s.seed))
}

/// One seeded-random execution per seed, in seed order.
pub fn execute_many(p: &Program, h: &HarnessBlock, seeds: &[u64], limits: Limits) -> Result<Vec<Trace>, RuntimeError> {
    if seeds.is_empty() {
        return Err(RuntimeError::NoSeeds);
    }
    let exe = Executable::new(p, h, limits);
    let policy = schedule::SeededRandom;
    Ok(seeds.iter().map(|s| exe.run(&policy, *s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{parse_harness, parse_program, AccessId, MemOp};

    fn run(src: &str, harness: &str, s: &Schedule, limits: Limits) -> Trace {
        let p = parse_program(src).unwrap();
        let h = parse_harness(harness, &p).unwrap();
        execute(&p, &h, s, limits).unwrap()
    }

    #[test]
    fn empty_harness_is_complete() {
        let t = run(
            "global int g;\nfn f() { x = 1; }\n",
            "harness { spawn f(); join; }",
            &Schedule::round_robin(),
            Limits::default(),
        );
        assert_eq!(t.status, TraceStatus::Complete);
        assert!(t.records.is_empty());
    }

    #[test]
    fn step_limit_gives_incomplete() {
        let src = "global int g;\nfn spin() { i = 0; while (i < 1000) { g = i; i = i + 1; } }\n";
        let limits = Limits {
            max_steps: 100,
            ..Limits::default()
        };
        let t = run(
            src,
            "harness { spawn spin(); spawn spin(); join; }",
            &Schedule::round_robin(),
            limits,
        );
        assert_eq!(t.status, TraceStatus::Incomplete);
    }

    #[test]
    fn lock_order_deadlock() {
        let src = "global mutex a;\nglobal mutex b;\n\
                   fn ab() { lock a; lock b; unlock b; unlock a; }\n\
                   fn ba() { lock b; lock a; unlock a; unlock b; }\n";
        let statuses: Vec<TraceStatus> = (0..64)
            .map(|seed| {
                run(
                    src,
                    "harness { spawn ab(); spawn ba(); join; }",
                    &Schedule::seeded(seed),
                    Limits::default(),
                )
                .status
            })
            .collect();
        assert!(statuses.contains(&TraceStatus::Deadlock));
        assert!(statuses.contains(&TraceStatus::Complete));
    }

    #[test]
    fn null_field_faults_one_thread() {
        let src = "record R { int v; }\nglobal int g;\n\
                   fn bad() { if (g == 1) { r = new R; } r.v = 1; }\n\
                   fn good() { g = 2; }\n";
        let t = run(
            src,
            "harness { spawn bad(); spawn good(); join; }",
            &Schedule::round_robin(),
            Limits::default(),
        );
        assert_eq!(t.status, TraceStatus::Faulted);
        assert!(t.records.iter().any(|r| r.thread == 2 && r.op == MemOp::Write));
    }

    #[test]
    fn heap_addresses_count_per_site() {
        let src = "record R { int v; }\nfn mk() { a = new R; a.v = 1; b = new R; b.v = 2; }\n";
        let t = run(
            src,
            "harness { mk(); mk(); }",
            &Schedule::round_robin(),
            Limits::default(),
        );
        let addrs: Vec<String> = t.records.iter().map(|r| r.addr.to_string()).collect();
        assert_eq!(addrs, ["H:1:1.v", "H:2:1.v", "H:1:2.v", "H:2:2.v"]);
        assert_eq!(t.records[0].access_id, AccessId(1));
    }

    #[test]
    fn arithmetic_wraps() {
        let src = "global int g = 9223372036854775807;\nfn f() { g = g + 1; }\n";
        let p = parse_program(src).unwrap();
        let h = parse_harness("harness { f(); f(); }", &p).unwrap();
        let exe = Executable::new(&p, &h, Limits::default());
        let t = exe.run(&schedule::RoundRobin, 0);
        assert_eq!(t.records.len(), 4);
    }

    #[test]
    fn empty_seed_list_rejected() {
        let p = parse_program("fn f() { }\n").unwrap();
        let h = parse_harness("harness { f(); }", &p).unwrap();
        assert_eq!(execute_many(&p, &h, &[], Limits::default()), Err(RuntimeError::NoSeeds));
        assert!(matches!(
            execute(
                &p,
                &h,
                &Schedule {
                    seed: 0,
                    policy: "fifo".into()
                },
                Limits::default()
            ),
            Err(RuntimeError::UnknownPolicy(_))
        ));
    }
}
