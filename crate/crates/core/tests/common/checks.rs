// SPDX-License-Identifier: Apache-2.0

//! Property checks shared by the focused suites and the acceptance run.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use concov::analysis::{analyze, AnalysisOptions};
use concov::minilang::{parse_harness, parse_program, CallGraph, Program};
use concov::orchestrator::{run_program, RunConfig};
use concov::pathfinder::{deduce_inputs, request_for, SearchState, Verdict};
use concov::reasoner::{
    ChatMessage, Preconditions, Reasoner, RemoteConfig, RemoteReasoner, ScriptedTransport, SolveContext, Transport,
};
use concov::runtime::{builtin_policies, Address, Event, Executable, Limits, TraceStatus};

pub fn block(body: &str) -> String {
    format!("harness {{\n{body}}}\n")
}

pub fn exe(p: &Program, body: &str) -> Executable {
    let h = parse_harness(&block(body), p).unwrap();
    Executable::new(p, &h, Limits::default())
}

pub fn replay_is_deterministic() -> Result<(), String> {
    let policies = builtin_policies();
    for name in ["hashmap", "spawner", "account", "tokens"] {
        let p = super::load(&super::corpus(name));
        let roots: Vec<String> = concov::minilang::CallGraph::build(&p).roots;
        let mut h = String::new();
        for r in roots.iter().take(2) {
            let f = p.function(r).unwrap();
            let args: Vec<String> = f
                .params
                .iter()
                .enumerate()
                .map(|(i, x)| match x.ty {
                    concov::minilang::ParamType::Int => (i as i64 + 1).to_string(),
                    _ => "o".to_string(),
                })
                .collect();
            if f.params.iter().any(|x| x.ty != concov::minilang::ParamType::Int) && !h.contains("o = new") {
                let rec = p.records.first().unwrap().name.clone();
                h = format!("o = new {rec};\n{h}");
            }
            h.push_str(&format!(
                "spawn {r}({});\nspawn {r}({});\n",
                args.join(", "),
                args.join(", ")
            ));
        }
        h.push_str("join;\n");
        let e = exe(&p, &h);
        for pol in ["seeded-random", "round-robin"] {
            let pol = policies.get(pol).unwrap();
            for seed in 0..50 {
                let a = e.run(pol.as_ref(), seed);
                let b = e.run(pol.as_ref(), seed);
                if a != b || a.to_text() != b.to_text() {
                    return Err(format!("{name}: seed {seed} diverged"));
                }
            }
        }
    }
    Ok(())
}

/// Lock/unlock intervals on each mutex never overlap across threads.
pub fn mutual_exclusion_holds() -> Result<(), String> {
    let p = super::load(&super::corpus("lockfix"));
    let e = exe(&p, "spawn enter(1);\nspawn enter(2);\nspawn enter(3);\njoin;\n");
    let pol = builtin_policies().get("seeded-random").unwrap();
    for seed in 0..300 {
        let mut m = e.machine_with(false, true);
        e.run_machine(&mut m, pol.as_ref(), seed);
        let mut owner: BTreeMap<String, usize> = BTreeMap::new();
        let mut inside: i64 = 0;
        let mut locks = 0;
        for ev in m.events.as_ref().unwrap() {
            match ev {
                Event::Lock { thread, mutex } => {
                    if let Some(o) = owner.insert(mutex.clone(), *thread) {
                        return Err(format!("seed {seed}: {mutex} taken by {thread} while held by {o}"));
                    }
                    locks += 1;
                }
                Event::Unlock { thread, mutex } => {
                    if owner.remove(mutex) != Some(*thread) {
                        return Err(format!("seed {seed}: {mutex} released by non-owner {thread}"));
                    }
                }
                Event::Access(r) => {
                    if matches!(&r.addr, Address::Global { name, .. } if name == "inside") {
                        if owner.get("m") != Some(&r.thread) {
                            return Err(format!("seed {seed}: unguarded access to inside"));
                        }
                        if r.op == concov::minilang::MemOp::Write {
                            inside = 1 - inside;
                        }
                    }
                }
            }
        }
        if locks != 3 || inside != 0 || m.status() != TraceStatus::Complete {
            return Err(format!("seed {seed}: {locks} locks, status {:?}", m.status()));
        }
    }
    Ok(())
}

/// 1,000 allocations from one site across two threads get distinct
/// addresses.
pub fn addresses_are_fresh() -> Result<(), String> {
    let src = "record Node { int val; }\n\
               fn fill(k: int) {\n\
                   i = 0;\n\
                   while (i < k) {\n\
                       n = new Node;\n\
                       n.val = i;\n\
                       i = i + 1;\n\
                   }\n\
               }\n";
    let p = parse_program(src).unwrap();
    let e = exe(&p, "spawn fill(500);\nspawn fill(500);\njoin;\n");
    let pol = builtin_policies().get("seeded-random").unwrap();
    for seed in 0..3 {
        let t = e.run(pol.as_ref(), seed);
        let writes: Vec<&Address> = t
            .records
            .iter()
            .filter(|r| matches!(r.addr, Address::Heap { .. }) && r.op == concov::minilang::MemOp::Write)
            .map(|r| &r.addr)
            .collect();
        let distinct: BTreeSet<&Address> = writes.iter().copied().collect();
        if writes.len() != 1000 || distinct.len() != 1000 {
            return Err(format!(
                "seed {seed}: {} writes, {} addresses",
                writes.len(),
                distinct.len()
            ));
        }
    }
    Ok(())
}

pub fn conformant(entry: &str, args: &str, setup: &str) -> String {
    let content = format!(
        "Analysis done.\n```json\n{{\"verdict\":\"SAT\",\"concrete_inputs\":{{\"entry\":\"{entry}\",\"args\":{args},\"setup\":{setup}}},\"rationale\":\"pre-insert the key\"}}\n```\n"
    );
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

pub fn remote(t: impl Transport + 'static) -> RemoteReasoner {
    RemoteReasoner::new(
        RemoteConfig::new("http://127.0.0.1:9/v1/chat/completions", "mock"),
        Box::new(t),
    )
}

pub fn remote_contract() -> Result<(), String> {
    let p = super::load(&super::corpus("hashmap"));
    let ctx = SolveContext::new(&p, Limits::default());
    let report = analyze(&p, &AnalysisOptions::default());
    let target = report.pair(3).unwrap().second;
    let cg = CallGraph::build(&p);
    let s = SearchState::new(&p, &cg, &report, target, Default::default(), Default::default()).unwrap();
    let path = s.candidate(s.extract(true).unwrap()).clone();

    let r = remote(ScriptedTransport::new([conformant(
        "insert",
        "[-7]",
        "[{\"call\":{\"function\":\"insert\",\"args\":[-8]}}]",
    )]));
    let plan = deduce_inputs(&path, &p, &r, &ctx, &Preconditions::default()).map_err(|e| e.to_string())?;
    if !plan.is_sat() || plan.backend != "llm" {
        return Err(format!("conformant reply gave {:?}: {}", plan.verdict, plan.rationale));
    }

    let bad = "{\"choices\":[{\"message\":{\"content\":\"{\\\"verdict\\\":\\\"SAT\\\"}\"}}]}";
    let t = Arc::new(ScriptedTransport::new([bad, "not json at all"]));
    let r = remote(Shared(t.clone()));
    let req = request_for(&path, &p, &Preconditions::default());
    let resp = r.solve(&req, &ctx).map_err(|e| e.to_string())?;
    if resp.verdict != Verdict::Unknown || !resp.rationale.starts_with("unparseable") {
        return Err(format!("malformed replies gave {:?}", resp.verdict));
    }
    if t.sent().len() != 2 {
        return Err(format!("{} sends for two malformed replies", t.sent().len()));
    }

    let calls = Arc::new(AtomicUsize::new(0));
    let r = remote(Malformed(calls.clone()));
    let cfg = RunConfig {
        refine_budget: 3,
        ..RunConfig::default()
    };
    let res = run_program(&p, "hashmap", &cfg, &r).map_err(|e| e.to_string())?;
    if res.ledger.iterations.len() > 3 || res.ledger.aggregate.total != report.pairs.len() {
        return Err(format!("pipeline ran {} iterations", res.ledger.iterations.len()));
    }
    if calls.load(Ordering::SeqCst) == 0 {
        return Err("pipeline never asked the backend".into());
    }
    Ok(())
}

pub struct Shared(pub Arc<ScriptedTransport>);

impl Transport for Shared {
    fn send(&self, m: &[ChatMessage]) -> Result<String, String> {
        self.0.send(m)
    }
}

pub struct Malformed(pub Arc<AtomicUsize>);

impl Transport for Malformed {
    fn send(&self, _: &[ChatMessage]) -> Result<String, String> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Ok("{\"choices\":[{\"message\":{\"content\":\"I think the answer is 4.\"}}]}".into())
    }
}
