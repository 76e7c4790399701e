// SPDX-License-Identifier: Apache-2.0

//! Harness synthesis: one two-thread harness per write-anchored pair task.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{TargetReport, VarId};
use crate::minilang::{
    parse_harness, AccessId, CallGraph, GlobalType, HarnessBlock, HarnessStmt, Param, ParamType, Program,
};
use crate::pathfinder::{ArgValue, ConcreteInputPlan, ConcreteInputs, SetupAction};

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum HarnessError {
    #[error("setup conflict on `{target}`: {detail}")]
    SetupConflict { target: String, detail: String },
    #[error("invalid harness: {}", diagnostics.join("; "))]
    HarnessInvalid { diagnostics: Vec<String> },
}

impl HarnessError {
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            HarnessError::SetupConflict { .. } => vec![self.to_string()],
            HarnessError::HarnessInvalid { diagnostics } => diagnostics.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub function: String,
    pub args: Vec<ArgValue>,
}

impl From<&ConcreteInputs> for Invocation {
    fn from(ci: &ConcreteInputs) -> Invocation {
        Invocation {
            function: ci.entry.clone(),
            args: ci.args.clone(),
        }
    }
}

/// Concatenates setup lists, dropping exact duplicates, and orders the
/// result as allocations, assignments, calls (stable within a rank).
pub fn merge_setup(lists: &[&[SetupAction]]) -> Result<Vec<SetupAction>, HarnessError> {
    let mut out: Vec<SetupAction> = Vec::new();
    let mut assigned: BTreeMap<&str, i64> = BTreeMap::new();
    let mut allocated: BTreeMap<&str, &str> = BTreeMap::new();
    for a in lists.iter().flat_map(|l| l.iter()) {
        match a {
            SetupAction::Assign { target, value } => match assigned.get(target.as_str()) {
                Some(v) if v != value => {
                    return Err(HarnessError::SetupConflict {
                        target: target.clone(),
                        detail: format!("assigned both {v} and {value}"),
                    })
                }
                Some(_) => continue,
                None => {
                    assigned.insert(target, *value);
                }
            },
            SetupAction::Alloc { name, record } => match allocated.get(name.as_str()) {
                Some(r) if r != record => {
                    return Err(HarnessError::SetupConflict {
                        target: name.clone(),
                        detail: format!("allocated as both {r} and {record}"),
                    })
                }
                Some(_) => continue,
                None => {
                    allocated.insert(name, record);
                }
            },
            SetupAction::Call { .. } => {
                if out.contains(a) {
                    continue;
                }
            }
        }
        out.push(a.clone());
    }
    out.sort_by_key(SetupAction::rank);
    Ok(out)
}

/// Lexicographic enumeration of `n`-tuples over [-b, b], last position
/// fastest.
pub struct IntTuples {
    cur: Option<Vec<i64>>,
    b: i64,
}

impl IntTuples {
    pub fn new(n: usize, b: i64) -> IntTuples {
        IntTuples {
            cur: Some(vec![-b; n]),
            b,
        }
    }
}

impl Iterator for IntTuples {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let out = self.cur.clone()?;
        let mut next = out.clone();
        let mut i = next.len();
        self.cur = loop {
            if i == 0 {
                break None;
            }
            i -= 1;
            if next[i] < self.b {
                next[i] += 1;
                break Some(next);
            }
            next[i] = -self.b;
        };
        Some(out)
    }
}

/// Binds int values to the int parameters in order; ref parameters get
/// the shared object of their record.
pub fn bind_args(params: &[Param], ints: &[i64]) -> Vec<ArgValue> {
    let mut it = ints.iter();
    params
        .iter()
        .map(|prm| match &prm.ty {
            ParamType::Int => ArgValue::Int(*it.next().expect("one value per int parameter")),
            ParamType::Ref(r) => ArgValue::Shared { shared: r.clone() },
        })
        .collect()
}

/// Every argument list for `params` over [-b, b].
pub fn arg_tuples(params: &[Param], b: i64) -> Vec<Vec<ArgValue>> {
    let n = params.iter().filter(|x| x.ty == ParamType::Int).count();
    IntTuples::new(n, b).map(|t| bind_args(params, &t)).collect()
}

/// Harness-assignable global targets: scalars, fields of global records,
/// and every array element.
pub fn assignable_targets(p: &Program) -> Vec<String> {
    let mut out = Vec::new();
    for g in &p.globals {
        match &g.ty {
            GlobalType::Int | GlobalType::AtomicInt => out.push(g.name.clone()),
            GlobalType::IntArray(n) => out.extend((0..*n).map(|i| format!("{}[{i}]", g.name))),
            GlobalType::Record(r) => {
                if let Some(d) = p.record(r) {
                    out.extend(d.fields.iter().map(|f| format!("{}.{}", g.name, f.name)));
                }
            }
            GlobalType::Mutex => {}
        }
    }
    out
}

/// Single global assignments over [-b, b].
pub fn assignment_menu(p: &Program, b: i64) -> Vec<SetupAction> {
    assignable_targets(p)
        .into_iter()
        .flat_map(|target| {
            (-b..=b).map(move |value| SetupAction::Assign {
                target: target.clone(),
                value,
            })
        })
        .collect()
}

/// Single pre-calls of root functions with arguments over [-b, b].
pub fn precall_menu(p: &Program, b: i64) -> Vec<SetupAction> {
    let cg = CallGraph::build(p);
    let mut out = Vec::new();
    for root in &cg.roots {
        let f = p.function(root).expect("roots are functions");
        for args in arg_tuples(&f.params, b) {
            out.push(SetupAction::Call {
                function: root.clone(),
                args,
            });
        }
    }
    out
}

/// Chooses harness object names for shared and fresh directives.
struct Objects {
    taken: BTreeSet<String>,
    shared: BTreeMap<String, String>,
    allocs: Vec<(String, String)>,
    fresh_count: usize,
}

impl Objects {
    fn new(p: &Program, setup: &[SetupAction]) -> Objects {
        let mut taken: BTreeSet<String> = p
            .globals
            .iter()
            .map(|g| g.name.clone())
            .chain(p.functions.iter().map(|f| f.name.clone()))
            .chain(p.externs.iter().map(|e| e.name.clone()))
            .chain(p.records.iter().map(|r| r.name.clone()))
            .collect();
        for a in setup {
            if let SetupAction::Alloc { name, .. } = a {
                taken.insert(name.clone());
            }
        }
        Objects {
            taken,
            shared: BTreeMap::new(),
            allocs: Vec::new(),
            fresh_count: 0,
        }
    }

    fn fresh_name(&mut self, base: String) -> String {
        let mut name = base;
        while self.taken.contains(&name) {
            name.push('_');
        }
        self.taken.insert(name.clone());
        name
    }

    fn arg(&mut self, a: &ArgValue) -> String {
        match a {
            ArgValue::Int(v) => v.to_string(),
            ArgValue::Object { object } => object.clone(),
            ArgValue::Shared { shared } => {
                if let Some(n) = self.shared.get(shared) {
                    return n.clone();
                }
                let n = self.fresh_name(format!("shared_{}", shared.to_lowercase()));
                self.shared.insert(shared.clone(), n.clone());
                self.allocs.push((n.clone(), shared.clone()));
                n
            }
            ArgValue::Fresh { fresh } => {
                self.fresh_count += 1;
                let n = self.fresh_name(format!("fresh_{}{}", fresh.to_lowercase(), self.fresh_count));
                self.allocs.push((n.clone(), fresh.clone()));
                n
            }
        }
    }

    fn call(&mut self, inv: &Invocation) -> String {
        let args: Vec<String> = inv.args.iter().map(|a| self.arg(a)).collect();
        format!("{}({})", inv.function, args.join(", "))
    }
}

/// Harness text: allocations, assignments, setup calls, sequential
/// `calls`, then one spawn per entry of `spawns` and a final join.
pub fn render(p: &Program, setup: &[SetupAction], calls: &[Invocation], spawns: &[Invocation]) -> String {
    let mut objs = Objects::new(p, setup);
    let mut body = Vec::new();
    for a in setup {
        match a {
            SetupAction::Alloc { name, record } => body.push(format!("{name} = new {record};")),
            SetupAction::Assign { target, value } => body.push(format!("{target} = {value};")),
            SetupAction::Call { function, args } => {
                let inv = Invocation {
                    function: function.clone(),
                    args: args.clone(),
                };
                body.push(format!("{};", objs.call(&inv)));
            }
        }
    }
    for c in calls {
        body.push(format!("{};", objs.call(c)));
    }
    for s in spawns {
        body.push(format!("spawn {};", objs.call(s)));
    }
    if !spawns.is_empty() {
        body.push("join;".to_string());
    }
    let allocs: Vec<String> = objs.allocs.iter().map(|(n, r)| format!("{n} = new {r};")).collect();
    let n_setup_allocs = setup.iter().filter(|a| a.rank() == 0).count();
    let mut out = String::from("harness {\n");
    for line in body[..n_setup_allocs]
        .iter()
        .chain(&allocs)
        .chain(&body[n_setup_allocs..])
    {
        let _ = writeln!(out, "    {line}");
    }
    out.push_str("}\n");
    out
}

/// One pair task organized around the pair's write anchor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorTask {
    pub pair_id: u32,
    pub var_id: VarId,
    pub anchor: AccessId,
    pub partner: AccessId,
    pub anchor_entry: String,
    pub partner_entry: String,
}

/// One task per pair, grouped by variable, then anchor, then partner.
pub fn partition_tasks(report: &TargetReport) -> Vec<AnchorTask> {
    let mut tasks: Vec<AnchorTask> = report
        .pairs
        .iter()
        .map(|pair| AnchorTask {
            pair_id: pair.pair_id,
            var_id: pair.var_id,
            anchor: pair.first,
            partner: pair.second,
            anchor_entry: pair.entries[0].clone(),
            partner_entry: pair.entries[1].clone(),
        })
        .collect();
    tasks.sort_by_key(|t| (t.var_id, t.anchor, t.partner, t.pair_id));
    tasks
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Harness {
    pub file_name: String,
    pub text: String,
    pub pair_id: u32,
    pub iteration: u32,
    #[serde(skip)]
    pub block: HarnessBlock,
}

/// Builds the harness for `task` from the two SAT plans.
pub fn synthesize_harness(
    task: &AnchorTask,
    anchor: &ConcreteInputPlan,
    partner: &ConcreteInputPlan,
    p: &Program,
    program_name: &str,
    iteration: u32,
) -> Result<Harness, HarnessError> {
    let (Some(a), Some(b)) = (&anchor.concrete_inputs, &partner.concrete_inputs) else {
        return Err(HarnessError::HarnessInvalid {
            diagnostics: vec!["both plans must be SAT".to_string()],
        });
    };
    let setup = merge_setup(&[&a.setup, &b.setup])?;
    let text = render(p, &setup, &[], &[a.into(), b.into()]);
    let block = validate_harness(&text, p)?;
    Ok(Harness {
        file_name: format!("{program_name}_{}_{iteration}.mtc", task.pair_id),
        text,
        pair_id: task.pair_id,
        iteration,
        block,
    })
}

/// Parses and type-checks harness text against `p`, and checks the
/// two-spawn shape with setup first.
pub fn validate_harness(text: &str, p: &Program) -> Result<HarnessBlock, HarnessError> {
    let h = parse_harness(text, p).map_err(|e| HarnessError::HarnessInvalid {
        diagnostics: vec![e.to_string()],
    })?;
    let mut diagnostics = Vec::new();
    let spawns: Vec<usize> = h
        .stmts
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, HarnessStmt::Spawn { .. }))
        .map(|(i, _)| i)
        .collect();
    if spawns.len() != 2 {
        diagnostics.push(format!("expected 2 spawns, found {}", spawns.len()));
    }
    let n = h.stmts.len();
    if !matches!(h.stmts.last(), Some(HarnessStmt::Join { .. })) {
        diagnostics.push("harness must end with join".to_string());
    }
    if spawns.len() == 2 && !(spawns[1] == spawns[0] + 1 && spawns[1] + 2 == n) {
        diagnostics.push("setup statements must precede the spawns".to_string());
    }
    if diagnostics.is_empty() {
        Ok(h)
    } else {
        Err(HarnessError::HarnessInvalid { diagnostics })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub harness_file: Option<String>,
    pub pair_id: u32,
    pub iteration: u32,
    /// Anchor plan, then partner plan.
    pub plans: Vec<ConcreteInputPlan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}
