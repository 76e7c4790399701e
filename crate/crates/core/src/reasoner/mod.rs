// SPDX-License-Identifier: Apache-2.0

//! Input-deduction backends. A reasoner turns a path constraint summary
//! into entry arguments and setup actions, or explains why it cannot.

mod deterministic;
mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harnessgen::{self, Invocation};
use crate::minilang::{AccessId, GlobalType, Param, ParamType, Program};
use crate::pathfinder::{
    ArgValue, ConcreteInputs, ConstraintKind, Decision, PathCandidate, PathConstraintSummary, SetupAction, Verdict,
};
use crate::registry::Registry;
use crate::runtime::{Compiled, Limits};

pub use deterministic::{DeterministicConfig, DeterministicReasoner};
pub use remote::{ChatMessage, HttpTransport, RemoteConfig, RemoteReasoner, ScriptedTransport, Transport};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ReasonerError {
    #[error("reasoner unavailable: {0}")]
    ReasonerUnavailable(String),
    #[error("domain too large: {params} integer parameters with bound {bound}")]
    DomainTooLarge { params: usize, bound: i64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySignature {
    pub function: String,
    pub params: Vec<Param>,
}

impl EntrySignature {
    pub fn of(p: &Program, function: &str) -> Option<EntrySignature> {
        p.function(function).map(|f| EntrySignature {
            function: f.name.clone(),
            params: f.params.clone(),
        })
    }

    pub fn int_params(&self) -> usize {
        self.params.iter().filter(|p| p.ty == ParamType::Int).count()
    }
}

/// Program symbols a plan may use in setup actions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupVocabulary {
    /// `type name` for every assignable global.
    pub globals: Vec<String>,
    pub records: Vec<String>,
    /// Signatures of functions a setup call may invoke.
    pub functions: Vec<String>,
}

impl SetupVocabulary {
    pub fn of(p: &Program) -> SetupVocabulary {
        let globals = p
            .globals
            .iter()
            .filter(|g| g.ty != GlobalType::Mutex)
            .map(|g| {
                let ty = match &g.ty {
                    GlobalType::Int => "int".to_string(),
                    GlobalType::AtomicInt => "atomic int".to_string(),
                    GlobalType::IntArray(n) => format!("int[{n}]"),
                    GlobalType::Record(r) => r.clone(),
                    GlobalType::Mutex => unreachable!(),
                };
                format!("{ty} {}", g.name)
            })
            .collect();
        let records = p
            .records
            .iter()
            .map(|r| {
                let fields: Vec<&str> = r.fields.iter().map(|f| f.name.as_str()).collect();
                format!("{} {{ {} }}", r.name, fields.join(", "))
            })
            .collect();
        let functions = p
            .functions
            .iter()
            .map(|f| {
                let ps: Vec<String> = f.params.iter().map(|x| format!("{}: {}", x.name, x.ty)).collect();
                format!("{}({})", f.name, ps.join(", "))
            })
            .collect();
        SetupVocabulary {
            globals,
            records,
            functions,
        }
    }
}

/// State that holds before the entry runs and that the plan must not
/// repeat: merged setup from the other side, then optionally the other
/// side's invocation run to completion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preconditions {
    pub setup: Vec<SetupAction>,
    pub partner: Option<Invocation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerRequest {
    pub target: AccessId,
    pub target_location: String,
    pub feasible_path: Vec<String>,
    pub decisions: Vec<Decision>,
    pub summary: PathConstraintSummary,
    pub entry: EntrySignature,
    pub vocabulary: SetupVocabulary,
    pub preconditions: Preconditions,
}

impl ReasonerRequest {
    pub fn new(
        p: &Program,
        path: &PathCandidate,
        summary: PathConstraintSummary,
        preconditions: Preconditions,
    ) -> ReasonerRequest {
        let site = p.access(path.target).expect("targets are program accesses");
        ReasonerRequest {
            target: path.target,
            target_location: format!("{} in {} at line {}", site.place, site.function, site.pos.line),
            feasible_path: path.labels(),
            decisions: path.decisions.clone(),
            summary,
            entry: EntrySignature::of(p, &path.root).expect("roots are functions"),
            vocabulary: SetupVocabulary::of(p),
            preconditions,
        }
    }

    pub fn kinds(&self) -> impl Iterator<Item = ConstraintKind> + '_ {
        self.summary.records.iter().map(|r| r.kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerResponse {
    pub verdict: Verdict,
    pub args: Option<Vec<ArgValue>>,
    pub setup: Vec<SetupAction>,
    pub rationale: String,
}

impl ReasonerResponse {
    pub fn unknown(why: impl Into<String>) -> ReasonerResponse {
        ReasonerResponse {
            verdict: Verdict::Unknown,
            args: None,
            setup: Vec::new(),
            rationale: why.into(),
        }
    }

    pub fn unsat(why: impl Into<String>) -> ReasonerResponse {
        ReasonerResponse {
            verdict: Verdict::Unsat,
            ..ReasonerResponse::unknown(why)
        }
    }
}

/// Program-level context shared by all requests of a run.
#[derive(Clone)]
pub struct SolveContext<'a> {
    pub program: &'a Program,
    pub code: Arc<Compiled>,
    pub limits: Limits,
}

impl<'a> SolveContext<'a> {
    pub fn new(program: &'a Program, limits: Limits) -> SolveContext<'a> {
        SolveContext {
            program,
            code: Arc::new(Compiled::new(program)),
            limits,
        }
    }
}

pub trait Reasoner: Send + Sync {
    fn name(&self) -> &'static str;
    fn capabilities(&self) -> &'static [ConstraintKind];
    fn solve(&self, req: &ReasonerRequest, ctx: &SolveContext<'_>) -> Result<ReasonerResponse, ReasonerError>;
    /// Whether an UNKNOWN answer may change on a later attempt.
    fn retries_unknown(&self) -> bool {
        false
    }
}

pub type ReasonerRegistry = Registry<dyn Reasoner>;

/// Registry holding the deterministic backend and, when configured from
/// the environment, the remote one under `llm`.
pub fn builtin_reasoners(det: DeterministicConfig, remote: Option<RemoteConfig>) -> ReasonerRegistry {
    let mut r = ReasonerRegistry::default();
    r.register("deterministic", Arc::new(DeterministicReasoner::new(det)));
    if let Some(cfg) = remote {
        let transport = HttpTransport::new(cfg.clone());
        r.register("llm", Arc::new(RemoteReasoner::new(cfg, Box::new(transport))));
    }
    r
}

fn check_arg(p: &Program, setup: &[SetupAction], param: &Param, arg: &ArgValue) -> Result<(), String> {
    let record = match &param.ty {
        ParamType::Int => {
            return match arg {
                ArgValue::Int(_) => Ok(()),
                other => Err(format!("`{}` is an int parameter, got {other}", param.name)),
            }
        }
        ParamType::Ref(r) => r,
    };
    let got = match arg {
        ArgValue::Int(v) => return Err(format!("`{}` is a ref parameter, got {v}", param.name)),
        ArgValue::Shared { shared } => shared.clone(),
        ArgValue::Fresh { fresh } => fresh.clone(),
        ArgValue::Object { object } => {
            let alloc = setup.iter().find_map(|a| match a {
                SetupAction::Alloc { name, record } if name == object => Some(record.clone()),
                _ => None,
            });
            match (alloc, p.global(object).map(|g| &g.ty)) {
                (Some(r), _) => r,
                (None, Some(GlobalType::Record(r))) => r.clone(),
                _ => return Err(format!("unknown object `{object}`")),
            }
        }
    };
    if &got == record {
        Ok(())
    } else {
        Err(format!("`{}` expects a {record}, got a {got}", param.name))
    }
}

/// Checks a SAT response against the entry signature and the program;
/// the returned inputs name only existing symbols.
pub fn validate_plan(resp: &ReasonerResponse, entry: &EntrySignature, p: &Program) -> Result<ConcreteInputs, String> {
    let args = resp.args.as_ref().ok_or("SAT response without arguments")?;
    if args.len() != entry.params.len() {
        return Err(format!(
            "{} takes {} arguments, plan gives {}",
            entry.function,
            entry.params.len(),
            args.len()
        ));
    }
    for (param, arg) in entry.params.iter().zip(args) {
        check_arg(p, &resp.setup, param, arg)?;
    }
    for a in &resp.setup {
        if let SetupAction::Call { function, args } = a {
            let sig = EntrySignature::of(p, function).ok_or(format!("unknown function `{function}`"))?;
            if sig.params.len() != args.len() {
                return Err(format!("setup call {a} has the wrong arity"));
            }
            for (param, arg) in sig.params.iter().zip(args) {
                check_arg(p, &resp.setup, param, arg)?;
            }
        }
    }
    let inv = Invocation {
        function: entry.function.clone(),
        args: args.clone(),
    };
    let text = harnessgen::render(p, &resp.setup, &[], &[inv.clone(), inv]);
    harnessgen::validate_harness(&text, p).map_err(|e| e.to_string())?;
    Ok(ConcreteInputs {
        entry: entry.function.clone(),
        args: args.clone(),
        setup: resp.setup.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_program;

    fn sat(args: Vec<ArgValue>, setup: Vec<SetupAction>) -> ReasonerResponse {
        ReasonerResponse {
            verdict: Verdict::Sat,
            args: Some(args),
            setup,
            rationale: String::new(),
        }
    }

    #[test]
    fn validate_plan_checks_symbols() {
        let p = parse_program("global int g;\nfn insert(key: int) { g = key; }\n").unwrap();
        let entry = EntrySignature::of(&p, "insert").unwrap();
        let ok = validate_plan(&sat(vec![ArgValue::Int(4)], vec![]), &entry, &p).unwrap();
        assert_eq!(ok.args, vec![ArgValue::Int(4)]);
        assert!(validate_plan(&sat(vec![], vec![]), &entry, &p).is_err());
        let zz = SetupAction::Assign {
            target: "zz".into(),
            value: 1,
        };
        assert!(validate_plan(&sat(vec![ArgValue::Int(4)], vec![zz]), &entry, &p).is_err());
        let obj = ArgValue::Shared { shared: "R".into() };
        assert!(validate_plan(&sat(vec![obj], vec![]), &entry, &p).is_err());
    }
}
