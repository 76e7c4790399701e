// SPDX-License-Identifier: Apache-2.0

//! Concrete input plans exchanged between the path search, reasoners and
//! harness synthesis.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ConstraintRecord, Decision};
use crate::minilang::AccessId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "UNSAT")]
    Unsat,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Sat => "SAT",
            Verdict::Unsat => "UNSAT",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

/// Value bound to one entry parameter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Int(i64),
    /// The harness-wide shared object of this record type.
    Shared {
        shared: String,
    },
    /// A dedicated object of this record type.
    Fresh {
        fresh: String,
    },
    /// A named object: a global record or an object allocated in setup.
    Object {
        object: String,
    },
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Int(v) => write!(f, "{v}"),
            ArgValue::Shared { shared } => write!(f, "<shared {shared}>"),
            ArgValue::Fresh { fresh } => write!(f, "<fresh {fresh}>"),
            ArgValue::Object { object } => f.write_str(object),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupAction {
    /// `target` uses harness syntax: `g`, `arr[2]`, `rec.f`, `obj.f`.
    Assign {
        target: String,
        value: i64,
    },
    Alloc {
        name: String,
        record: String,
    },
    Call {
        function: String,
        args: Vec<ArgValue>,
    },
}

impl SetupAction {
    /// Merge order within a harness: allocations, assignments, calls.
    pub fn rank(&self) -> u8 {
        match self {
            SetupAction::Alloc { .. } => 0,
            SetupAction::Assign { .. } => 1,
            SetupAction::Call { .. } => 2,
        }
    }
}

impl fmt::Display for SetupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetupAction::Assign { target, value } => write!(f, "{target} = {value}"),
            SetupAction::Alloc { name, record } => write!(f, "{name} = new {record}"),
            SetupAction::Call { function, args } => {
                let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                write!(f, "{function}({})", args.join(", "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteInputs {
    pub entry: String,
    pub args: Vec<ArgValue>,
    pub setup: Vec<SetupAction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteInputPlan {
    pub target: AccessId,
    pub target_location: String,
    pub feasible_path: Vec<String>,
    pub decisions: Vec<Decision>,
    pub constraints: Vec<ConstraintRecord>,
    /// Present exactly when the verdict is SAT.
    pub concrete_inputs: Option<ConcreteInputs>,
    pub verdict: Verdict,
    pub backend: String,
    pub rationale: String,
}

impl ConcreteInputPlan {
    pub fn is_sat(&self) -> bool {
        self.verdict == Verdict::Sat && self.concrete_inputs.is_some()
    }
}
