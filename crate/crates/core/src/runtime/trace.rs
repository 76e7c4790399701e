// SPDX-License-Identifier: Apache-2.0

//! Access records and the line-oriented trace file format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::minilang::{AccessId, MemOp};

/// A dynamic memory location. Heap counters are per allocation site and
/// start at 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Address {
    Global { name: String, field: Option<String> },
    Element { name: String, index: usize },
    Heap { site: u32, counter: u64, field: String },
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Address::Global { name, field: None } => write!(f, "G:{name}"),
            Address::Global { name, field: Some(x) } => write!(f, "G:{name}.{x}"),
            Address::Element { name, index } => write!(f, "G:{name}[{index}]"),
            Address::Heap { site, counter, field } => write!(f, "H:{site}:{counter}.{field}"),
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Address, String> {
        let bad = || format!("malformed address `{s}`");
        if let Some(rest) = s.strip_prefix("G:") {
            if let Some((name, idx)) = rest.strip_suffix(']').and_then(|r| r.split_once('[')) {
                let index = idx.parse().map_err(|_| bad())?;
                if !is_ident(name) {
                    return Err(bad());
                }
                return Ok(Address::Element {
                    name: name.to_string(),
                    index,
                });
            }
            let (name, field) = match rest.split_once('.') {
                Some((n, f)) if is_ident(f) => (n, Some(f.to_string())),
                Some(_) => return Err(bad()),
                None => (rest, None),
            };
            if !is_ident(name) {
                return Err(bad());
            }
            return Ok(Address::Global {
                name: name.to_string(),
                field,
            });
        }
        let rest = s.strip_prefix("H:").ok_or_else(bad)?;
        let (site, rest) = rest.split_once(':').ok_or_else(bad)?;
        let (counter, field) = rest.split_once('.').ok_or_else(bad)?;
        if !is_ident(field) {
            return Err(bad());
        }
        Ok(Address::Heap {
            site: site.parse().map_err(|_| bad())?,
            counter: counter.parse().map_err(|_| bad())?,
            field: field.to_string(),
        })
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Address, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceRecord {
    pub thread: usize,
    pub op: MemOp,
    pub access_id: AccessId,
    pub addr: Address,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ACC {} {} {} {}", self.thread, self.op, self.access_id, self.addr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceStatus {
    Complete,
    Incomplete,
    Faulted,
    Deadlock,
}

impl fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceStatus::Complete => "complete",
            TraceStatus::Incomplete => "incomplete",
            TraceStatus::Faulted => "faulted",
            TraceStatus::Deadlock => "deadlock",
        })
    }
}

impl FromStr for TraceStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<TraceStatus, String> {
        Ok(match s {
            "complete" => TraceStatus::Complete,
            "incomplete" => TraceStatus::Incomplete,
            "faulted" => TraceStatus::Faulted,
            "deadlock" => TraceStatus::Deadlock,
            _ => return Err(format!("unknown trace status `{s}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub seed: u64,
    pub policy: String,
    pub status: TraceStatus,
    pub records: Vec<TraceRecord>,
    /// Fault messages; not part of the text format.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "TRACE seed={} policy={} status={}\n",
            self.seed, self.policy, self.status
        );
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let err = |line: usize, msg: String| TraceParseError { line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty trace".into()))?;
        let mut words = header.split_whitespace();
        if words.next() != Some("TRACE") {
            return Err(err(hl, "expected `TRACE` header".into()));
        }
        let (mut seed, mut policy, mut status) = (None, None, None);
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| err(hl, format!("malformed header field `{w}`")))?;
            match k {
                "seed" => seed = Some(v.parse().map_err(|_| err(hl, format!("bad seed `{v}`")))?),
                "policy" => policy = Some(v.to_string()),
                "status" => status = Some(v.parse().map_err(|m| err(hl, m))?),
                _ => return Err(err(hl, format!("unknown header field `{k}`"))),
            }
        }
        let missing = |f: &str| err(hl, format!("header lacks `{f}`"));
        let mut trace = Trace {
            seed: seed.ok_or_else(|| missing("seed"))?,
            policy: policy.ok_or_else(|| missing("policy"))?,
            status: status.ok_or_else(|| missing("status"))?,
            records: Vec::new(),
            faults: Vec::new(),
        };
        for (n, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 5 || f[0] != "ACC" {
                return Err(err(n, format!("expected `ACC <thread> <R|W> <id> <addr>`, got `{l}`")));
            }
            let op = match f[2] {
                "R" => MemOp::Read,
                "W" => MemOp::Write,
                o => return Err(err(n, format!("bad op `{o}`"))),
            };
            trace.records.push(TraceRecord {
                thread: f[1].parse().map_err(|_| err(n, format!("bad thread `{}`", f[1])))?,
                op,
                access_id: AccessId(f[3].parse().map_err(|_| err(n, format!("bad access id `{}`", f[3])))?),
                addr: f[4].parse().map_err(|m| err(n, m))?,
            });
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let text = "TRACE seed=7 policy=round-robin status=complete\n\
                    ACC 1 W 8 G:mask\n\
                    ACC 2 R 9 G:mask\n\
                    ACC 1 W 3 G:keys[4]\n\
                    ACC 0 R 1 G:cfg.size\n\
                    ACC 2 W 5 H:3:12.val\n";
        let t = Trace::parse(text).unwrap();
        assert_eq!(t.records.len(), 5);
        assert_eq!(t.to_text(), text);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Trace::parse("").is_err());
        assert!(Trace::parse("TRACE seed=1 policy=x\n").is_err());
        let e = Trace::parse("TRACE seed=1 policy=x status=complete\nACC 1 X 2 G:a\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!("H:1.x".parse::<Address>().is_err());
        assert!("G:a[b]".parse::<Address>().is_err());
    }
}
