// SPDX-License-Identifier: Apache-2.0

//! Slow, obviously-correct reference implementations used as oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use concov::analysis::{AccessPoint, ConflictKind, TargetReport, VarId};
use concov::coverage::{CoverageReport, CoverageStatus, CoveredPair, UncoveredPair, UncoveredReason};
use concov::minilang::MemOp;
use concov::runtime::Trace;

/// (pair_id, first, second, var, kind)
pub type PairRow = (u32, u32, u32, u32, ConflictKind);

/// Every ordered pair of access points, kept when both sit on the same
/// variable, one of them writes, and the order is write-first (lower id
/// first for two writes).
pub fn brute_pairs(aps: &[AccessPoint], self_pairs: bool) -> Vec<PairRow> {
    let mut rows: Vec<(u32, u32, u32, ConflictKind)> = Vec::new();
    for x in aps {
        for y in aps {
            if x.var_id != y.var_id || (!self_pairs && x.access_id == y.access_id) {
                continue;
            }
            let kind = match (x.op, y.op) {
                (MemOp::Write, MemOp::Write) if x.access_id.0 <= y.access_id.0 => ConflictKind::WW,
                (MemOp::Write, MemOp::Read) => ConflictKind::WR,
                _ => continue,
            };
            let row = (x.var_id.0, x.access_id.0, y.access_id.0, kind);
            if !rows.contains(&row) {
                rows.push(row);
            }
        }
    }
    rows.sort();
    let mut seen = BTreeSet::new();
    rows.retain(|r| seen.insert((r.1, r.2)));
    rows.iter()
        .enumerate()
        .map(|(i, r)| (i as u32 + 1, r.1, r.2, r.0, r.3))
        .collect()
}

/// Writes and reads per variable, counting distinct access ids.
pub fn op_counts(aps: &[AccessPoint]) -> BTreeMap<VarId, (usize, usize)> {
    let mut seen = BTreeSet::new();
    let mut out: BTreeMap<VarId, (usize, usize)> = BTreeMap::new();
    for ap in aps {
        if !seen.insert((ap.var_id, ap.access_id)) {
            continue;
        }
        let e = out.entry(ap.var_id).or_default();
        match ap.op {
            MemOp::Write => e.0 += 1,
            MemOp::Read => e.1 += 1,
        }
    }
    out
}

/// Coverage computed by scanning all record pairs (i < j) in each trace.
pub fn coverage_oracle(traces: &[Trace], report: &TargetReport, invalid: &BTreeSet<u32>) -> CoverageReport {
    let mut covered = Vec::new();
    let mut uncovered = Vec::new();
    for pair in &report.pairs {
        let (a, p) = (pair.first, pair.second);
        let mut hit = None;
        'traces: for t in traces {
            let rs = &t.records;
            for j in 0..rs.len() {
                for i in 0..j {
                    let (x, y) = (&rs[i], &rs[j]);
                    if x.thread == y.thread || x.addr != y.addr {
                        continue;
                    }
                    let w = if x.access_id == a && y.access_id == p {
                        [x.clone(), y.clone()]
                    } else if x.access_id == p && y.access_id == a {
                        [y.clone(), x.clone()]
                    } else {
                        continue;
                    };
                    hit = Some(CoveredPair {
                        pair_id: pair.pair_id,
                        witness: w,
                        trace_status: t.status,
                    });
                    break 'traces;
                }
            }
        }
        if let Some(c) = hit {
            covered.push(c);
            continue;
        }
        let all = || traces.iter().flat_map(|t| t.records.iter());
        let reached_a = all().any(|r| r.access_id == a);
        let reached_p = all().any(|r| r.access_id == p);
        let cross = traces.iter().any(|t| {
            t.records.iter().any(|x| {
                t.records
                    .iter()
                    .any(|y| x.access_id == a && y.access_id == p && x.thread != y.thread)
            })
        });
        let reason = if invalid.contains(&pair.pair_id) {
            UncoveredReason::HarnessInvalid
        } else if !reached_a {
            UncoveredReason::AnchorUnreached
        } else if !reached_p {
            UncoveredReason::PartnerUnreached
        } else if cross {
            UncoveredReason::AddressMismatch
        } else {
            UncoveredReason::SameThreadOnly
        };
        uncovered.push(UncoveredPair {
            pair_id: pair.pair_id,
            reason,
        });
    }
    let total = report.pairs.len();
    CoverageReport {
        total,
        smap: (total > 0).then(|| covered.len() as f64 / total as f64),
        status: if total == 0 {
            CoverageStatus::NoTargets
        } else {
            CoverageStatus::Ok
        },
        covered,
        uncovered,
    }
}

pub struct CoverageCase {
    pub name: String,
    pub traces: Vec<Trace>,
    pub invalid: BTreeSet<u32>,
    pub golden: std::path::PathBuf,
}

pub fn coverage_cases(dir: &Path) -> Vec<CoverageCase> {
    let mut names: Vec<_> = std::fs::read_dir(dir.join("cases"))
        .expect("cases dir")
        .map(|e| e.expect("dir entry").path())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|case| {
            let mut logs: Vec<_> = std::fs::read_dir(&case)
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.extension().is_some_and(|x| x == "log"))
                .collect();
            logs.sort();
            let traces = logs
                .iter()
                .map(|l| Trace::parse(&std::fs::read_to_string(l).unwrap()).unwrap())
                .collect();
            let invalid = std::fs::read_to_string(case.join("invalid"))
                .map(|s| s.split_whitespace().map(|w| w.parse().unwrap()).collect())
                .unwrap_or_default();
            CoverageCase {
                name: case.file_name().unwrap().to_string_lossy().into_owned(),
                traces,
                invalid,
                golden: case.join("expected.json"),
            }
        })
        .collect()
}

pub fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s
}
