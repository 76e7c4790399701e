// SPDX-License-Identifier: Apache-2.0

//! Pair reconstruction from traces, SMAP coverage, and feedback for
//! pairs that stay uncovered.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{TargetPair, TargetReport};
use crate::harnessgen::ManifestEntry;
use crate::minilang::AccessId;
use crate::pathfinder::Decision;
use crate::runtime::{Address, Trace, TraceRecord, TraceStatus};

/// Why a pair stayed uncovered. Variants are in priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncoveredReason {
    HarnessInvalid,
    AnchorUnreached,
    PartnerUnreached,
    SameThreadOnly,
    AddressMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveredPair {
    pub pair_id: u32,
    /// Anchor-side record, then partner-side record.
    pub witness: [TraceRecord; 2],
    pub trace_status: TraceStatus,
}

impl CoveredPair {
    /// Re-checks the witness against the pair's access ids.
    pub fn witnesses(&self, pair: &TargetPair) -> bool {
        let [a, b] = &self.witness;
        a.access_id == pair.first && b.access_id == pair.second && a.thread != b.thread && a.addr == b.addr
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncoveredPair {
    pub pair_id: u32,
    pub reason: UncoveredReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageStatus {
    Ok,
    NoTargets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: usize,
    pub covered: Vec<CoveredPair>,
    pub uncovered: Vec<UncoveredPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smap: Option<f64>,
    pub status: CoverageStatus,
}

impl CoverageReport {
    fn finish(total: usize, mut covered: Vec<CoveredPair>, mut uncovered: Vec<UncoveredPair>) -> CoverageReport {
        covered.sort_by_key(|c| c.pair_id);
        uncovered.sort_by_key(|u| u.pair_id);
        let (smap, status) = if total == 0 {
            (None, CoverageStatus::NoTargets)
        } else {
            (Some(covered.len() as f64 / total as f64), CoverageStatus::Ok)
        };
        CoverageReport {
            total,
            covered,
            uncovered,
            smap,
            status,
        }
    }

    pub fn covered_ids(&self) -> BTreeSet<u32> {
        self.covered.iter().map(|c| c.pair_id).collect()
    }

    pub fn is_covered(&self, pair_id: u32) -> bool {
        self.covered.iter().any(|c| c.pair_id == pair_id)
    }

    pub fn reason(&self, pair_id: u32) -> Option<UncoveredReason> {
        self.uncovered.iter().find(|u| u.pair_id == pair_id).map(|u| u.reason)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CoverageError {
    #[error("trace {trace}: record with unknown access {access}")]
    UnknownAccess { trace: usize, access: AccessId },
    #[error("cannot accumulate reports over {0} and {1} pairs")]
    TotalMismatch(usize, usize),
}

/// Earliest index per (address, role), plus the earliest index whose
/// thread differs from that first one.
#[derive(Clone, Copy, Default)]
struct Firsts {
    first: Option<(usize, usize)>,
    other: Option<(usize, usize)>,
}

impl Firsts {
    fn add(&mut self, idx: usize, thread: usize) {
        match self.first {
            None => self.first = Some((idx, thread)),
            Some((_, t)) if t != thread && self.other.is_none() => self.other = Some((idx, thread)),
            _ => {}
        }
    }

    /// Earliest index seen with a thread other than `thread`.
    fn not_thread(&self, thread: usize) -> Option<usize> {
        match self.first {
            Some((i, t)) if t != thread => Some(i),
            _ => self.other.map(|(i, _)| i),
        }
    }
}

/// First witness in `records` for the pair (anchor, partner): the
/// smallest later index, then the smallest earlier index.
fn find_witness(records: &[TraceRecord], anchor: AccessId, partner: AccessId) -> Option<[usize; 2]> {
    let mut seen: HashMap<&Address, [Firsts; 2]> = HashMap::new();
    for (j, r) in records.iter().enumerate() {
        let is_a = r.access_id == anchor;
        let is_p = r.access_id == partner;
        if !is_a && !is_p {
            continue;
        }
        let slot = seen.entry(&r.addr).or_default();
        let mut best: Option<[usize; 2]> = None;
        if is_p {
            if let Some(i) = slot[0].not_thread(r.thread) {
                best = Some([i, j]);
            }
        }
        if is_a {
            if let Some(i) = slot[1].not_thread(r.thread) {
                if best.is_none_or(|[bi, _]| i < bi) {
                    best = Some([j, i]);
                }
            }
        }
        if best.is_some() {
            return best;
        }
        if is_a {
            slot[0].add(j, r.thread);
        }
        if is_p {
            slot[1].add(j, r.thread);
        }
    }
    None
}

fn cross_thread(records: &[TraceRecord], anchor: AccessId, partner: AccessId) -> bool {
    let threads =
        |id: AccessId| -> BTreeSet<usize> { records.iter().filter(|r| r.access_id == id).map(|r| r.thread).collect() };
    let (ta, tp) = (threads(anchor), threads(partner));
    ta.iter().any(|a| tp.iter().any(|p| a != p))
}

/// Matches the target pairs of `report` against `traces`. Pairs in
/// `invalid` that stay uncovered get reason harness-invalid.
pub fn match_pairs(
    traces: &[Trace],
    report: &TargetReport,
    invalid: &BTreeSet<u32>,
) -> Result<CoverageReport, CoverageError> {
    for (t, trace) in traces.iter().enumerate() {
        if let Some(r) = trace
            .records
            .iter()
            .find(|r| r.access_id.0 == 0 || r.access_id.0 > report.access_count)
        {
            return Err(CoverageError::UnknownAccess {
                trace: t,
                access: r.access_id,
            });
        }
    }
    let mut covered = Vec::new();
    let mut uncovered = Vec::new();
    for pair in &report.pairs {
        let (a, p) = (pair.first, pair.second);
        let hit = traces.iter().find_map(|t| {
            find_witness(&t.records, a, p).map(|[i, j]| CoveredPair {
                pair_id: pair.pair_id,
                witness: [t.records[i].clone(), t.records[j].clone()],
                trace_status: t.status,
            })
        });
        if let Some(c) = hit {
            covered.push(c);
            continue;
        }
        let reached = |id: AccessId| traces.iter().any(|t| t.records.iter().any(|r| r.access_id == id));
        let reason = if invalid.contains(&pair.pair_id) {
            UncoveredReason::HarnessInvalid
        } else if !reached(a) {
            UncoveredReason::AnchorUnreached
        } else if !reached(p) {
            UncoveredReason::PartnerUnreached
        } else if traces.iter().any(|t| cross_thread(&t.records, a, p)) {
            UncoveredReason::AddressMismatch
        } else {
            UncoveredReason::SameThreadOnly
        };
        uncovered.push(UncoveredPair {
            pair_id: pair.pair_id,
            reason,
        });
    }
    Ok(CoverageReport::finish(report.pairs.len(), covered, uncovered))
}

/// Union of two reports over the same pairs. Witnesses come from the
/// earlier report; reasons for still-uncovered pairs from the later one.
pub fn accumulate(prev: &CoverageReport, next: &CoverageReport) -> Result<CoverageReport, CoverageError> {
    if prev.total != next.total {
        return Err(CoverageError::TotalMismatch(prev.total, next.total));
    }
    let mut covered: BTreeMap<u32, CoveredPair> = BTreeMap::new();
    for c in prev.covered.iter().chain(&next.covered) {
        covered.entry(c.pair_id).or_insert_with(|| c.clone());
    }
    let mut reasons: BTreeMap<u32, UncoveredReason> = BTreeMap::new();
    for u in prev.uncovered.iter().chain(&next.uncovered) {
        reasons.insert(u.pair_id, u.reason);
    }
    let uncovered = reasons
        .into_iter()
        .filter(|(id, _)| !covered.contains_key(id))
        .map(|(pair_id, reason)| UncoveredPair { pair_id, reason })
        .collect();
    Ok(CoverageReport::finish(
        prev.total,
        covered.into_values().collect(),
        uncovered,
    ))
}

/// A path that a harness took on one side and that failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedPath {
    pub target: AccessId,
    pub entry: String,
    pub decisions: Vec<Decision>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub pair_id: u32,
    /// Anchor access, then partner access.
    pub targets: Vec<AccessId>,
    pub reason: UncoveredReason,
    pub failed_paths: Vec<FailedPath>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub iteration: u32,
}

/// One record per pair attempted in iteration `iter` that `cr` leaves
/// uncovered. Anchor-unreached blames the anchor plan, the other
/// runtime reasons blame the partner plan.
pub fn make_feedback(cr: &CoverageReport, manifest: &[ManifestEntry], iter: u32) -> Vec<FeedbackRecord> {
    let mut out = Vec::new();
    for e in manifest.iter().filter(|e| e.iteration == iter) {
        let Some(reason) = cr.reason(e.pair_id) else {
            continue;
        };
        let targets = e.plans.iter().map(|p| p.target).collect();
        let (failed_paths, diagnostics) = match reason {
            UncoveredReason::HarnessInvalid => (Vec::new(), e.diagnostics.clone()),
            r => {
                let side = usize::from(r != UncoveredReason::AnchorUnreached);
                let failed = e
                    .plans
                    .get(side)
                    .and_then(|plan| {
                        plan.concrete_inputs.as_ref().map(|ci| FailedPath {
                            target: plan.target,
                            entry: ci.entry.clone(),
                            decisions: plan.decisions.clone(),
                        })
                    })
                    .into_iter()
                    .collect();
                (failed, Vec::new())
            }
        };
        out.push(FeedbackRecord {
            pair_id: e.pair_id,
            targets,
            reason,
            failed_paths,
            diagnostics,
            iteration: iter,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::MemOp;

    fn rec(thread: usize, op: MemOp, id: u32, addr: &str) -> TraceRecord {
        TraceRecord {
            thread,
            op,
            access_id: AccessId(id),
            addr: addr.parse().unwrap(),
        }
    }

    #[test]
    fn witness_prefers_earliest_completion() {
        let rs = vec![
            rec(1, MemOp::Write, 5, "G:m"),
            rec(1, MemOp::Read, 9, "G:m"),
            rec(2, MemOp::Write, 5, "G:m"),
            rec(2, MemOp::Read, 9, "G:m"),
        ];
        // j = 2 completes (9 at 1, 5 at 2) first.
        assert_eq!(find_witness(&rs, AccessId(5), AccessId(9)), Some([2, 1]));
        assert_eq!(find_witness(&rs, AccessId(5), AccessId(5)), Some([0, 2]));
        assert_eq!(find_witness(&rs[..2], AccessId(5), AccessId(9)), None);
    }

    #[test]
    fn reasons_are_prioritized() {
        let rs = vec![rec(1, MemOp::Write, 5, "H:1:1.v"), rec(2, MemOp::Read, 9, "H:1:2.v")];
        assert!(cross_thread(&rs, AccessId(5), AccessId(9)));
        assert!(!cross_thread(&rs[..1], AccessId(5), AccessId(9)));
        assert!(UncoveredReason::HarnessInvalid < UncoveredReason::AnchorUnreached);
        assert!(UncoveredReason::SameThreadOnly < UncoveredReason::AddressMismatch);
    }
}
