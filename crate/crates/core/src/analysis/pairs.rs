// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use super::{AccessPoint, ConflictKind, TargetPair, VarId};
use crate::minilang::{AccessId, MemOp};

/// Orders two accesses on one variable: a write goes first, two writes are
/// ordered by id. Returns `None` for read/read.
pub fn canonical_pair(a: (AccessId, MemOp), b: (AccessId, MemOp)) -> Option<(AccessId, AccessId, ConflictKind)> {
    match (a.1, b.1) {
        (MemOp::Read, MemOp::Read) => None,
        (MemOp::Write, MemOp::Write) => Some((a.0.min(b.0), a.0.max(b.0), ConflictKind::WW)),
        (MemOp::Write, MemOp::Read) => Some((a.0, b.0, ConflictKind::WR)),
        (MemOp::Read, MemOp::Write) => Some((b.0, a.0, ConflictKind::WR)),
    }
}

/// Expected number of pairs for `w` writes and `r` reads, self-pairs
/// included.
pub fn pair_count(w: usize, r: usize) -> usize {
    w * r + w * (w + 1) / 2
}

/// All conflicting pairs per variable, numbered from 1 after sorting by
/// (variable, first, second). An access pair reachable through several
/// variables is kept once, under the lowest variable. `entries` and
/// `chains` are left empty.
pub fn enumerate_pairs(aps: &[AccessPoint], self_pairs: bool) -> Vec<TargetPair> {
    let mut by_var: BTreeMap<VarId, BTreeSet<(AccessId, MemOp)>> = BTreeMap::new();
    for ap in aps {
        by_var.entry(ap.var_id).or_default().insert((ap.access_id, ap.op));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (var, accs) in &by_var {
        let accs: Vec<_> = accs.iter().copied().collect();
        let mut found = Vec::new();
        for i in 0..accs.len() {
            let start = if self_pairs { i } else { i + 1 };
            for j in start..accs.len() {
                if let Some(c) = canonical_pair(accs[i], accs[j]) {
                    found.push(c);
                }
            }
        }
        found.sort();
        for (first, second, kind) in found {
            if seen.insert((first, second)) {
                out.push(TargetPair {
                    pair_id: 0,
                    first,
                    second,
                    var_id: *var,
                    kind,
                    entries: Vec::new(),
                    chains: Vec::new(),
                });
            }
        }
    }
    for (i, p) in out.iter_mut().enumerate() {
        p.pair_id = i as u32 + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ap(id: u32, var: u32, op: MemOp) -> AccessPoint {
        AccessPoint {
            access_id: AccessId(id),
            var_id: VarId(var),
            op,
            function: "f".into(),
            line: 1,
        }
    }

    fn ids(pairs: &[TargetPair]) -> Vec<(u32, u32)> {
        pairs.iter().map(|p| (p.first.0, p.second.0)).collect()
    }

    #[test]
    fn write_read_pair() {
        let p = enumerate_pairs(&[ap(1, 1, MemOp::Write), ap(2, 1, MemOp::Read)], false);
        assert_eq!(ids(&p), vec![(1, 2)]);
        assert_eq!(p[0].kind, ConflictKind::WR);
    }

    #[test]
    fn reads_only_yield_nothing() {
        let p = enumerate_pairs(&[ap(1, 1, MemOp::Read), ap(2, 1, MemOp::Read)], true);
        assert!(p.is_empty());
    }

    #[test]
    fn read_before_write_is_reordered() {
        let p = enumerate_pairs(&[ap(3, 1, MemOp::Read), ap(7, 1, MemOp::Write)], false);
        assert_eq!(ids(&p), vec![(7, 3)]);
    }

    #[test]
    fn count_law_with_self_pairs() {
        let aps = [ap(1, 1, MemOp::Write), ap(2, 1, MemOp::Write), ap(3, 1, MemOp::Read)];
        let p = enumerate_pairs(&aps, true);
        assert_eq!(p.len(), pair_count(2, 1));
        assert_eq!(ids(&p), vec![(1, 1), (1, 2), (1, 3), (2, 2), (2, 3)]);
    }
}
