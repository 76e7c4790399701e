// SPDX-License-Identifier: Apache-2.0

//! Enumeration of acyclic root→access paths, spliced along a call chain.

use std::collections::BTreeSet;

use super::{Decision, PathCandidate, PathStep, SearchLimits, Weights};
use crate::minilang::{AccessId, BlockId, CallGraph, EdgeKind, Function, Program};

/// Hard cap on raw paths explored per function segment, so a pathological
/// CFG cannot stall enumeration before sorting and truncation.
const SEGMENT_CAP: usize = 4096;

/// All paths from the entry of `f` to any block in `ends`, never following
/// back edges.
fn segment_paths(f: &Function, ends: &BTreeSet<BlockId>, max_len: usize) -> Vec<Vec<BlockId>> {
    let cfg = &f.cfg;
    let mut out = Vec::new();
    let mut path = vec![cfg.entry()];
    fn dfs(
        cfg: &crate::minilang::Cfg,
        ends: &BTreeSet<BlockId>,
        path: &mut Vec<BlockId>,
        out: &mut Vec<Vec<BlockId>>,
        max_len: usize,
    ) {
        if out.len() >= SEGMENT_CAP {
            return;
        }
        let cur = *path.last().expect("paths are non-empty");
        if ends.contains(&cur) {
            out.push(path.clone());
        }
        if path.len() >= max_len {
            return;
        }
        for s in cfg.block(cur).term.successors() {
            if cfg.is_back_edge(cur, s) {
                continue;
            }
            path.push(s);
            dfs(cfg, ends, path, out, max_len);
            path.pop();
        }
    }
    dfs(cfg, ends, &mut path, &mut out, max_len);
    out
}

fn decisions_of(f: &Function, blocks: &[BlockId]) -> Vec<Decision> {
    blocks
        .windows(2)
        .filter_map(|w| {
            let term = &f.cfg.block(w[0]).term;
            term.is_decision().then(|| Decision {
                function: f.name.clone(),
                block: w[0],
                polarity: term.edge(true) == Some(w[1]),
            })
        })
        .collect()
}

pub(crate) fn cost_of(p: &Program, steps: &[PathStep], decisions: &[Decision], w: &Weights) -> (u64, usize, usize) {
    let mut loops = 0;
    let mut branches = 0u64;
    for d in decisions {
        let f = p.function(&d.function).expect("decision functions exist");
        if f.cfg.block(d.block).is_loop_head() {
            loops += 1;
        } else {
            branches += 1;
        }
    }
    let externs: usize = steps
        .iter()
        .map(|s| {
            let f = p.function(&s.function).expect("path functions exist");
            f.cfg.block(s.block).extern_calls()
        })
        .sum();
    let cost = branches + w.w_loop * loops as u64 + w.w_env * externs as u64;
    (cost, loops, externs)
}

/// Candidates for `target` along `chain` (root first), sorted by cost and
/// then by the (function, block) sequence, truncated to the queue bound.
pub fn enumerate(
    p: &Program,
    cg: &CallGraph,
    chain: &[String],
    target: AccessId,
    weights: &Weights,
    limits: &SearchLimits,
) -> Vec<PathCandidate> {
    let site = p.access(target).expect("targets are program accesses");
    let mut partial: Vec<(Vec<PathStep>, Vec<Decision>)> = vec![(Vec::new(), Vec::new())];
    for (i, fname) in chain.iter().enumerate() {
        let f = p.function(fname).expect("chain functions exist");
        let ends: BTreeSet<BlockId> = match chain.get(i + 1) {
            Some(next) => cg
                .sites
                .iter()
                .filter(|s| {
                    s.caller == *fname && s.callee == *next && matches!(s.kind, EdgeKind::Call | EdgeKind::Spawn)
                })
                .map(|s| s.block)
                .collect(),
            None => BTreeSet::from([BlockId(site.block)]),
        };
        let used: usize = partial.iter().map(|(s, _)| s.len()).min().unwrap_or(0);
        let budget = limits.max_blocks.saturating_sub(used);
        let segs = segment_paths(f, &ends, budget);
        let mut next = Vec::new();
        for (steps, decs) in &partial {
            for seg in &segs {
                if steps.len() + seg.len() > limits.max_blocks {
                    continue;
                }
                let mut s = steps.clone();
                s.extend(seg.iter().map(|b| PathStep {
                    function: fname.clone(),
                    block: *b,
                }));
                let mut d = decs.clone();
                d.extend(decisions_of(f, seg));
                next.push((s, d));
                if next.len() >= SEGMENT_CAP {
                    break;
                }
            }
        }
        partial = next;
    }
    let mut out: Vec<PathCandidate> = partial
        .into_iter()
        .map(|(steps, decisions)| {
            let (cost, loops, externs) = cost_of(p, &steps, &decisions, weights);
            PathCandidate {
                target,
                root: chain[0].clone(),
                steps,
                decisions,
                cost,
                loops,
                externs,
            }
        })
        .collect();
    out.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    out.truncate(limits.max_candidates);
    out
}
