// SPDX-License-Identifier: Apache-2.0

//! Shared-variable identification, access points and conflicting target
//! pairs.

pub mod locations;
pub mod lockset;
mod pairs;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::minilang::{AccessId, CallGraph, MemOp, Program};
pub use locations::{Location, ObjId, PointsTo};
pub use pairs::{canonical_pair, enumerate_pairs, pair_count};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShareReason {
    RootRefParam,
    LockProtected,
    SpawnArgument,
    /// Only with `globals_shared`: a global written by reachable code.
    WrittenGlobal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedVariable {
    pub id: VarId,
    pub location: String,
    pub reason: ShareReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub access_id: AccessId,
    pub var_id: VarId,
    pub op: MemOp,
    pub function: String,
    pub line: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    WW,
    WR,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPair {
    pub pair_id: u32,
    pub first: AccessId,
    pub second: AccessId,
    pub var_id: VarId,
    pub kind: ConflictKind,
    pub entries: Vec<String>,
    pub chains: Vec<Vec<String>>,
}

impl TargetPair {
    pub fn is_self_pair(&self) -> bool {
        self.first == self.second
    }

    /// Root→function chain recorded for one side of the pair.
    pub fn chain_for(&self, access: AccessId) -> Option<&Vec<String>> {
        if self.first == access {
            self.chains.first()
        } else if self.second == access {
            self.chains.get(1)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnreachableAccess {
    pub access_id: AccessId,
    pub var_id: VarId,
    pub function: String,
    pub line: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    NoTargets,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetReport {
    /// Number of static accesses in the program; ids run from 1.
    pub access_count: u32,
    pub roots: Vec<String>,
    pub shared_variables: Vec<SharedVariable>,
    pub access_points: Vec<AccessPoint>,
    pub pairs: Vec<TargetPair>,
    pub unreachable: Vec<UnreachableAccess>,
    pub status: ReportStatus,
}

impl TargetReport {
    pub fn pair(&self, id: u32) -> Option<&TargetPair> {
        self.pairs.iter().find(|p| p.pair_id == id)
    }

    pub fn access_point(&self, id: AccessId) -> Option<&AccessPoint> {
        self.access_points.iter().find(|a| a.access_id == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub self_pairs: bool,
    pub globals_shared: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            self_pairs: true,
            globals_shared: false,
        }
    }
}

/// Locations touched by every access site, in access-id order.
pub struct AccessMap {
    pub by_access: BTreeMap<AccessId, Vec<Location>>,
}

impl AccessMap {
    pub fn build(p: &Program, pts: &PointsTo) -> AccessMap {
        let collapsed = locations::collapsed_arrays(p);
        let mut by_access = BTreeMap::new();
        for f in &p.functions {
            for b in &f.cfg.blocks {
                let mut add = |a: &crate::minilang::Access| {
                    by_access.insert(a.id, locations::access_locations(&f.name, &a.place, pts, &collapsed));
                };
                for s in &b.stmts {
                    s.accesses().into_iter().for_each(&mut add);
                }
                match &b.term {
                    crate::minilang::Terminator::Branch { cond, .. } => cond.accesses().into_iter().for_each(&mut add),
                    crate::minilang::Terminator::Return { value: Some(v), .. } => {
                        v.accesses().into_iter().for_each(&mut add)
                    }
                    _ => {}
                }
            }
        }
        AccessMap { by_access }
    }
}

/// Shared locations with their reasons, numbered by first touching access.
pub fn find_shared_variables(p: &Program, cg: &CallGraph, opts: &AnalysisOptions) -> Vec<(SharedVariable, Location)> {
    let pts = PointsTo::build(p, cg);
    let amap = AccessMap::build(p, &pts);
    shared_from(p, cg, &pts, &amap, opts)
}

fn shared_from(
    p: &Program,
    cg: &CallGraph,
    pts: &PointsTo,
    amap: &AccessMap,
    opts: &AnalysisOptions,
) -> Vec<(SharedVariable, Location)> {
    let reachable = cg.reachable();
    let locks = lockset::compute(p, cg);
    let roots: BTreeSet<&str> = cg.roots.iter().map(String::as_str).collect();
    let mut spawn_objs = BTreeSet::new();
    for f in &reachable {
        spawn_objs.extend(pts.spawn_objects(p, f));
    }

    let mut reasons: BTreeMap<Location, BTreeSet<ShareReason>> = BTreeMap::new();
    let mut first_seen: BTreeMap<Location, AccessId> = BTreeMap::new();
    for (id, locs) in &amap.by_access {
        let site = p.access(*id).expect("access map ids come from the program");
        let live = reachable.contains(&site.function);
        for loc in locs {
            first_seen.entry(loc.clone()).or_insert(*id);
            let entry = reasons.entry(loc.clone()).or_default();
            if let Location::Field(ObjId::Param { function, .. }, _) = loc {
                if roots.contains(function.as_str()) {
                    entry.insert(ShareReason::RootRefParam);
                }
            }
            if live && locks.at_access.get(id).is_some_and(|h| !h.is_empty()) {
                entry.insert(ShareReason::LockProtected);
            }
            if let Location::Field(o, _) = loc {
                if spawn_objs.contains(o) {
                    entry.insert(ShareReason::SpawnArgument);
                }
            }
            if opts.globals_shared && live && site.kind.is_write() && loc.is_global() {
                entry.insert(ShareReason::WrittenGlobal);
            }
        }
    }
    let mut shared: Vec<(AccessId, Location, ShareReason)> = reasons
        .into_iter()
        .filter_map(|(loc, rs)| {
            let r = *rs.iter().next()?;
            Some((first_seen[&loc], loc, r))
        })
        .collect();
    shared.sort();
    shared
        .into_iter()
        .enumerate()
        .map(|(i, (_, loc, reason))| {
            (
                SharedVariable {
                    id: VarId(i as u32 + 1),
                    location: loc.to_string(),
                    reason,
                },
                loc,
            )
        })
        .collect()
}

/// Access points on shared locations. Accesses in functions unreachable
/// from every root are returned separately.
pub fn collect_access_points(
    p: &Program,
    cg: &CallGraph,
    amap: &AccessMap,
    shared: &[(SharedVariable, Location)],
) -> (Vec<AccessPoint>, Vec<UnreachableAccess>) {
    let reachable = cg.reachable();
    let by_loc: BTreeMap<&Location, VarId> = shared.iter().map(|(v, l)| (l, v.id)).collect();
    let mut aps = Vec::new();
    let mut dead = Vec::new();
    for (id, locs) in &amap.by_access {
        let site = p.access(*id).expect("access map ids come from the program");
        let mut vars: Vec<VarId> = locs.iter().filter_map(|l| by_loc.get(l).copied()).collect();
        vars.sort();
        vars.dedup();
        for var_id in vars {
            if reachable.contains(&site.function) {
                aps.push(AccessPoint {
                    access_id: *id,
                    var_id,
                    op: site.kind.op(),
                    function: site.function.clone(),
                    line: site.pos.line,
                });
            } else {
                dead.push(UnreachableAccess {
                    access_id: *id,
                    var_id,
                    function: site.function.clone(),
                    line: site.pos.line,
                });
            }
        }
    }
    (aps, dead)
}

/// Full Phase I: shared variables, access points, pairs and call chains.
pub fn analyze(p: &Program, opts: &AnalysisOptions) -> TargetReport {
    let cg = CallGraph::build(p);
    let pts = PointsTo::build(p, &cg);
    let amap = AccessMap::build(p, &pts);
    let shared = shared_from(p, &cg, &pts, &amap, opts);
    let (aps, unreachable) = collect_access_points(p, &cg, &amap, &shared);
    let mut pairs = enumerate_pairs(&aps, opts.self_pairs);
    let function_of: BTreeMap<AccessId, &str> = aps.iter().map(|a| (a.access_id, a.function.as_str())).collect();
    for pair in &mut pairs {
        for side in [pair.first, pair.second] {
            let f = function_of[&side];
            let chain = cg
                .chains_to(f)
                .into_iter()
                .next()
                .expect("reachable functions have a root chain");
            pair.entries.push(chain[0].clone());
            pair.chains.push(chain);
        }
    }
    let status = if pairs.is_empty() {
        ReportStatus::NoTargets
    } else {
        ReportStatus::Ok
    };
    TargetReport {
        access_count: p.access_sites.len() as u32,
        roots: cg.roots.clone(),
        shared_variables: shared.into_iter().map(|(v, _)| v).collect(),
        access_points: aps,
        pairs,
        unreachable,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse_program;

    fn report(src: &str) -> TargetReport {
        analyze(&parse_program(src).unwrap(), &AnalysisOptions::default())
    }

    #[test]
    fn nothing_shared_for_local_only_root() {
        let r = report("fn f(x: int) { y = x + 1; }");
        assert!(r.shared_variables.is_empty());
        assert_eq!(r.status, ReportStatus::NoTargets);
    }

    #[test]
    fn root_ref_param_fields() {
        let r = report("record Node { int val; }\nfn g(r: ref Node) { r.val = r.val + 1; }");
        assert_eq!(r.shared_variables.len(), 1);
        assert_eq!(r.shared_variables[0].location, "g:r.val");
        assert_eq!(r.shared_variables[0].reason, ShareReason::RootRefParam);
        // One write, one read: (W,R) plus the write self-pair.
        assert_eq!(r.pairs.len(), 2);
    }

    #[test]
    fn spawn_argument_objects() {
        let r = report(
            "record Box { int v; }\nfn start() { b = new Box; spawn work(b); spawn work(b); }\nfn work(x: ref Box) { x.v = 1; }",
        );
        assert_eq!(r.roots, vec!["start"]);
        assert_eq!(r.shared_variables[0].reason, ShareReason::SpawnArgument);
        assert_eq!(r.shared_variables[0].location, "new#1.v");
        assert_eq!(r.pairs[0].chains[0], vec!["start", "work"]);
    }

    #[test]
    fn globals_flag_adds_written_globals() {
        let src = "global int g;\nfn f() { g = 1; }";
        assert!(report(src).shared_variables.is_empty());
        let p = parse_program(src).unwrap();
        let r = analyze(
            &p,
            &AnalysisOptions {
                globals_shared: true,
                ..Default::default()
            },
        );
        assert_eq!(r.shared_variables[0].reason, ShareReason::WrittenGlobal);
    }

    #[test]
    fn dead_functions_listed_unreachable() {
        let r = report(
            "global mutex m;\nglobal int g;\nfn live() { lock m; g = g + 1; unlock m; }\nfn ping() { g = 2; pong(); }\nfn pong() { ping(); }",
        );
        assert_eq!(r.roots, vec!["live"]);
        assert_eq!(r.unreachable.len(), 1);
        assert_eq!(r.unreachable[0].function, "ping");
        assert!(r.pairs.iter().all(|p| p.first.0 <= 2 && p.second.0 <= 2));
    }
}
