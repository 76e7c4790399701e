// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::RunResult;

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

/// Lays out `targets.json`, `plans/`, `harnesses/`, `traces/`,
/// `coverage_iter<i>.json` and `ledger.json` under `dir`.
pub fn write_run_dir(dir: &Path, run: &RunResult) -> io::Result<()> {
    for sub in ["plans", "harnesses", "traces"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let a = &run.artifacts;
    write_json(&dir.join("targets.json"), &a.report)?;
    for e in &a.manifest {
        let name = format!("{}_{}_{}.json", run.ledger.program, e.pair_id, e.iteration);
        write_json(&dir.join("plans").join(name), e)?;
    }
    write_json(&dir.join("harnesses").join("manifest.json"), &a.manifest)?;
    for h in &a.harnesses {
        fs::write(dir.join("harnesses").join(&h.file_name), &h.text)?;
    }
    for (file, t) in &a.traces {
        let stem = file.strip_suffix(".mtc").unwrap_or(file);
        let name = format!("{stem}_{}_{}.log", t.policy, t.seed);
        fs::write(dir.join("traces").join(name), t.to_text())?;
    }
    for it in &run.ledger.iterations {
        write_json(&dir.join(format!("coverage_iter{}.json", it.iteration)), &it.aggregate)?;
    }
    write_json(&dir.join("ledger.json"), &run.ledger)
}
