// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

pub mod checks;
pub mod pipeline;
pub mod reference;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use concov::minilang::{parse_program, Program};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixtures() -> PathBuf {
    crate_dir().join("tests").join("fixtures")
}

pub fn corpus_files() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(crate_dir().join("corpus"))
        .expect("corpus dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "mtc"))
        .collect();
    v.sort();
    v
}

pub fn corpus(name: &str) -> PathBuf {
    crate_dir().join("corpus").join(format!("{name}.mtc"))
}

pub fn load(path: &Path) -> Program {
    let src = std::fs::read_to_string(path).expect("readable program");
    parse_program(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Gen {
    rng: ChaCha8Rng,
    ints: Vec<String>,
    arrays: Vec<(String, usize)>,
    record: bool,
    funcs: usize,
}

impl Gen {
    fn int_global(&mut self) -> String {
        let i = self.rng.gen_range(0..self.ints.len());
        self.ints[i].clone()
    }

    fn read_expr(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 if !self.arrays.is_empty() => {
                let (a, n) = self.arrays[self.rng.gen_range(0..self.arrays.len())].clone();
                format!("{a}[{}]", self.rng.gen_range(0..n))
            }
            1 if self.record => "r.v".to_string(),
            2 => "k".to_string(),
            _ => self.int_global(),
        }
    }

    fn call_args(&self) -> &'static str {
        if self.record {
            "k, r"
        } else {
            "k"
        }
    }

    fn stmt(&mut self, f: usize, depth: u32, locked: bool, out: &mut String, ind: usize) {
        let pad = " ".repeat(ind);
        let pick = self.rng.gen_range(0..9);
        match pick {
            0 | 1 => {
                let g = self.int_global();
                let e = self.read_expr();
                writeln!(out, "{pad}{g} = {e} + 1;").unwrap();
            }
            2 => {
                let e = self.read_expr();
                writeln!(out, "{pad}t = {e};").unwrap();
            }
            3 if !self.arrays.is_empty() => {
                let (a, n) = self.arrays[self.rng.gen_range(0..self.arrays.len())].clone();
                let i = self.rng.gen_range(0..n);
                writeln!(out, "{pad}{a}[{i}] = k;").unwrap();
            }
            4 if self.record => writeln!(out, "{pad}r.v = r.v + k;").unwrap(),
            5 if depth < 2 && !locked => {
                writeln!(out, "{pad}lock m;").unwrap();
                for _ in 0..self.rng.gen_range(1..3) {
                    self.stmt(f, depth + 1, true, out, ind);
                }
                writeln!(out, "{pad}unlock m;").unwrap();
            }
            6 if depth < 2 => {
                let c = self.rng.gen_range(-3..4);
                let e = self.read_expr();
                writeln!(out, "{pad}if ({e} > {c}) {{").unwrap();
                self.stmt(f, depth + 1, locked, out, ind + 4);
                writeln!(out, "{pad}}} else {{").unwrap();
                self.stmt(f, depth + 1, locked, out, ind + 4);
                writeln!(out, "{pad}}}").unwrap();
            }
            7 if f + 1 < self.funcs => {
                let g = self.rng.gen_range(f + 1..self.funcs);
                let kw = if !locked && self.rng.gen_bool(0.5) {
                    "spawn "
                } else {
                    ""
                };
                writeln!(out, "{pad}{kw}f{g}({});", self.call_args()).unwrap();
            }
            _ => {
                let g = self.int_global();
                writeln!(out, "{pad}t = {g};").unwrap();
            }
        }
    }
}

/// A small random MTC program: scalar and array globals, an optional
/// record passed by reference, one mutex, and functions that only call or
/// spawn later functions, so every run terminates.
pub fn random_program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nints = rng.gen_range(1..4);
    let narrays = rng.gen_range(0..2);
    let record = rng.gen_bool(0.4);
    let funcs = rng.gen_range(1..5);
    let mut out = String::new();
    if record {
        out.push_str("record R { int v; }\n");
    }
    let mut ints = Vec::new();
    for i in 0..nints {
        let atomic = if rng.gen_bool(0.2) { "atomic " } else { "" };
        writeln!(out, "global {atomic}int g{i};").unwrap();
        ints.push(format!("g{i}"));
    }
    let mut arrays = Vec::new();
    for i in 0..narrays {
        let n = rng.gen_range(2..4);
        writeln!(out, "global int[{n}] a{i};").unwrap();
        arrays.push((format!("a{i}"), n));
    }
    out.push_str("global mutex m;\n");
    let mut g = Gen {
        rng,
        ints,
        arrays,
        record,
        funcs,
    };
    for f in 0..funcs {
        let params = if record { "k: int, r: ref R" } else { "k: int" };
        writeln!(out, "\nfn f{f}({params}) {{").unwrap();
        for _ in 0..g.rng.gen_range(1..6) {
            g.stmt(f, 0, false, &mut out, 4);
        }
        out.push_str("}\n");
    }
    out
}
