// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use concov::analysis::{analyze, AnalysisOptions, TargetReport};
use concov::coverage::match_pairs;
use concov::minilang::{parse_harness, program_text, CallGraph};
use concov::orchestrator::{
    default_registry, generate, load_program, program_name, run_oracle, run_program, write_run_dir, OracleConfig,
    RunConfig,
};
use concov::pathfinder::{search_plan, SearchState};
use concov::reasoner::{Preconditions, SolveContext};
use concov::runtime::{builtin_policies, Executable, Trace};

#[derive(Parser)]
#[command(
    name = "concov",
    version,
    about = "Coverage-guided concurrent test generation for MTC programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Refinement budget.
    #[arg(long, default_value_t = 3)]
    refine_budget: u32,
    /// Reasoner backend: deterministic or llm.
    #[arg(long, default_value = "deterministic")]
    reasoner: String,
    /// First schedule seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Schedules per harness.
    #[arg(long, default_value_t = 4)]
    schedules: u64,
    /// Integer domain bound.
    #[arg(long, default_value_t = 8)]
    domain_bound: i64,
    #[arg(long)]
    no_self_pairs: bool,
    #[arg(long)]
    globals_shared: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> RunConfig {
        let mut cfg = RunConfig::default().with_seeds(self.seed, self.schedules);
        cfg.refine_budget = self.refine_budget;
        cfg.reasoner = self.reasoner.clone();
        cfg.deterministic.bound = self.domain_bound;
        cfg.analysis = AnalysisOptions {
            self_pairs: !self.no_self_pairs,
            globals_shared: self.globals_shared,
        };
        cfg
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a program and print it in normal form.
    Parse { file: PathBuf },
    /// Print the target report.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deduce one plan per target access.
    Plan {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize first-iteration harnesses.
    Gen {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Execute a harness and print its traces.
    Run {
        file: PathBuf,
        #[arg(long)]
        harness: PathBuf,
        #[arg(long, default_value = "seeded-random")]
        policy: String,
        #[command(flatten)]
        common: Common,
    },
    /// Match traces against a target report.
    Cover {
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Run the full refinement loop.
    Loop {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate reachable pairs exhaustively.
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        domain_bound: i64,
        #[arg(long, default_value_t = 2)]
        preemptions: u32,
        #[arg(long)]
        no_self_pairs: bool,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn unknown_reasoner(name: &str) -> String {
    if name == "llm" {
        "reasoner `llm` needs CONCOV_LLM_URL to be set".to_string()
    } else {
        format!("unknown reasoner `{name}`")
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn emit(out: &Option<PathBuf>, name: &str, text: &str) -> Result<(), String> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            std::fs::write(dir.join(name), format!("{text}\n")).map_err(|e| e.to_string())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), String> {
    match cmd {
        Cmd::Parse { file } => {
            let p = load_program(&file).map_err(|e| e.to_string())?;
            print!("{}", program_text(&p));
        }
        Cmd::Analyze { file, common } => {
            let p = load_program(&file).map_err(|e| e.to_string())?;
            let report = analyze(&p, &common.config().analysis);
            emit(&common.out, "targets.json", &json(&report))?;
        }
        Cmd::Plan { file, common } => {
            let cfg = common.config();
            let p = load_program(&file).map_err(|e| e.to_string())?;
            let reg = default_registry(&cfg);
            let backend = reg.get(&cfg.reasoner).ok_or_else(|| unknown_reasoner(&cfg.reasoner))?;
            let report = analyze(&p, &cfg.analysis);
            let cg = CallGraph::build(&p);
            let ctx = SolveContext::new(&p, cfg.limits);
            let targets: BTreeSet<_> = report.pairs.iter().flat_map(|x| [x.first, x.second]).collect();
            let mut plans = Vec::new();
            for t in targets {
                let Ok(mut state) = SearchState::new(&p, &cg, &report, t, cfg.weights, cfg.search) else {
                    continue;
                };
                let d = search_plan(
                    &mut state,
                    &p,
                    backend.as_ref(),
                    &ctx,
                    &Preconditions::default(),
                    cfg.max_attempts,
                )
                .map_err(|e| e.to_string())?;
                plans.push(d.plan);
            }
            emit(&common.out, "plans.json", &json(&plans))?;
        }
        Cmd::Gen { file, common } => {
            let cfg = common.config();
            let p = load_program(&file).map_err(|e| e.to_string())?;
            let reg = default_registry(&cfg);
            let backend = reg.get(&cfg.reasoner).ok_or_else(|| unknown_reasoner(&cfg.reasoner))?;
            let (manifest, harnesses) = generate(&p, &program_name(&file), &cfg, backend.as_ref());
            match &common.out {
                Some(dir) => {
                    let hdir = dir.join("harnesses");
                    std::fs::create_dir_all(&hdir).map_err(|e| e.to_string())?;
                    for h in &harnesses {
                        std::fs::write(hdir.join(&h.file_name), &h.text).map_err(|e| e.to_string())?;
                    }
                    std::fs::write(hdir.join("manifest.json"), json(&manifest)).map_err(|e| e.to_string())?;
                }
                None => {
                    for h in &harnesses {
                        println!("// {}\n{}", h.file_name, h.text);
                    }
                }
            }
        }
        Cmd::Run {
            file,
            harness,
            policy,
            common,
        } => {
            let p = load_program(&file).map_err(|e| e.to_string())?;
            let h = parse_harness(&read(&harness)?, &p).map_err(|e| e.to_string())?;
            let policies = builtin_policies();
            let pol = policies
                .get(&policy)
                .ok_or(format!("unknown schedule policy `{policy}`"))?;
            let exe = Executable::new(&p, &h, common.config().limits);
            let stem = program_name(&harness);
            for seed in common.seed..common.seed + common.schedules {
                let t = exe.run(pol.as_ref(), seed);
                emit(
                    &common.out,
                    &format!("{stem}_{policy}_{seed}.log"),
                    t.to_text().trim_end(),
                )?;
            }
        }
        Cmd::Cover { traces, targets } => {
            let report: TargetReport =
                serde_json::from_str(&read(&targets)?).map_err(|e| format!("{}: {e}", targets.display()))?;
            let mut ts = Vec::new();
            for path in &traces {
                ts.push(Trace::parse(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?);
            }
            let cr = match_pairs(&ts, &report, &BTreeSet::new()).map_err(|e| e.to_string())?;
            println!("{}", json(&cr));
        }
        Cmd::Loop { file, common } => {
            let cfg = common.config();
            let p = load_program(&file).map_err(|e| e.to_string())?;
            let reg = default_registry(&cfg);
            let backend = reg.get(&cfg.reasoner).ok_or_else(|| unknown_reasoner(&cfg.reasoner))?;
            let res = run_program(&p, &program_name(&file), &cfg, backend.as_ref()).map_err(|e| e.to_string())?;
            let dir = common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("run_{}", res.ledger.program)));
            write_run_dir(&dir, &res).map_err(|e| e.to_string())?;
            let a = &res.ledger.aggregate;
            println!(
                "{}: {}/{} pairs covered in {} iteration(s), stop: {}, run dir {}",
                res.ledger.program,
                a.covered.len(),
                a.total,
                res.ledger.iterations.len(),
                serde_json::to_value(res.ledger.stop)
                    .expect("serializable")
                    .as_str()
                    .unwrap_or(""),
                dir.display()
            );
        }
        Cmd::Oracle {
            file,
            domain_bound,
            preemptions,
            no_self_pairs,
        } => {
            let p = load_program(&file).map_err(|e| e.to_string())?;
            let opts = AnalysisOptions {
                self_pairs: !no_self_pairs,
                ..AnalysisOptions::default()
            };
            let report = analyze(&p, &opts);
            let cfg = OracleConfig {
                bound: domain_bound,
                preemptions,
                ..OracleConfig::default()
            };
            let set = run_oracle(&p, &report, &cfg).map_err(|e| e.to_string())?;
            println!("{}", json(&set));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
