//! Program corpus on disk and the differential check of the parallel
//! engine against the sequential one.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use andante_core::reader::arg_to_string;
use andante_core::seq::{solve_seq, Limit};
use andante_core::{Program, QuerySpec, Term};

use crate::engine::{solve_par, EngineConfig};
use crate::run::load;
use crate::trace::{duplicate_combinations, priority_violations};

/// One `.pl` file. Queries come from `%% query: <goal>` lines.
#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub queries: Vec<String>,
}

pub fn queries_of(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| l.trim().strip_prefix("%% query:"))
        .map(|q| q.trim().trim_end_matches('.').to_string())
        .filter(|q| !q.is_empty())
        .collect()
}

pub fn load_dir(dir: &Path) -> std::io::Result<Vec<Entry>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let path = e?.path();
        if path.extension().is_some_and(|x| x == "pl") {
            let source = std::fs::read_to_string(&path)?;
            out.push(Entry {
                name: path.file_stem().unwrap().to_string_lossy().into_owned(),
                queries: queries_of(&source),
                path,
                source,
            });
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Answers as sorted printed tuples.
pub fn multiset(prog: &Program, answers: &[Vec<Term>]) -> Vec<String> {
    let mut v: Vec<String> = answers
        .iter()
        .map(|t| {
            t.iter()
                .map(|x| arg_to_string(&prog.syms, x))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    v.sort();
    v
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub program: String,
    pub query: String,
    pub recompute: bool,
    pub agents: usize,
    pub seed: u64,
    /// Empty when the sample passed.
    pub problems: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct DiffOptions {
    pub agents: Vec<usize>,
    pub seeds: Vec<u64>,
    pub recompute: bool,
    /// Microseconds per `pause/1` unit.
    pub pause_unit_us: u64,
    pub deadline: Duration,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            agents: vec![1, 2, 4, 8],
            seeds: (0..5).collect(),
            recompute: true,
            pause_unit_us: 20,
            deadline: Duration::from_secs(30),
        }
    }
}

/// Compares one query under one engine configuration with the sequential
/// oracle, and checks the trace invariants.
pub fn check(
    prog: &Arc<Program>,
    q: &QuerySpec,
    want: &[String],
    cfg: &EngineConfig,
) -> Vec<String> {
    let cfg = EngineConfig {
        trace: true,
        ..cfg.clone()
    };
    let out = solve_par(prog.clone(), q, None, &cfg);
    let mut problems = Vec::new();
    if let Some(e) = &out.error {
        problems.push(format!("error: {e}"));
    }
    if out.timed_out {
        problems.push("timed out".into());
    }
    let got = multiset(prog, &out.answers);
    if got != want {
        problems.push(format!(
            "answers differ: {} expected, {} found",
            want.len(),
            got.len()
        ));
    }
    let dups = duplicate_combinations(&out.trace);
    if !dups.is_empty() {
        problems.push(format!("{} duplicate combinations", dups.len()));
    }
    if cfg.priority {
        let v = priority_violations(&out.trace);
        if !v.is_empty() {
            problems.push(format!(
                "{} dispatches below the best available class",
                v.len()
            ));
        }
    }
    problems
}

pub fn differential(entries: &[Entry], opts: &DiffOptions) -> Vec<Sample> {
    let mut out = Vec::new();
    for e in entries {
        for qtext in &e.queries {
            let mut push = |recompute: bool, agents: usize, seed: u64, problems: Vec<String>| {
                out.push(Sample {
                    program: e.name.clone(),
                    query: qtext.clone(),
                    recompute,
                    agents,
                    seed,
                    problems,
                })
            };
            let (prog, q) = match load(&e.source, qtext) {
                Ok(x) => x,
                Err(err) => {
                    push(false, 0, 0, vec![format!("read error: {err}")]);
                    continue;
                }
            };
            let want = match solve_seq(prog.clone(), &q, Limit::all()) {
                Ok(o) => multiset(&prog, &o.answers),
                Err(f) => {
                    push(false, 0, 0, vec![format!("oracle error: {}", f.error)]);
                    continue;
                }
            };
            let modes: &[bool] = if opts.recompute {
                &[false, true]
            } else {
                &[false]
            };
            for &recompute in modes {
                for &agents in &opts.agents {
                    for &seed in &opts.seeds {
                        let cfg = EngineConfig {
                            agents,
                            seed,
                            recompute,
                            pause_unit_us: opts.pause_unit_us,
                            deadline: Some(opts.deadline),
                            ..EngineConfig::default()
                        };
                        push(recompute, agents, seed, check(&prog, &q, &want, &cfg));
                    }
                }
            }
        }
    }
    out
}

/// Where the bundled corpus lives in the source tree.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}
