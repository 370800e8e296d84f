//! Running one query in a chosen mode and reporting what happened.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use andante_core::reader::{arg_to_string, parse_program, parse_query, ReadError};
use andante_core::seq::{query_cells, Hooks, Machine, Outcome, PauseResult};
use andante_core::{EngineError, Program, QuerySpec, Term};

use crate::engine::{solve_par, EngineConfig, Injection, ScheduleHook};
use crate::trace::TraceEvent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Seq,
    Parback,
    Recompute,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Seq => "seq",
            Mode::Parback => "parback",
            Mode::Recompute => "recompute",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answers {
    First,
    All,
    Count(usize),
}

impl Answers {
    pub fn limit(self) -> Option<usize> {
        match self {
            Answers::First => Some(1),
            Answers::All => None,
            Answers::Count(k) => Some(k),
        }
    }
}

impl FromStr for Answers {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" => Ok(Answers::First),
            "all" => Ok(Answers::All),
            _ => s
                .parse::<usize>()
                .map(Answers::Count)
                .map_err(|_| format!("expected first, all or a count, got {s:?}")),
        }
    }
}

#[derive(Clone)]
pub struct RunConfig {
    pub query: String,
    pub mode: Mode,
    pub agents: usize,
    pub answers: Answers,
    pub det_opt: bool,
    pub speculative: bool,
    pub ghost_retention: bool,
    pub priority: bool,
    pub debug_independence: bool,
    pub trace: bool,
    pub seed: u64,
    /// Milliseconds of wall time per unit of `pause/1`.
    pub time_scale: f64,
    pub step_budget: Option<u64>,
    pub deadline: Option<Duration>,
    pub inject: Option<Injection>,
    pub hook: Option<Arc<dyn ScheduleHook>>,
}

impl RunConfig {
    pub fn new(query: &str) -> Self {
        RunConfig {
            query: query.to_string(),
            mode: Mode::Parback,
            agents: 1,
            answers: Answers::All,
            det_opt: true,
            speculative: true,
            ghost_retention: false,
            priority: true,
            debug_independence: false,
            trace: false,
            seed: 0,
            time_scale: 1.0,
            step_budget: None,
            deadline: None,
            inject: None,
            hook: None,
        }
    }

    pub fn pause_unit_us(&self) -> u64 {
        (self.time_scale * 1000.0).round().max(0.0) as u64
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            agents: self.agents.max(1),
            recompute: self.mode == Mode::Recompute,
            det_opt: self.det_opt,
            speculative: self.speculative,
            ghost_retention: self.ghost_retention,
            priority: self.priority,
            debug_independence: self.debug_independence,
            seed: self.seed,
            pause_unit_us: self.pause_unit_us(),
            trace: self.trace,
            inject: self.inject,
            hook: self.hook.clone(),
            step_budget: self.step_budget,
            deadline: self.deadline,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub agents: usize,
    /// One line of `Name = value` bindings per answer.
    pub answers: Vec<String>,
    pub wall_ms: f64,
    pub first_answer_ms: Option<f64>,
    pub busy_ms: Vec<f64>,
    pub steps: u64,
    pub memo_stored: u64,
    pub memo_bytes: u64,
    pub reinstalls: u64,
    pub transfers: u64,
    pub relocations: u64,
    pub suspensions: u64,
    pub combinations: u64,
    pub forks: u64,
    pub timed_out: bool,
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Read(ReadError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

// ReadError comes from the no_std core and has no std::error::Error impl,
// so it cannot be a thiserror source.
impl From<ReadError> for RunError {
    fn from(e: ReadError) -> Self {
        RunError::Read(e)
    }
}

/// Everything a run produced: the report plus the raw answers and trace.
pub struct RunOutcome {
    pub report: RunReport,
    pub answers: Vec<Vec<Term>>,
    pub trace: Vec<TraceEvent>,
    pub engine_error: Option<EngineError>,
}

pub fn load(src: &str, query: &str) -> Result<(Arc<Program>, QuerySpec), ReadError> {
    let mut p = parse_program(src)?;
    let q = parse_query(&mut p, query)?;
    Ok((Arc::new(p), q))
}

/// Prints an answer tuple as `X = v, Y = w`; `true` when the query has no
/// named variables.
pub fn show_answer(prog: &Program, q: &QuerySpec, t: &[Term]) -> String {
    if q.vars.is_empty() {
        return "true".to_string();
    }
    q.vars
        .iter()
        .zip(t)
        .map(|((n, _), v)| format!("{n} = {}", arg_to_string(&prog.syms, v)))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn run_source(src: &str, cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let (prog, q) = load(src, &cfg.query)?;
    Ok(run_loaded(prog, &q, cfg))
}

pub fn run_loaded(prog: Arc<Program>, q: &QuerySpec, cfg: &RunConfig) -> RunOutcome {
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let mut report = RunReport {
        mode: cfg.mode.to_string(),
        agents: if cfg.mode == Mode::Seq {
            1
        } else {
            cfg.agents.max(1)
        },
        ..RunReport::default()
    };
    let (answers, trace, err) = match cfg.mode {
        Mode::Seq => {
            let out = solve_timed(prog.clone(), q, cfg);
            report.wall_ms = ms(out.wall);
            report.first_answer_ms = out.times.first().map(|d| ms(*d));
            report.busy_ms = vec![report.wall_ms];
            report.steps = out.steps;
            report.timed_out = out.timed_out;
            (out.answers, Vec::new(), out.error)
        }
        Mode::Parback | Mode::Recompute => {
            let out = solve_par(prog.clone(), q, cfg.answers.limit(), &cfg.engine());
            let s = &out.stats;
            report.wall_ms = ms(out.wall);
            report.first_answer_ms = out.answer_times.first().map(|d| ms(*d));
            report.busy_ms = s.busy.iter().map(|d| ms(*d)).collect();
            report.steps = s.steps;
            report.memo_stored = s.memo_stored;
            report.memo_bytes = s.memo_bytes;
            report.reinstalls = s.reinstalls;
            report.transfers = s.transfers;
            report.relocations = s.relocations;
            report.suspensions = s.suspensions;
            report.combinations = s.combinations;
            report.forks = s.forks;
            report.timed_out = out.timed_out;
            (out.answers, out.trace, out.error)
        }
    };
    report.answers = answers.iter().map(|t| show_answer(&prog, q, t)).collect();
    report.error = err.as_ref().map(|e| e.to_string());
    RunOutcome {
        report,
        answers,
        trace,
        engine_error: err,
    }
}

/// Sequential execution where `pause/1` really sleeps.
struct SleepHost {
    deadline: Option<Instant>,
}

impl Hooks<(), ()> for SleepHost {
    fn attention(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn attend(
        &mut self,
        _m: &mut Machine<(), ()>,
        _resume: andante_core::seq::Cont<()>,
    ) -> Result<Option<andante_core::seq::Flow>, EngineError> {
        Ok(Some(andante_core::seq::Flow::Halt))
    }

    fn pause(&mut self, _m: &mut Machine<(), ()>, us: u64) -> Result<PauseResult, EngineError> {
        std::thread::sleep(Duration::from_micros(us));
        Ok(PauseResult::Done)
    }
}

pub struct SeqTimed {
    pub answers: Vec<Vec<Term>>,
    pub times: Vec<Duration>,
    pub wall: Duration,
    pub steps: u64,
    pub timed_out: bool,
    pub error: Option<EngineError>,
}

/// The sequential engine with wall-clock pauses, on a thread with a large
/// stack.
pub fn solve_timed(prog: Arc<Program>, q: &QuerySpec, cfg: &RunConfig) -> SeqTimed {
    let limit = cfg.answers.limit();
    let unit = cfg.pause_unit_us();
    let budget = cfg.step_budget;
    let deadline = cfg.deadline;
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(crate::engine::AGENT_STACK)
            .spawn_scoped(s, move || {
                let t0 = Instant::now();
                let mut m: Machine<(), ()> = Machine::new(prog, 0);
                m.pause_unit_us = unit;
                m.budget = budget;
                let mut host = SleepHost {
                    deadline: deadline.map(|d| t0 + d),
                };
                let base = m.start(q.root, q.nvars);
                let cells = query_cells(&m, q, base);
                let mut out = SeqTimed {
                    answers: Vec::new(),
                    times: Vec::new(),
                    wall: Duration::ZERO,
                    steps: 0,
                    timed_out: false,
                    error: None,
                };
                let mut first = true;
                loop {
                    if limit.is_some_and(|n| out.answers.len() >= n) {
                        break;
                    }
                    let r = if first {
                        m.run(&mut host)
                    } else {
                        m.redo(&mut host)
                    };
                    first = false;
                    match r {
                        Ok(Outcome::Solution) => {
                            out.answers.push(m.answer(&cells));
                            out.times.push(t0.elapsed());
                        }
                        Ok(Outcome::Halted) => {
                            out.timed_out = true;
                            break;
                        }
                        Ok(Outcome::Exhausted) => break,
                        Err(e) => {
                            out.error = Some(e);
                            break;
                        }
                    }
                }
                out.wall = t0.elapsed();
                out.steps = m.steps;
                out
            })
            .expect("spawn seq thread")
            .join()
            .expect("seq thread panicked")
    })
}
