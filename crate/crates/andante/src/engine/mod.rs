//! The and-parallel engine: agents, parcalls, the scheduler, parallel
//! backtracking with answer memoization, suspension, and the right-to-left
//! recomputation mode.

mod agent;
pub mod parcall;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use andante_core::reader::{Program, QuerySpec};
use andante_core::term::Term;
use andante_core::EngineError;

use crate::trace::TraceEvent;
use parcall::{Hid, Parcall};

/// Decides which agent may start which goal. Test scenarios use it to force
/// a particular distribution of work; it never affects backtracking.
pub trait ScheduleHook: Send + Sync {
    /// May `agent` start a goal calling `pred` (`name/arity`)?
    fn allow_start(&self, _agent: u32, _pred: &str) -> bool {
        true
    }
    fn started(&self, _agent: u32, _pred: &str) {}
}

/// Randomized perturbation for robustness tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct Injection {
    /// Chance per call boundary, in thousandths, that the running goal is
    /// told to suspend.
    pub suspend_per_mille: u32,
    /// Upper bound of a random sleep before each answer is published.
    pub jitter_us: u64,
}

#[derive(Clone)]
pub struct EngineConfig {
    pub agents: usize,
    pub recompute: bool,
    pub det_opt: bool,
    pub speculative: bool,
    pub ghost_retention: bool,
    pub priority: bool,
    pub debug_independence: bool,
    pub seed: u64,
    pub pause_unit_us: u64,
    pub trace: bool,
    pub inject: Option<Injection>,
    pub hook: Option<Arc<dyn ScheduleHook>>,
    /// Per-agent resolution step budget.
    pub step_budget: Option<u64>,
    pub deadline: Option<Duration>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            agents: 1,
            recompute: false,
            det_opt: true,
            speculative: true,
            ghost_retention: false,
            priority: true,
            debug_independence: false,
            seed: 0,
            pause_unit_us: 1000,
            trace: false,
            inject: None,
            hook: None,
            step_budget: None,
            deadline: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EngineStats {
    pub steps: u64,
    pub busy: Vec<Duration>,
    pub memo_stored: u64,
    pub memo_bytes: u64,
    pub reinstalls: u64,
    /// Deterministic answers copied rather than memoized.
    pub transfers: u64,
    pub relocations: u64,
    pub suspensions: u64,
    pub combinations: u64,
    pub forks: u64,
    pub removed_segments: u64,
}

#[derive(Clone, Debug, Default)]
pub struct ParOutput {
    pub answers: Vec<Vec<Term>>,
    /// Time of each answer since the start of the run.
    pub answer_times: Vec<Duration>,
    pub wall: Duration,
    pub error: Option<EngineError>,
    pub timed_out: bool,
    pub stats: EngineStats,
    pub trace: Vec<TraceEvent>,
}

pub(crate) struct Task {
    pub pc: Arc<Parcall>,
    pub idx: usize,
    pub gid: Hid,
}

pub(crate) struct AgentSlot {
    pub queue: Mutex<VecDeque<Task>>,
    pub attention: AtomicBool,
}

#[derive(Default)]
pub(crate) struct Counters {
    pub combinations: AtomicU64,
    pub suspensions: AtomicU64,
    pub transfers: AtomicU64,
    pub memo_stored: AtomicU64,
    pub memo_bytes: AtomicU64,
    pub reinstalls: AtomicU64,
    pub forks: AtomicU64,
    pub removed: AtomicU64,
    pub steps: AtomicU64,
    pub relocations: AtomicU64,
}

pub(crate) struct Shared {
    pub cfg: EngineConfig,
    pub prog: Arc<Program>,
    pub slots: Vec<AgentSlot>,
    epoch: Mutex<u64>,
    cv: Condvar,
    pub stop: AtomicBool,
    pub timed_out: AtomicBool,
    pub error: Mutex<Option<EngineError>>,
    ids: AtomicU64,
    pub t0: Instant,
    pub trace: Option<Mutex<Vec<TraceEvent>>>,
    pub ctr: Counters,
    pub busy: Mutex<Vec<Duration>>,
}

impl Shared {
    pub fn next_id(&self) -> u64 {
        self.ids.fetch_add(1, Ordering::Relaxed)
    }

    pub fn epoch(&self) -> u64 {
        *self.epoch.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Wakes every parked agent.
    pub fn notify(&self) {
        let mut g = self.epoch.lock().unwrap_or_else(|e| e.into_inner());
        *g += 1;
        self.cv.notify_all();
    }

    /// Parks until something changed since `seen`, or a short timeout.
    pub fn park(&self, seen: u64) {
        let g = self.epoch.lock().unwrap_or_else(|e| e.into_inner());
        if *g == seen && !self.stop.load(Ordering::Relaxed) {
            let _ = self.cv.wait_timeout(g, Duration::from_millis(2));
        }
    }

    pub fn fail(&self, e: EngineError) {
        let mut g = self.error.lock().unwrap_or_else(|e| e.into_inner());
        if g.is_none() {
            *g = Some(e);
        }
        drop(g);
        self.halt();
    }

    pub fn halt(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.notify();
    }

    pub fn now_us(&self) -> u64 {
        self.t0.elapsed().as_micros() as u64
    }

    pub fn event(&self, e: TraceEvent) {
        if let Some(t) = &self.trace {
            t.lock().unwrap_or_else(|e| e.into_inner()).push(e);
        }
    }
}

/// Stack size of agent threads; answer terms can be deep lists.
pub const AGENT_STACK: usize = 256 << 20;

/// Runs `q` on `cfg.agents` agents, collecting up to `limit` answers.
pub fn solve_par(
    prog: Arc<Program>,
    q: &QuerySpec,
    limit: Option<usize>,
    cfg: &EngineConfig,
) -> ParOutput {
    let mut cfg = cfg.clone();
    cfg.agents = cfg.agents.max(1);
    if cfg.recompute {
        cfg.speculative = false;
    }
    let n = cfg.agents;
    let sh = Shared {
        trace: cfg.trace.then(|| Mutex::new(Vec::new())),
        cfg,
        prog,
        slots: (0..n)
            .map(|_| AgentSlot {
                queue: Mutex::new(VecDeque::new()),
                attention: AtomicBool::new(false),
            })
            .collect(),
        epoch: Mutex::new(0),
        cv: Condvar::new(),
        stop: AtomicBool::new(false),
        timed_out: AtomicBool::new(false),
        error: Mutex::new(None),
        ids: AtomicU64::new(1),
        t0: Instant::now(),
        ctr: Counters::default(),
        busy: Mutex::new(vec![Duration::ZERO; n]),
    };
    let finished = AtomicBool::new(false);
    let mut out = ParOutput::default();
    std::thread::scope(|s| {
        let sh = &sh;
        let finished = &finished;
        if let Some(d) = sh.cfg.deadline {
            s.spawn(move || {
                while !finished.load(Ordering::SeqCst) {
                    if sh.t0.elapsed() >= d {
                        sh.timed_out.store(true, Ordering::SeqCst);
                        sh.halt();
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
            });
        }
        for a in 1..n as u32 {
            std::thread::Builder::new()
                .stack_size(AGENT_STACK)
                .spawn_scoped(s, move || agent::worker(sh, a))
                .expect("spawn agent");
        }
        let h = std::thread::Builder::new()
            .stack_size(AGENT_STACK)
            .spawn_scoped(s, move || {
                let r = agent::query_runner(sh, q, limit);
                finished.store(true, Ordering::SeqCst);
                sh.halt();
                r
            })
            .expect("spawn agent");
        let (answers, times) = h.join().unwrap_or_default();
        out.answers = answers;
        out.answer_times = times;
    });
    out.wall = sh.t0.elapsed();
    out.error = sh.error.lock().unwrap_or_else(|e| e.into_inner()).take();
    out.timed_out = sh.timed_out.load(Ordering::SeqCst);
    let c = &sh.ctr;
    let ld = |a: &AtomicU64| a.load(Ordering::SeqCst);
    out.stats = EngineStats {
        steps: ld(&c.steps),
        busy: sh.busy.lock().unwrap_or_else(|e| e.into_inner()).clone(),
        memo_stored: ld(&c.memo_stored),
        memo_bytes: ld(&c.memo_bytes),
        reinstalls: ld(&c.reinstalls),
        transfers: ld(&c.transfers),
        relocations: ld(&c.relocations),
        suspensions: ld(&c.suspensions),
        combinations: ld(&c.combinations),
        forks: ld(&c.forks),
        removed_segments: ld(&c.removed),
    };
    if let Some(t) = sh.trace {
        out.trace = t.into_inner().unwrap_or_else(|e| e.into_inner());
    }
    out
}
