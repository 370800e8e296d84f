//! Sequential SLD resolution: leftmost goal, clauses in source order,
//! chronological backtracking, `&` read as `,`.

pub mod machine;

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::EngineError;
use crate::reader::{Program, QuerySpec};
use crate::term::{Term, VarRef};
pub use machine::{cons, Cont, ContItem, CpKind, Flow, Hooks, Machine, Outcome, PauseResult};

/// Hooks for plain sequential execution: no parallelism, no events, and
/// `pause/1` returns at once.
pub struct NullHost;

impl Hooks<(), ()> for NullHost {}

pub type SeqMachine = Machine<(), ()>;

#[derive(Clone, Copy, Debug, Default)]
pub struct Limit {
    pub answers: Option<usize>,
    pub steps: Option<u64>,
}

impl Limit {
    pub fn all() -> Self {
        Limit::default()
    }

    pub fn first(n: usize) -> Self {
        Limit {
            answers: Some(n),
            steps: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SeqOutput {
    /// One tuple per answer, in the order of the query's named variables.
    pub answers: Vec<Vec<Term>>,
    pub steps: u64,
}

/// An error cut the run short; `partial` holds what was found before it.
#[derive(Clone, Debug)]
pub struct SeqFailure {
    pub error: EngineError,
    pub partial: SeqOutput,
}

/// Query variable cells of a started machine, in answer order.
pub fn query_cells<F: Clone, C>(m: &Machine<F, C>, q: &QuerySpec, base: u32) -> Vec<VarRef> {
    q.vars
        .iter()
        .map(|(_, i)| m.ss.store.var_at(base + i))
        .collect()
}

/// Runs `q` with hooks `h` collecting answers up to `limit`.
pub fn solve_with<F: Clone, C, H: Hooks<F, C>>(
    m: &mut Machine<F, C>,
    h: &mut H,
    q: &QuerySpec,
    limit: Limit,
) -> Result<SeqOutput, SeqFailure> {
    m.budget = limit.steps;
    let base = m.start(q.root, q.nvars);
    let cells = query_cells(m, q, base);
    let mut out = SeqOutput::default();
    let mut first = true;
    loop {
        if limit.answers.is_some_and(|n| out.answers.len() >= n) {
            break;
        }
        let r = if first { m.run(h) } else { m.redo(h) };
        first = false;
        match r {
            Ok(Outcome::Solution) => out.answers.push(m.answer(&cells)),
            Ok(_) => break,
            Err(error) => {
                out.steps = m.steps;
                return Err(SeqFailure {
                    error,
                    partial: out,
                });
            }
        }
    }
    out.steps = m.steps;
    Ok(out)
}

pub fn solve_seq(prog: Arc<Program>, q: &QuerySpec, limit: Limit) -> Result<SeqOutput, SeqFailure> {
    let mut m = SeqMachine::new(prog, 0);
    solve_with(&mut m, &mut NullHost, q, limit)
}

/// Steps taken to enumerate every answer of `q`.
pub fn count_resolution_steps(prog: Arc<Program>, q: &QuerySpec) -> Result<u64, SeqFailure> {
    solve_seq(prog, q, Limit::all()).map(|o| o.steps)
}
