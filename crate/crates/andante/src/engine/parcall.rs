//! Parcall frames and goal handlers: the state shared between the agent
//! that forked a parallel conjunction and the agents running its goals.

use std::sync::{Arc, Mutex, MutexGuard};

use andante_core::combine::Combination;
use andante_core::memo::{MemoAnswer, MemoArea};
use andante_core::reader::NodeId;
use andante_core::term::{Snap, Term};

/// Identity of one execution of a handler. A recomputed goal gets a new one.
pub type Hid = u64;

/// A parallel goal exported by its parent: the body node to run and the
/// values of the clause variables it mentions, over external slots.
#[derive(Debug)]
pub struct GoalSnap {
    pub node: NodeId,
    pub nvars: u32,
    pub env: Vec<(u32, Snap)>,
    pub n_ext: u32,
    /// `name/arity` of the called predicate.
    pub pred: String,
    /// Goal template, used to print answers in traces.
    pub tpl: Term,
    /// The goal as called, printed; filled only when tracing.
    pub call: String,
}

#[derive(Clone, Debug)]
pub enum Answer {
    /// Memoized answer of a goal that may have more.
    Memo(Arc<MemoAnswer>),
    /// Copied answer of a deterministic goal.
    Copy(Arc<MemoAnswer>),
    /// Deterministic answer left in place on the owner's own stacks:
    /// (slot, live term) pairs.
    Direct(Arc<Vec<(u32, Term)>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HSt {
    NotExecuted,
    Running,
    /// Has answers; its segment is closed and can be backtracked into.
    Idle,
    Suspended,
    /// No alternatives left.
    Done,
    Cancelled,
}

#[derive(Debug)]
pub struct HState {
    pub gid: Hid,
    pub goal: Arc<GoalSnap>,
    pub st: HSt,
    pub executor: Option<u32>,
    pub answers: Vec<Answer>,
    pub suspend_req: bool,
}

impl HState {
    pub fn failed(&self) -> bool {
        (self.st == HSt::Done || self.st == HSt::Cancelled) && self.answers.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// Waiting for a first answer of every goal.
    Forward,
    /// The owner is consuming combinations.
    Combining,
    /// The owner wants another combination.
    Backtracking,
    Done,
}

#[derive(Debug)]
pub struct PcState {
    pub status: Status,
    pub hs: Vec<HState>,
    pub memo: MemoArea,
    /// Per handler, answers already taking part in emitted batches.
    pub combined: Vec<usize>,
    /// Recompute mode: the goal being backtracked and the answers of each
    /// goal already used.
    pub target: usize,
    pub seen: Vec<usize>,
    pub recompute: bool,
    /// A first combination was emitted.
    pub joined: bool,
}

impl PcState {
    pub fn has_uncombined(&self) -> bool {
        !self.recompute
            && self
                .hs
                .iter()
                .zip(&self.combined)
                .any(|(h, &c)| h.answers.len() > c)
    }

    /// Starts the next batch for the first handler with an uncombined
    /// answer.
    pub fn next_batch(&mut self) -> Option<Combination> {
        for i in 0..self.hs.len() {
            if self.hs[i].answers.len() > self.combined[i] {
                return Combination::batch(i, self.combined[i], &self.combined);
            }
        }
        None
    }

    /// Does this parcall's consumer currently wait on it?
    fn own_demand(&self) -> bool {
        match self.status {
            Status::Forward => true,
            Status::Backtracking => !self.has_uncombined(),
            _ => false,
        }
    }

    fn needs(&self, idx: usize, gid: Hid) -> bool {
        let h = &self.hs[idx];
        if h.gid != gid || !self.own_demand() {
            return false;
        }
        match self.status {
            Status::Forward => h.answers.is_empty(),
            Status::Backtracking if self.recompute => {
                idx == self.target && h.answers.len() <= self.seen[idx]
            }
            Status::Backtracking => !matches!(h.st, HSt::Done | HSt::Cancelled),
            _ => false,
        }
    }

    /// The owner waiting on this parcall has something to act on.
    pub fn ready(&self) -> bool {
        let finished = |h: &HState| matches!(h.st, HSt::Done | HSt::Cancelled);
        match self.status {
            Status::Forward => {
                self.hs.iter().any(HState::failed) || self.hs.iter().all(|h| !h.answers.is_empty())
            }
            Status::Backtracking if self.recompute => {
                let t = &self.hs[self.target];
                t.answers.len() > self.seen[self.target] || finished(t)
            }
            Status::Backtracking => self.has_uncombined() || self.hs.iter().all(finished),
            _ => false,
        }
    }

    pub fn is_live(&self, idx: usize, gid: Hid) -> bool {
        let h = &self.hs[idx];
        self.status != Status::Done && h.gid == gid && h.st != HSt::Cancelled
    }
}

#[derive(Debug)]
pub struct Parcall {
    pub id: u64,
    pub owner: u32,
    /// The handler execution that forked this parcall, if any.
    pub parent: Option<(Arc<Parcall>, usize, Hid)>,
    pub st: Mutex<PcState>,
}

impl Parcall {
    pub fn lock(&self) -> MutexGuard<'_, PcState> {
        self.st.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn n(&self) -> usize {
        self.lock().hs.len()
    }

    /// A parcall reached from `self` through parent links, or itself.
    pub fn within(&self, ancestor: u64) -> bool {
        if self.id == ancestor {
            return true;
        }
        let mut cur = self.parent.as_ref().map(|p| p.0.clone());
        while let Some(p) = cur {
            if p.id == ancestor {
                return true;
            }
            cur = p.parent.as_ref().map(|q| q.0.clone());
        }
        false
    }
}

/// Is handler `idx` (execution `gid`) of `pc` needed for forward progress:
/// its conjunction awaits it and so, transitively, does every enclosing
/// conjunction up to the query.
pub fn needed(pc: &Arc<Parcall>, idx: usize, gid: Hid) -> bool {
    let mut cur = (pc.clone(), idx, gid);
    loop {
        if !cur.0.lock().needs(cur.1, cur.2) {
            return false;
        }
        match &cur.0.parent {
            None => return true,
            Some(p) => cur = p.clone(),
        }
    }
}

/// Scheduling class of a handler: 1 forward and needed, 2 backtracking and
/// needed, 3 and 4 the speculative counterparts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Dead,
    NotNow,
    Is(u8),
}

pub fn classify(pc: &Arc<Parcall>, idx: usize, gid: Hid, speculative: bool) -> Class {
    let forward = {
        let st = pc.lock();
        if !st.is_live(idx, gid) {
            return Class::Dead;
        }
        let h = &st.hs[idx];
        match h.st {
            HSt::NotExecuted => true,
            HSt::Suspended => h.answers.is_empty(),
            HSt::Idle => false,
            _ => return Class::NotNow,
        }
    };
    let need = needed(pc, idx, gid);
    let c = match (forward, need) {
        (true, true) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (false, false) => 4,
    };
    if c >= 3 && !speculative {
        Class::NotNow
    } else {
        Class::Is(c)
    }
}
