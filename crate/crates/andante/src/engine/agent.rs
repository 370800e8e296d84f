//! One agent: a resolution machine over its own stack set, plus the hooks
//! that implement parallel conjunctions and the scheduler on top of it.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use andante_core::combine::Combination;
use andante_core::memo::{MemoAnswer, MemoArea};
use andante_core::reader::{Node, ParGoal, QuerySpec};
use andante_core::seq::{
    cons, query_cells, Cont, ContItem, CpKind, Flow, Hooks, Machine, Outcome, PauseResult,
};
use andante_core::stackset::GoalSegment;
use andante_core::term::{Instantiator, Snap, StoreMark, Term, TermStore, VarRef};
use andante_core::EngineError;

use super::parcall::{
    classify, needed, Answer, Class, GoalSnap, HSt, HState, Hid, Parcall, PcState, Status,
};
use super::{Shared, Task};
use crate::trace::{EventKind, TraceEvent};

#[derive(Clone)]
pub(crate) enum Frame {
    /// The goal of a handler succeeded.
    Exit(Hid),
    /// Start the parcall's goals nobody has taken yet.
    Sweep(Arc<Parcall>),
    /// Wait for the parcall's next combination, helping meanwhile.
    Await(Arc<Parcall>),
    /// The agent loop.
    Idle,
}

/// Cursor of a ghost choice point. With term retention on, positions
/// before `r` stay installed below the choice point's marks.
pub(crate) struct Ghost {
    cur: Combination,
    r: usize,
    /// Trail entries kept below the choice point's trail mark.
    tback: usize,
    base_store: StoreMark,
    set_store: StoreMark,
}

pub(crate) enum Cp {
    /// Bottom of a handler's segment; retried when its goal is exhausted.
    Base(Hid),
    /// Tears the parcall down when failed into or cut.
    Release(Arc<Parcall>),
    Combine(Arc<Parcall>, Box<Ghost>),
    /// Failing into it resumes a suspended goal.
    Resume(Hid, Cont<Frame>),
    /// Right-to-left recomputation point.
    Recompute(Arc<Parcall>),
}

type M = Machine<Frame, Cp>;

struct LocalH {
    pc: Arc<Parcall>,
    idx: usize,
    /// Cells the goal's external slots were imported into.
    ext: Vec<VarRef>,
    base_serial: u64,
    ret: Cont<Frame>,
    env_base: u32,
}

struct LocalPc {
    k: Cont<Frame>,
    /// The owner's cells for each goal's external slots.
    ext: Vec<Vec<VarRef>>,
    release: u64,
}

enum Work {
    Start(Task, u8, u8),
    /// Fail into a closed segment; the flag asks for relocation first.
    Reenter(Hid, u8, u8, bool),
}

pub(crate) struct Host<'a> {
    sh: &'a Shared,
    me: u32,
    local: HashMap<Hid, LocalH>,
    pcs: HashMap<u64, LocalPc>,
    /// Handlers running on this agent, outermost first.
    chain: Vec<Hid>,
    rng: StdRng,
    inj: Cell<u64>,
    injected: Cell<bool>,
    parked: Duration,
    born: Instant,
}

fn internal(msg: &str) -> EngineError {
    EngineError::internal(msg.to_string())
}

/// Exports a parent term for a parallel goal: unbound variables become
/// external slots, physically ground structures are shared, the rest is
/// rebuilt.
fn export(
    store: &TermStore,
    t: &Term,
    ext: &mut Vec<VarRef>,
    pos: &mut BTreeMap<VarRef, u32>,
) -> Snap {
    match store.deref(t) {
        Term::Var(v) => {
            let i = *pos.entry(*v).or_insert_with(|| {
                ext.push(*v);
                ext.len() as u32 - 1
            });
            Snap::Ext(i)
        }
        Term::Atom(a) => Snap::Atom(*a),
        Term::Int(i) => Snap::Int(*i),
        Term::Struct(s) if s.ground => Snap::Ref(Term::Struct(s.clone())),
        Term::Struct(s) => Snap::compound(
            s.functor,
            s.args.iter().map(|a| export(store, a, ext, pos)).collect(),
        ),
    }
}

pub(crate) fn query_runner(
    sh: &Shared,
    q: &QuerySpec,
    limit: Option<usize>,
) -> (Vec<Vec<Term>>, Vec<Duration>) {
    let mut host = Host::new(sh, 0);
    let mut m = host.machine();
    let base = m.start(q.root, q.nvars);
    let cells = query_cells(&m, q, base);
    let mut answers = Vec::new();
    let mut times = Vec::new();
    let mut first = true;
    loop {
        if limit.is_some_and(|n| answers.len() >= n) {
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
                answers.push(m.answer(&cells));
                times.push(sh.t0.elapsed());
            }
            Ok(_) => break,
            Err(e) => {
                sh.fail(e);
                break;
            }
        }
    }
    host.finish(&m);
    (answers, times)
}

pub(crate) fn worker(sh: &Shared, me: u32) {
    let mut host = Host::new(sh, me);
    let mut m = host.machine();
    m.cont = cons(ContItem::Special(Frame::Idle), None);
    match m.run(&mut host) {
        Ok(Outcome::Halted) => {}
        Ok(o) => sh.fail(EngineError::internal(format!(
            "agent loop ended with {o:?}"
        ))),
        Err(e) => sh.fail(e),
    }
    host.finish(&m);
}

impl<'a> Host<'a> {
    fn new(sh: &'a Shared, me: u32) -> Self {
        let seed = sh.cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (me as u64 + 1);
        Host {
            sh,
            me,
            local: HashMap::new(),
            pcs: HashMap::new(),
            chain: Vec::new(),
            rng: StdRng::seed_from_u64(seed),
            inj: Cell::new(seed | 1),
            injected: Cell::new(false),
            parked: Duration::ZERO,
            born: Instant::now(),
        }
    }

    fn machine(&self) -> M {
        let mut m = M::new(self.sh.prog.clone(), self.me);
        m.pause_unit_us = self.sh.cfg.pause_unit_us;
        m.budget = self.sh.cfg.step_budget;
        m
    }

    fn finish(&self, m: &M) {
        let c = &self.sh.ctr;
        c.steps.fetch_add(m.steps, Ordering::SeqCst);
        c.relocations
            .fetch_add(m.ss.relocations(), Ordering::SeqCst);
        let busy = self.born.elapsed().saturating_sub(self.parked);
        if let Ok(mut b) = self.sh.busy.lock() {
            b[self.me as usize] = busy;
        }
    }

    fn park(&mut self, seen: u64) {
        let t = Instant::now();
        self.sh.park(seen);
        self.parked += t.elapsed();
    }

    #[allow(clippy::too_many_arguments)]
    fn ev(
        &self,
        kind: EventKind,
        pc: &Parcall,
        idx: usize,
        h: Hid,
        class: u8,
        best: u8,
        detail: String,
    ) {
        if self.sh.trace.is_some() {
            self.sh.event(TraceEvent {
                t_us: self.sh.now_us(),
                agent: self.me,
                kind,
                pc: pc.id,
                handler: h,
                idx: idx as u32,
                class,
                best,
                detail,
            });
        }
    }

    fn k_of(&self, pc: &Parcall) -> Result<Cont<Frame>, EngineError> {
        self.pcs
            .get(&pc.id)
            .map(|l| l.k.clone())
            .ok_or_else(|| internal("parcall record missing"))
    }

    // ---- fork ----

    fn fork(&mut self, m: &mut M, goals: &[ParGoal], base: u32) -> Result<Flow, EngineError> {
        let prog = self.sh.prog.clone();
        let mut exts = Vec::with_capacity(goals.len());
        let mut hs = Vec::with_capacity(goals.len());
        for g in goals {
            let mut ext = Vec::new();
            let mut pos = BTreeMap::new();
            let env: Vec<(u32, Snap)> = g
                .vars
                .iter()
                .map(|&v| {
                    let t = Term::Var(m.ss.store.var_at(base + v));
                    (v, export(&m.ss.store, &t, &mut ext, &mut pos))
                })
                .collect();
            let pred = match prog.node(g.node) {
                Node::Call { goal, .. } => match goal.key() {
                    Some((f, n)) => format!("{}/{}", prog.syms.name(f), n),
                    None => "?".into(),
                },
                Node::Builtin(b, args) => format!("{}/{}", b.name(), args.len()),
                _ => "goal".into(),
            };
            let tpl = prog.node_term(g.node);
            let call = if self.sh.trace.is_some() {
                let t = build_view(&m.ss.store, &tpl, base);
                prog.term_to_string(&m.ss.store.resolve(&t, &mut Vec::new()))
            } else {
                String::new()
            };
            let snap = GoalSnap {
                node: g.node,
                nvars: g.vars.iter().max().map_or(0, |v| v + 1),
                env,
                n_ext: ext.len() as u32,
                pred,
                tpl,
                call,
            };
            hs.push(HState {
                gid: self.sh.next_id(),
                goal: Arc::new(snap),
                st: HSt::NotExecuted,
                executor: None,
                answers: Vec::new(),
                suspend_req: false,
            });
            exts.push(ext);
        }
        if self.sh.cfg.debug_independence {
            for i in 0..exts.len() {
                for j in i + 1..exts.len() {
                    if exts[i].iter().any(|v| exts[j].contains(v)) {
                        return Err(EngineError::Independence(format!(
                            "goals {} and {} of a parallel conjunction share an unbound variable",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        let n = hs.len();
        let parent = self
            .chain
            .last()
            .and_then(|g| self.local.get(g).map(|l| (l.pc.clone(), l.idx, *g)));
        let id = self.sh.next_id();
        let pc = Arc::new(Parcall {
            id,
            owner: self.me,
            parent,
            st: std::sync::Mutex::new(PcState {
                status: Status::Forward,
                memo: MemoArea::new(id, n),
                combined: vec![0; n],
                target: n - 1,
                seen: vec![0; n],
                recompute: self.sh.cfg.recompute,
                joined: false,
                hs,
            }),
        });
        let release = m.ss.push(CpKind::Special(Cp::Release(pc.clone())));
        self.pcs.insert(
            id,
            LocalPc {
                k: m.cont.take(),
                ext: exts,
                release,
            },
        );
        self.sh.ctr.forks.fetch_add(1, Ordering::Relaxed);
        let forked_by = pc.parent.as_ref().map_or(0, |p| p.2);
        self.ev(EventKind::Fork, &pc, 0, forked_by, 0, 0, n.to_string());

        let (gid0, pred0, call0) = {
            let st = pc.lock();
            let g = &st.hs[0].goal;
            (st.hs[0].gid, g.pred.clone(), g.call.clone())
        };
        let local_first = self.allowed(&pred0);
        {
            let st = pc.lock();
            let from = if local_first { 1 } else { 0 };
            let mut q = self.sh.slots[self.me as usize].queue.lock().unwrap();
            for (idx, h) in st.hs.iter().enumerate().skip(from) {
                q.push_back(Task {
                    pc: pc.clone(),
                    idx,
                    gid: h.gid,
                });
            }
        }
        self.sh.notify();
        let ret = cons(ContItem::Special(Frame::Sweep(pc.clone())), None);
        if local_first && self.claim(&pc, 0, gid0) {
            self.ev(EventKind::Dispatch, &pc, 0, gid0, 1, 1, call0);
            self.started(&pred0);
            self.start(m, pc, 0, gid0, ret)?;
        } else {
            m.cont = ret;
        }
        Ok(Flow::Proceed)
    }

    fn allowed(&self, pred: &str) -> bool {
        match &self.sh.cfg.hook {
            Some(h) => h.allow_start(self.me, pred),
            None => true,
        }
    }

    fn started(&self, pred: &str) {
        if let Some(h) = &self.sh.cfg.hook {
            h.started(self.me, pred);
        }
    }

    fn claim(&self, pc: &Parcall, idx: usize, gid: Hid) -> bool {
        let mut st = pc.lock();
        if st.status == Status::Done {
            return false;
        }
        let h = &mut st.hs[idx];
        if h.gid != gid || h.st != HSt::NotExecuted {
            return false;
        }
        h.st = HSt::Running;
        h.executor = Some(self.me);
        true
    }

    /// Runs a claimed goal on this agent inside a new segment.
    fn start(
        &mut self,
        m: &mut M,
        pc: Arc<Parcall>,
        idx: usize,
        gid: Hid,
        ret: Cont<Frame>,
    ) -> Result<(), EngineError> {
        let goal = pc.lock().hs[idx].goal.clone();
        let start = m.ss.store.mark();
        m.ss.open_segment(gid, start);
        let base_serial = m.ss.push(CpKind::Special(Cp::Base(gid)));
        let ext: Vec<VarRef> = (0..goal.n_ext).map(|_| m.ss.store.new_var_ref()).collect();
        let env_base = m.ss.store.alloc(goal.nvars);
        {
            let mut inst = Instantiator::new(&ext, 0);
            for (v, s) in &goal.env {
                let t = inst.build(&mut m.ss.store, s);
                m.ss.store.init_cell(env_base + v, t);
            }
        }
        m.cont = cons(
            ContItem::Goal {
                node: goal.node,
                base: env_base,
                cut: base_serial,
            },
            cons(ContItem::Special(Frame::Exit(gid)), None),
        );
        self.local.insert(
            gid,
            LocalH {
                pc,
                idx,
                ext,
                base_serial,
                ret,
                env_base,
            },
        );
        self.chain.push(gid);
        Ok(())
    }

    // ---- goal completion ----

    fn answer_text(&self, m: &M, lh: &LocalH) -> String {
        let goal = lh.pc.lock().hs[lh.idx].goal.clone();
        let mut store_view = Vec::new();
        let t = build_view(&m.ss.store, &goal.tpl, lh.env_base);
        let r = m.ss.store.resolve(&t, &mut store_view);
        self.sh.prog.term_to_string(&r)
    }

    fn exit(&mut self, m: &mut M, gid: Hid) -> Result<Flow, EngineError> {
        let (pc, idx, bs) = {
            let lh = self
                .local
                .get(&gid)
                .ok_or_else(|| internal("exit of unknown goal"))?;
            (lh.pc.clone(), lh.idx, lh.base_serial)
        };
        if self.chain.last() != Some(&gid) {
            return Err(internal("goal exit out of nesting order"));
        }
        if !pc.lock().is_live(idx, gid) {
            return self.abandon(m, self.chain.len() - 1);
        }
        if let Some(inj) = self.sh.cfg.inject {
            if inj.jitter_us > 0 {
                let us = self.rng.gen_range(0..=inj.jitter_us);
                std::thread::sleep(Duration::from_micros(us));
            }
        }
        let text = if self.sh.trace.is_some() {
            self.answer_text(m, &self.local[&gid])
        } else {
            String::new()
        };
        let det = m.ss.top_serial() == bs;
        let is_local = pc.owner == self.me;
        let seg_start =
            m.ss.segment(gid)
                .map(|s| s.start)
                .ok_or_else(|| internal("running goal without segment"))?;
        let ext = self.local[&gid].ext.clone();
        let recompute = self.sh.cfg.recompute;
        let (answer, done, copy) = if det && self.sh.cfg.det_opt {
            let bi =
                m.ss.index_of_serial(bs)
                    .ok_or_else(|| internal("goal base lost"))?;
            let over_release = is_local
                && bi > 0
                && matches!(&m.ss.get(bi - 1).unwrap().kind,
                    CpKind::Special(Cp::Release(p)) if Arc::ptr_eq(p, &pc));
            let a = if over_release {
                let owner = self
                    .pcs
                    .get(&pc.id)
                    .ok_or_else(|| internal("parcall record missing"))?
                    .ext[idx]
                    .clone();
                let mut entries = Vec::new();
                for (i, e) in ext.iter().enumerate() {
                    let d = m.ss.store.deref(&Term::Var(*e)).clone();
                    match d {
                        Term::Var(v) if v == *e => {}
                        d => entries.push((i as u32, d)),
                    }
                }
                // unbound imports stand for the owner's own cells from now on
                for (i, e) in ext.iter().enumerate() {
                    if m.ss.store.binding(*e).is_none() {
                        let ss = &mut m.ss;
                        ss.store
                            .bind_external(&mut ss.trail, *e, Term::Var(owner[i]))?;
                    }
                }
                m.ss.pop()?;
                Answer::Direct(Arc::new(entries))
            } else {
                let c = m.ss.store.copy_answer_segment(&ext, seg_start);
                let seq = pc.lock().hs[idx].answers.len() as u32;
                if !is_local {
                    m.ss.restore_top()?;
                }
                m.ss.pop()?;
                Answer::Copy(Arc::new(MemoAnswer::from_copy(seq, c)))
            };
            m.ss.drop_segment(gid);
            self.sh.ctr.transfers.fetch_add(1, Ordering::Relaxed);
            (Some(a), true, None)
        } else {
            let c = m.ss.store.copy_answer_segment(&ext, seg_start);
            m.ss.close_segment(gid)?;
            (None, false, Some(c))
        };
        {
            let mut st = pc.lock();
            if !st.is_live(idx, gid) {
                drop(st);
                if !done {
                    // the segment was closed above; reopen to unwind it
                    m.ss.reopen_segment(gid)?;
                    return self.abandon(m, self.chain.len() - 1);
                }
            } else {
                let a = match (answer, copy) {
                    (Some(a), _) => a,
                    (None, Some(c)) if recompute => {
                        self.sh.ctr.transfers.fetch_add(1, Ordering::Relaxed);
                        let seq = st.hs[idx].answers.len() as u32;
                        Answer::Copy(Arc::new(MemoAnswer::from_copy(seq, c)))
                    }
                    (None, Some(c)) => {
                        let a = st.memo.memoize(idx, c)?;
                        self.sh.ctr.memo_stored.fetch_add(1, Ordering::Relaxed);
                        self.sh
                            .ctr
                            .memo_bytes
                            .fetch_add(a.bytes as u64, Ordering::Relaxed);
                        Answer::Memo(a)
                    }
                    (None, None) => unreachable!(),
                };
                let h = &mut st.hs[idx];
                h.answers.push(a);
                h.st = if done { HSt::Done } else { HSt::Idle };
                h.suspend_req = false;
            }
        }
        self.ev(EventKind::Memoize, &pc, idx, gid, 0, 0, text);
        self.wake_owner(&pc);
        self.chain.pop();
        let ret = if done {
            self.local.remove(&gid).map(|l| l.ret)
        } else {
            self.local.get(&gid).map(|l| l.ret.clone())
        };
        self.sh.notify();
        m.cont = ret.ok_or_else(|| internal("goal record lost"))?;
        Ok(Flow::Proceed)
    }

    /// The goal at chain position `j` (and everything it runs) is no longer
    /// wanted: unwind its segment and return to its scheduler.
    fn abandon(&mut self, m: &mut M, j: usize) -> Result<Flow, EngineError> {
        let g = self.chain[j];
        let bs = self.local[&g].base_serial;
        self.unwind_through(m, bs)?;
        m.ss.drop_segment(g);
        m.ss.prune_segments();
        let lh = self
            .local
            .remove(&g)
            .ok_or_else(|| internal("goal record lost"))?;
        self.chain.truncate(j);
        self.ev(EventKind::Cancel, &lh.pc, lh.idx, g, 0, 0, String::new());
        self.sh.notify();
        m.cont = lh.ret;
        Ok(Flow::Proceed)
    }

    /// Pops every choice point down to and including the one with `serial`,
    /// undoing bindings. Engine choice points above it are discarded.
    fn unwind_through(&mut self, m: &mut M, serial: u64) -> Result<(), EngineError> {
        loop {
            if m.ss.is_empty() {
                return Err(internal("unwind target not on the stack"));
            }
            m.ss.restore_top()?;
            let cp = m.ss.pop()?;
            if cp.serial == serial {
                break;
            }
            if let CpKind::Special(c) = cp.kind {
                self.discard_cp(c);
            }
        }
        m.ss.prune_segments();
        Ok(())
    }

    fn discard_cp(&mut self, c: Cp) {
        match c {
            Cp::Base(g) => {
                self.chain.retain(|x| *x != g);
                if let Some(lh) = self.local.remove(&g) {
                    let mut st = lh.pc.lock();
                    let h = &mut st.hs[lh.idx];
                    if h.gid == g && h.st != HSt::Done {
                        h.st = HSt::Cancelled;
                    }
                }
            }
            Cp::Release(p) => self.teardown(&p),
            _ => {}
        }
    }

    /// Marks a parcall finished, releases its memo area and cancels its
    /// outstanding goals.
    fn teardown(&mut self, pc: &Arc<Parcall>) {
        self.pcs.remove(&pc.id);
        let mut wake = Vec::new();
        {
            let mut st = pc.lock();
            if st.status == Status::Done && st.memo.is_released() {
                return;
            }
            st.status = Status::Done;
            if !st.memo.is_released() {
                let _ = st.memo.release();
            }
            for h in &mut st.hs {
                match h.st {
                    HSt::Done | HSt::Cancelled | HSt::NotExecuted => {}
                    _ => {
                        if let Some(e) = h.executor {
                            wake.push(e);
                        }
                    }
                }
                if h.st != HSt::Done {
                    h.st = HSt::Cancelled;
                }
            }
        }
        for e in wake {
            self.sh.slots[e as usize]
                .attention
                .store(true, Ordering::SeqCst);
        }
        self.ev(EventKind::Cancel, pc, 0, 0, 0, 0, String::new());
        self.sh.notify();
    }

    // ---- combination ----

    fn install(&self, m: &mut M, ext: &[VarRef], a: &Answer) -> Result<(), EngineError> {
        match a {
            Answer::Memo(x) | Answer::Copy(x) => {
                x.reinstall(&mut m.ss.store, &mut m.ss.trail, ext)?;
            }
            Answer::Direct(es) => {
                for (slot, t) in es.iter() {
                    let ss = &mut m.ss;
                    ss.store
                        .bind_external(&mut ss.trail, ext[*slot as usize], t.clone())?;
                }
            }
        }
        self.sh.ctr.reinstalls.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Installs answers `tuple[from..]`. Returns the store and trail tops
    /// just before position `mid`, if it is in range.
    fn install_tuple(
        &self,
        m: &mut M,
        pc: &Parcall,
        tuple: &[usize],
        from: usize,
        mid: usize,
    ) -> Result<Option<(usize, StoreMark)>, EngineError> {
        let ans: Vec<Answer> = {
            let st = pc.lock();
            (from..tuple.len())
                .map(|i| {
                    st.hs[i]
                        .answers
                        .get(tuple[i])
                        .cloned()
                        .ok_or_else(|| internal("combined answer missing"))
                })
                .collect::<Result<_, _>>()?
        };
        let lp = self
            .pcs
            .get(&pc.id)
            .ok_or_else(|| internal("parcall record missing"))?;
        let mut at = None;
        for (i, a) in (from..tuple.len()).zip(ans.iter()) {
            if i == mid {
                at = Some((m.ss.trail.len(), m.ss.store.mark()));
            }
            self.install(m, &lp.ext[i], a)?;
        }
        Ok(at)
    }

    fn emitted(&self, pc: &Parcall, tuple: &[usize]) {
        self.sh.ctr.combinations.fetch_add(1, Ordering::Relaxed);
        if self.sh.trace.is_some() {
            let d = tuple
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",");
            self.ev(EventKind::Combine, pc, 0, 0, 0, 0, d);
        }
    }

    fn ghost(m: &mut M) -> Result<&mut Ghost, EngineError> {
        match m.ss.top_mut().map(|c| &mut c.kind) {
            Some(CpKind::Special(Cp::Combine(_, g))) => Ok(g),
            _ => Err(internal("ghost choice point not on top")),
        }
    }

    /// Installs the whole current tuple above the ghost choice point, which
    /// must be on top with nothing installed.
    fn ghost_fill(&mut self, m: &mut M, pc: &Parcall) -> Result<(), EngineError> {
        let retention = self.sh.cfg.ghost_retention;
        let (tuple, r) = {
            let g = Self::ghost(m)?;
            let lim = g.cur.limits();
            let r = if retention {
                (1..lim.len())
                    .rev()
                    .find(|&i| Some(i) != g.cur.producer() && lim[i] > 1)
                    .unwrap_or(0)
            } else {
                0
            };
            (g.cur.current().to_vec(), r)
        };
        let at = self.install_tuple(m, pc, &tuple, 0, r)?;
        let top = m.ss.top_mut().unwrap();
        let (bt, bs) = (top.trail_mark, top.store_mark);
        match at {
            Some((t, s)) if r > 0 => {
                top.trail_mark = t;
                top.store_mark = s;
                let g = Self::ghost(m)?;
                g.r = r;
                g.tback = t - bt;
                g.base_store = bs;
                g.set_store = s;
            }
            _ => {
                let g = Self::ghost(m)?;
                g.r = 0;
                g.tback = 0;
            }
        }
        self.emitted(pc, &tuple);
        Ok(())
    }

    /// Undoes the retained prefix too, leaving the ghost choice point with
    /// nothing installed above its original marks.
    fn ghost_clear(&mut self, m: &mut M) -> Result<(), EngineError> {
        let (r, tback, base_store, set_store) = {
            let g = Self::ghost(m)?;
            (g.r, g.tback, g.base_store, g.set_store)
        };
        if r == 0 {
            return Ok(());
        }
        let top = m.ss.top().unwrap();
        let t = top.trail_mark - tback;
        let moved = top.store_mark != set_store;
        let ss = &mut m.ss;
        ss.store.undo_to(&mut ss.trail, t)?;
        if !moved {
            ss.store.truncate(base_store);
        }
        let top = m.ss.top_mut().unwrap();
        top.trail_mark = t;
        if !moved {
            top.store_mark = base_store;
        }
        let g = Self::ghost(m)?;
        g.r = 0;
        g.tback = 0;
        Ok(())
    }

    fn ghost_retry(&mut self, m: &mut M, pc: Arc<Parcall>) -> Result<Flow, EngineError> {
        let (adv, r) = {
            let g = Self::ghost(m)?;
            (g.cur.advance(), g.r)
        };
        match adv {
            Some(low) if r > 0 && low >= r => {
                let tuple = Self::ghost(m)?.cur.current().to_vec();
                self.install_tuple(m, &pc, &tuple, r, usize::MAX)?;
                self.emitted(&pc, &tuple);
            }
            Some(_) => {
                self.ghost_clear(m)?;
                self.ghost_fill(m, &pc)?;
            }
            None => {
                self.ghost_clear(m)?;
                let producer = Self::ghost(m)?.cur.producer();
                let next = {
                    let mut st = pc.lock();
                    if let Some(p) = producer {
                        st.combined[p] += 1;
                    }
                    let nb = st.next_batch();
                    if nb.is_none() {
                        st.status = Status::Backtracking;
                    }
                    nb
                };
                match next {
                    Some(c) => {
                        Self::ghost(m)?.cur = c;
                        self.suspend_running(&pc);
                        self.ghost_fill(m, &pc)?;
                    }
                    None => {
                        m.ss.pop()?;
                        self.sh.notify();
                        m.cont = cons(ContItem::Special(Frame::Await(pc)), None);
                        return Ok(Flow::Proceed);
                    }
                }
            }
        }
        m.cont = self.k_of(&pc)?;
        Ok(Flow::Proceed)
    }

    /// Asks the running goals of `pc` to suspend at their next boundary.
    fn suspend_running(&self, pc: &Parcall) {
        let mut wake = Vec::new();
        {
            let mut st = pc.lock();
            for h in &mut st.hs {
                if h.st == HSt::Running {
                    h.suspend_req = true;
                    if let Some(e) = h.executor {
                        wake.push(e);
                    }
                }
            }
        }
        for e in wake {
            self.sh.slots[e as usize]
                .attention
                .store(true, Ordering::SeqCst);
        }
    }

    // ---- waiting on a parcall ----

    fn floor(&self, m: &M, pc: &Parcall) -> Result<usize, EngineError> {
        let rel = self
            .pcs
            .get(&pc.id)
            .ok_or_else(|| internal("parcall record missing"))?
            .release;
        m.ss.index_of_serial(rel)
            .map(|i| i + 1)
            .ok_or_else(|| internal("release choice point lost"))
    }

    fn sweep(&mut self, m: &mut M, pc: Arc<Parcall>) -> Result<Flow, EngineError> {
        let n = pc.n();
        for idx in 0..n {
            let (free, gid, goal) = {
                let st = pc.lock();
                let h = &st.hs[idx];
                (h.st == HSt::NotExecuted, h.gid, h.goal.clone())
            };
            let pred = &goal.pred;
            if free && self.allowed(pred) {
                let class = match classify(&pc, idx, gid, true) {
                    Class::Is(c) => c,
                    _ => continue,
                };
                if self.claim(&pc, idx, gid) {
                    self.ev(
                        EventKind::Dispatch,
                        &pc,
                        idx,
                        gid,
                        class,
                        class,
                        goal.call.clone(),
                    );
                    self.started(pred);
                    let ret = cons(ContItem::Special(Frame::Sweep(pc.clone())), None);
                    self.start(m, pc, idx, gid, ret)?;
                    return Ok(Flow::Proceed);
                }
            }
        }
        self.await_pc(m, pc)
    }

    fn await_pc(&mut self, m: &mut M, pc: Arc<Parcall>) -> Result<Flow, EngineError> {
        let frame = Frame::Await(pc.clone());
        loop {
            if self.sh.stop.load(Ordering::Relaxed) {
                return Ok(Flow::Halt);
            }
            if self.attention() {
                let resume = cons(ContItem::Special(frame.clone()), m.cont.clone());
                if let Some(f) = self.attend(m, resume)? {
                    return Ok(f);
                }
            }
            let seen = self.sh.epoch();
            if let Some(f) = self.pc_step(m, &pc)? {
                return Ok(f);
            }
            let floor = self.floor(m, &pc)?;
            if let Some(w) = self.find_work(m, floor, Some(&pc))? {
                let ret = cons(ContItem::Special(frame.clone()), None);
                if let Some(f) = self.do_work(m, w, ret)? {
                    return Ok(f);
                }
                continue;
            }
            self.park(seen);
        }
    }

    /// The owner's decision on a parcall it waits for: fail it, start a
    /// combination, or keep waiting (`None`).
    fn pc_step(&mut self, m: &mut M, pc: &Arc<Parcall>) -> Result<Option<Flow>, EngineError> {
        enum Act {
            Fail,
            Join { single: bool },
            RecJoin,
            Batch(Combination),
            Restart(Vec<Task>),
            Wait,
        }
        let act = {
            let mut st = pc.lock();
            let n = st.hs.len();
            match st.status {
                Status::Forward => {
                    if st.hs.iter().any(HState::failed) {
                        if st.recompute && st.joined {
                            st.status = Status::Backtracking;
                            Act::Wait
                        } else {
                            Act::Fail
                        }
                    } else if st.hs.iter().all(|h| !h.answers.is_empty()) {
                        st.status = Status::Combining;
                        st.joined = true;
                        if st.recompute {
                            for i in 0..n {
                                st.seen[i] = st.seen[i].max(1);
                            }
                            Act::RecJoin
                        } else {
                            st.combined = vec![1; n];
                            let single = st
                                .hs
                                .iter()
                                .all(|h| h.st == HSt::Done && h.answers.len() == 1);
                            Act::Join { single }
                        }
                    } else {
                        Act::Wait
                    }
                }
                Status::Backtracking if st.recompute => loop {
                    let t = st.target;
                    if st.hs[t].answers.len() > st.seen[t] {
                        // one answer at a time; a helper may have found more
                        st.seen[t] += 1;
                        let mut tasks = Vec::new();
                        for j in t + 1..n {
                            let gid = self.sh.next_id();
                            let h = &mut st.hs[j];
                            if matches!(h.st, HSt::Running) {
                                if let Some(e) = h.executor {
                                    self.sh.slots[e as usize]
                                        .attention
                                        .store(true, Ordering::SeqCst);
                                }
                            }
                            h.gid = gid;
                            h.st = HSt::NotExecuted;
                            h.executor = None;
                            h.answers.clear();
                            h.suspend_req = false;
                            st.seen[j] = 0;
                            tasks.push(Task {
                                pc: pc.clone(),
                                idx: j,
                                gid,
                            });
                        }
                        st.status = Status::Forward;
                        break Act::Restart(tasks);
                    }
                    if matches!(st.hs[t].st, HSt::Done | HSt::Cancelled) {
                        if t == 0 {
                            break Act::Fail;
                        }
                        st.target -= 1;
                        continue;
                    }
                    break Act::Wait;
                },
                Status::Backtracking => {
                    if let Some(c) = st.next_batch() {
                        st.status = Status::Combining;
                        Act::Batch(c)
                    } else if st
                        .hs
                        .iter()
                        .all(|h| matches!(h.st, HSt::Done | HSt::Cancelled))
                    {
                        Act::Fail
                    } else {
                        Act::Wait
                    }
                }
                Status::Combining | Status::Done => {
                    return Err(internal("waiting on a conjunction that is not waiting"))
                }
            }
        };
        match act {
            Act::Wait => Ok(None),
            Act::Fail => {
                let rel = self
                    .pcs
                    .get(&pc.id)
                    .ok_or_else(|| internal("parcall record missing"))?
                    .release;
                self.unwind_through(m, rel)?;
                self.teardown(pc);
                Ok(Some(Flow::Fail))
            }
            Act::Restart(tasks) => {
                {
                    let mut q = self.sh.slots[self.me as usize].queue.lock().unwrap();
                    q.extend(tasks);
                }
                self.sh.notify();
                Ok(None)
            }
            Act::RecJoin => {
                let tuple: Vec<usize> = {
                    let st = pc.lock();
                    st.seen.iter().map(|k| k - 1).collect()
                };
                m.ss.push(CpKind::Special(Cp::Recompute(pc.clone())));
                self.install_tuple(m, pc, &tuple, 0, usize::MAX)?;
                self.emitted(pc, &tuple);
                m.cont = self.k_of(pc)?;
                Ok(Some(Flow::Proceed))
            }
            Act::Join { single } => {
                self.suspend_running(pc);
                let lp = self
                    .pcs
                    .get(&pc.id)
                    .ok_or_else(|| internal("parcall record missing"))?;
                let n = lp.ext.len();
                if single && m.ss.top_serial() == lp.release {
                    let k = lp.k.clone();
                    self.install_tuple(m, pc, &vec![0; n], 0, usize::MAX)?;
                    self.emitted(pc, &vec![0; n]);
                    m.ss.pop()?;
                    self.teardown(pc);
                    m.cont = k;
                } else {
                    self.push_ghost(m, Combination::initial(n), pc)?;
                    m.cont = self.k_of(pc)?;
                }
                Ok(Some(Flow::Proceed))
            }
            Act::Batch(c) => {
                self.suspend_running(pc);
                self.push_ghost(m, c, pc)?;
                m.cont = self.k_of(pc)?;
                Ok(Some(Flow::Proceed))
            }
        }
    }

    fn push_ghost(
        &mut self,
        m: &mut M,
        cur: Combination,
        pc: &Arc<Parcall>,
    ) -> Result<(), EngineError> {
        let mark = m.ss.store.mark();
        m.ss.push(CpKind::Special(Cp::Combine(
            pc.clone(),
            Box::new(Ghost {
                cur,
                r: 0,
                tback: 0,
                base_store: mark,
                set_store: mark,
            }),
        )));
        self.ghost_fill(m, pc)
    }

    // ---- scheduling ----

    fn idle(&mut self, m: &mut M) -> Result<Flow, EngineError> {
        loop {
            if self.sh.stop.load(Ordering::Relaxed) {
                return Ok(Flow::Halt);
            }
            if self.attention() {
                let resume = cons(ContItem::Special(Frame::Idle), None);
                if let Some(f) = self.attend(m, resume)? {
                    return Ok(f);
                }
            }
            let seen = self.sh.epoch();
            if let Some(w) = self.find_work(m, 0, None)? {
                let ret = cons(ContItem::Special(Frame::Idle), None);
                if let Some(f) = self.do_work(m, w, ret)? {
                    return Ok(f);
                }
                continue;
            }
            self.park(seen);
        }
    }

    /// Picks the next piece of work: a goal nobody has started (from any
    /// queue) or a closed segment of this agent's stack above `floor`.
    /// Inside a wait on `within`, only goals of that parcall's subtree
    /// qualify.
    fn find_work(
        &mut self,
        m: &mut M,
        floor: usize,
        within: Option<&Arc<Parcall>>,
    ) -> Result<Option<Work>, EngineError> {
        let spec = self.sh.cfg.speculative;
        let local = loop {
            let len = m.ss.len();
            let segs: Vec<GoalSegment> =
                m.ss.segments()
                    .iter()
                    .filter(|s| s.cp_base >= floor && s.cp_end.is_some())
                    .cloned()
                    .collect();
            let mut local = Vec::new();
            let mut dead = None;
            for s in &segs {
                let nested = segs
                    .iter()
                    .any(|t| t.cp_base < s.cp_base && s.cp_end.unwrap() <= t.cp_end.unwrap());
                if nested {
                    continue;
                }
                let lh = self
                    .local
                    .get(&s.handler)
                    .ok_or_else(|| internal("segment without goal record"))?;
                match classify(&lh.pc, lh.idx, s.handler, spec) {
                    Class::Dead => {
                        dead = Some(s.handler);
                        break;
                    }
                    Class::NotNow => {}
                    Class::Is(c) => local.push((c, s.handler, s.cp_end == Some(len), s.cp_base)),
                }
            }
            match dead {
                Some(g) => self.remove_segment(m, g)?,
                None => break local,
            }
        };
        let tasks = self.scan_queues(within, spec);
        let best = local
            .iter()
            .map(|l| l.0)
            .chain(tasks.iter().map(|t| t.0))
            .min();
        let Some(best) = best else {
            return Ok(None);
        };
        let on_top = local.iter().find(|l| l.2).copied();
        let mut trapped: Vec<_> = local.iter().filter(|l| !l.2).copied().collect();
        trapped.sort_by_key(|l| std::cmp::Reverse(l.3));
        if self.sh.cfg.priority {
            if let Some(l) = on_top.filter(|l| l.0 == best) {
                return Ok(Some(Work::Reenter(l.1, l.0, best, false)));
            }
            if let Some((c, t)) = tasks.into_iter().find(|t| t.0 == best) {
                return Ok(Some(Work::Start(t, c, best)));
            }
            if let Some(l) = trapped.into_iter().find(|l| l.0 == best) {
                return Ok(Some(Work::Reenter(l.1, l.0, best, true)));
            }
            Ok(None)
        } else {
            if let Some(l) = on_top {
                return Ok(Some(Work::Reenter(l.1, l.0, best, false)));
            }
            if let Some((c, t)) = tasks.into_iter().next() {
                return Ok(Some(Work::Start(t, c, best)));
            }
            if let Some(l) = trapped.into_iter().find(|l| l.0 <= 2) {
                return Ok(Some(Work::Reenter(l.1, l.0, best, true)));
            }
            Ok(None)
        }
    }

    /// Startable goals in queue order: own queue first, then the others
    /// round-robin from a random agent. Dead entries are dropped.
    fn scan_queues(&mut self, within: Option<&Arc<Parcall>>, spec: bool) -> Vec<(u8, Task)> {
        let n = self.sh.slots.len();
        let start = if n > 1 { self.rng.gen_range(0..n) } else { 0 };
        let mut order = vec![self.me as usize];
        order.extend(
            (0..n)
                .map(|i| (start + i) % n)
                .filter(|&i| i != self.me as usize),
        );
        let mut out = Vec::new();
        for a in order {
            let snapshot: Vec<(Arc<Parcall>, usize, Hid)> = {
                let q = self.sh.slots[a].queue.lock().unwrap();
                q.iter().map(|t| (t.pc.clone(), t.idx, t.gid)).collect()
            };
            let mut dead = Vec::new();
            for (pc, idx, gid) in snapshot {
                match classify(&pc, idx, gid, spec) {
                    Class::Dead => dead.push(gid),
                    Class::NotNow => {
                        let gone = {
                            let st = pc.lock();
                            st.hs[idx].gid != gid || st.hs[idx].st != HSt::NotExecuted
                        };
                        if gone {
                            dead.push(gid);
                        }
                    }
                    Class::Is(c) => {
                        let st_ok = pc.lock().hs[idx].st == HSt::NotExecuted;
                        if !st_ok {
                            dead.push(gid);
                            continue;
                        }
                        if within.is_some_and(|w| !pc.within(w.id)) {
                            continue;
                        }
                        let pred = pc.lock().hs[idx].goal.pred.clone();
                        if !self.allowed(&pred) {
                            continue;
                        }
                        out.push((c, Task { pc, idx, gid }));
                    }
                }
            }
            if !dead.is_empty() {
                let mut q = self.sh.slots[a].queue.lock().unwrap();
                q.retain(|t| !dead.contains(&t.gid));
            }
        }
        out
    }

    fn do_work(
        &mut self,
        m: &mut M,
        w: Work,
        ret: Cont<Frame>,
    ) -> Result<Option<Flow>, EngineError> {
        match w {
            Work::Start(t, class, best) => {
                if !self.claim(&t.pc, t.idx, t.gid) {
                    return Ok(None);
                }
                let goal = t.pc.lock().hs[t.idx].goal.clone();
                self.ev(
                    EventKind::Dispatch,
                    &t.pc,
                    t.idx,
                    t.gid,
                    class,
                    best,
                    goal.call.clone(),
                );
                self.started(&goal.pred);
                {
                    // drop the claimed entry wherever it is queued
                    for s in &self.sh.slots {
                        let mut g = s.queue.lock().unwrap();
                        if let Some(p) = g.iter().position(|x| x.gid == t.gid) {
                            g.remove(p);
                            break;
                        }
                    }
                }
                self.start(m, t.pc, t.idx, t.gid, ret)?;
                Ok(Some(Flow::Proceed))
            }
            Work::Reenter(g, class, best, trapped) => {
                let (pc, idx) = {
                    let lh = self
                        .local
                        .get(&g)
                        .ok_or_else(|| internal("goal record lost"))?;
                    (lh.pc.clone(), lh.idx)
                };
                let resumed = {
                    let mut st = pc.lock();
                    if !st.is_live(idx, g) {
                        return Ok(None);
                    }
                    let h = &mut st.hs[idx];
                    let resumed = match h.st {
                        HSt::Idle => false,
                        HSt::Suspended => true,
                        _ => return Ok(None),
                    };
                    h.st = HSt::Running;
                    h.executor = Some(self.me);
                    h.suspend_req = false;
                    resumed
                };
                if trapped {
                    m.ss.relocate_to_top(g)?;
                    self.ev(EventKind::Relocate, &pc, idx, g, class, best, String::new());
                }
                m.ss.reopen_segment(g)?;
                self.local.get_mut(&g).unwrap().ret = ret;
                self.chain.push(g);
                let kind = if resumed {
                    EventKind::Resume
                } else {
                    EventKind::Backtrack
                };
                self.ev(kind, &pc, idx, g, class, best, String::new());
                m.cont = None;
                Ok(Some(Flow::Fail))
            }
        }
    }

    /// Discards the segment of a goal nobody needs any more.
    fn remove_segment(&mut self, m: &mut M, g: Hid) -> Result<(), EngineError> {
        let mut dropped = Vec::new();
        m.ss.remove_segment(g, |cp| {
            if let CpKind::Special(c) = cp.kind {
                dropped.push(c);
            }
        })?;
        for c in dropped {
            self.discard_cp(c);
        }
        self.local.remove(&g);
        self.sh.ctr.removed.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn roll_injection(&self) -> bool {
        let Some(inj) = self.sh.cfg.inject else {
            return false;
        };
        if inj.suspend_per_mille == 0 || self.chain.is_empty() {
            return false;
        }
        let mut x = self.inj.get();
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.inj.set(x);
        if x % 1000 < inj.suspend_per_mille as u64 {
            self.injected.set(true);
            true
        } else {
            false
        }
    }

    /// The owner of `pc` may be speculating while `pc` became ready.
    fn wake_owner(&self, pc: &Parcall) {
        if pc.lock().ready() {
            self.sh.slots[pc.owner as usize]
                .attention
                .store(true, Ordering::SeqCst);
        }
    }

    /// Outermost running goal to suspend: one asked to suspend, or one
    /// that is not needed while the conjunction its agent waits on beneath
    /// it became ready.
    fn suspension_point(&self) -> Option<usize> {
        for (i, g) in self.chain.iter().enumerate() {
            let lh = &self.local[g];
            let req = std::mem::take(&mut lh.pc.lock().hs[lh.idx].suspend_req);
            let waiting = match lh.ret.as_ref().map(|c| &c.item) {
                Some(ContItem::Special(Frame::Await(p) | Frame::Sweep(p))) => p.lock().ready(),
                _ => false,
            };
            if (req || waiting) && !needed(&lh.pc, lh.idx, *g) {
                return Some(i);
            }
        }
        None
    }

    fn request_children_suspend(&self, g: Hid) {
        let kids: Vec<Arc<Parcall>> = self
            .local
            .values()
            .map(|l| l.pc.clone())
            .filter(|p| p.parent.as_ref().is_some_and(|q| q.2 == g))
            .collect();
        for p in kids {
            self.suspend_running(&p);
        }
    }
}

/// Builds a goal template against an environment without allocating:
/// template variables are read from the environment cells.
fn build_view(store: &TermStore, tpl: &Term, base: u32) -> Term {
    match tpl {
        Term::Var(v) if v.store == andante_core::term::TEMPLATE_STORE => {
            Term::Var(store.var_at(base + v.index))
        }
        Term::Struct(s) if !s.ground => Term::detached_struct(
            s.functor,
            s.args.iter().map(|a| build_view(store, a, base)).collect(),
        ),
        _ => tpl.clone(),
    }
}

enum Retry {
    Base(Hid),
    Release(Arc<Parcall>),
    Combine(Arc<Parcall>),
    Resume(Hid, Cont<Frame>),
    Recompute(Arc<Parcall>),
}

impl Hooks<Frame, Cp> for Host<'_> {
    fn par_conj(
        &mut self,
        m: &mut M,
        goals: &[ParGoal],
        base: u32,
        _cut: u64,
    ) -> Result<Flow, EngineError> {
        self.fork(m, goals, base)
    }

    fn frame(&mut self, m: &mut M, f: Frame) -> Result<Flow, EngineError> {
        match f {
            Frame::Exit(g) => self.exit(m, g),
            Frame::Sweep(p) => self.sweep(m, p),
            Frame::Await(p) => self.await_pc(m, p),
            Frame::Idle => self.idle(m),
        }
    }

    fn retry(&mut self, m: &mut M) -> Result<Flow, EngineError> {
        let r = match m.ss.top().map(|c| &c.kind) {
            Some(CpKind::Special(c)) => match c {
                Cp::Base(g) => Retry::Base(*g),
                Cp::Release(p) => Retry::Release(p.clone()),
                Cp::Combine(p, _) => Retry::Combine(p.clone()),
                Cp::Resume(g, k) => Retry::Resume(*g, k.clone()),
                Cp::Recompute(p) => Retry::Recompute(p.clone()),
            },
            _ => return Err(internal("retry without an engine choice point")),
        };
        match r {
            Retry::Base(g) => {
                m.ss.pop()?;
                m.ss.drop_segment(g);
                m.ss.prune_segments();
                if self.chain.last() != Some(&g) {
                    return Err(internal("exhausted goal is not the running one"));
                }
                self.chain.pop();
                let lh = self
                    .local
                    .remove(&g)
                    .ok_or_else(|| internal("goal record lost"))?;
                {
                    let mut st = lh.pc.lock();
                    let h = &mut st.hs[lh.idx];
                    if h.gid == g && h.st != HSt::Cancelled {
                        h.st = HSt::Done;
                    }
                }
                self.ev(EventKind::Exhaust, &lh.pc, lh.idx, g, 0, 0, String::new());
                self.wake_owner(&lh.pc);
                self.sh.notify();
                m.cont = lh.ret;
                Ok(Flow::Proceed)
            }
            Retry::Release(p) => {
                m.ss.pop()?;
                self.teardown(&p);
                Ok(Flow::Fail)
            }
            Retry::Combine(p) => self.ghost_retry(m, p),
            Retry::Resume(g, k) => {
                m.ss.pop()?;
                if self.chain.last() != Some(&g) {
                    return Err(internal("resumed goal is not the running one"));
                }
                m.cont = k;
                Ok(Flow::Proceed)
            }
            Retry::Recompute(p) => {
                m.ss.pop()?;
                {
                    let mut st = p.lock();
                    st.status = Status::Backtracking;
                    st.target = st.hs.len() - 1;
                }
                self.sh.notify();
                m.cont = cons(ContItem::Special(Frame::Await(p)), None);
                Ok(Flow::Proceed)
            }
        }
    }

    fn discard(&mut self, _m: &mut M, c: Cp) -> Result<(), EngineError> {
        self.discard_cp(c);
        Ok(())
    }

    fn attention(&self) -> bool {
        self.sh.stop.load(Ordering::Relaxed)
            || self.sh.slots[self.me as usize]
                .attention
                .load(Ordering::Relaxed)
            || self.roll_injection()
    }

    fn attend(&mut self, m: &mut M, resume: Cont<Frame>) -> Result<Option<Flow>, EngineError> {
        if self.sh.stop.load(Ordering::Relaxed) {
            return Ok(Some(Flow::Halt));
        }
        self.sh.slots[self.me as usize]
            .attention
            .store(false, Ordering::SeqCst);
        let injected = self.injected.replace(false);
        if self.chain.is_empty() {
            return Ok(None);
        }
        // cancellation wins over suspension
        let dead = self.chain.iter().position(|g| {
            let lh = &self.local[g];
            !lh.pc.lock().is_live(lh.idx, *g)
        });
        if let Some(j) = dead {
            return self.abandon(m, j).map(Some);
        }
        let mut at = self.suspension_point();
        if injected && at.is_none() {
            at = Some(self.chain.len() - 1);
        }
        let Some(j) = at else {
            return Ok(None);
        };
        let mut resume = resume;
        while self.chain.len() > j {
            let g = self.chain.pop().unwrap();
            m.ss.push(CpKind::Special(Cp::Resume(g, resume)));
            m.ss.close_segment(g)?;
            let lh = &self.local[&g];
            {
                let mut st = lh.pc.lock();
                let h = &mut st.hs[lh.idx];
                h.st = HSt::Suspended;
                h.suspend_req = false;
            }
            self.sh.ctr.suspensions.fetch_add(1, Ordering::Relaxed);
            self.ev(EventKind::Suspend, &lh.pc, lh.idx, g, 0, 0, String::new());
            resume = lh.ret.clone();
            self.request_children_suspend(g);
        }
        self.sh.notify();
        m.cont = resume;
        Ok(Some(Flow::Proceed))
    }

    fn pause(&mut self, _m: &mut M, us: u64) -> Result<PauseResult, EngineError> {
        let end = Instant::now() + Duration::from_micros(us);
        loop {
            let now = Instant::now();
            if now >= end {
                return Ok(PauseResult::Done);
            }
            if self.attention() {
                return Ok(PauseResult::Interrupted((end - now).as_micros() as u64));
            }
            std::thread::sleep((end - now).min(Duration::from_millis(1)));
        }
    }
}
