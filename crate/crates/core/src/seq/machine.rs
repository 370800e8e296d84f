//! The clause-resolution loop shared by the sequential solver and the
//! parallel agents.
//!
//! The machine runs a continuation (a persistent list of goals) against a
//! stack set. Parallel conjunctions, scheduler frames and engine-specific
//! choice points are delegated to a [`Hooks`] implementation.

use alloc::format;
use alloc::rc::Rc;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::EngineError;
use crate::reader::{symbols, ArgKey, Builtin, Node, NodeId, ParGoal, PredId, Program};
use crate::stackset::StackSet;
use crate::term::{Term, VarRef, TEMPLATE_STORE};

pub type Cont<F> = Option<Rc<ContCell<F>>>;

pub struct ContCell<F> {
    pub item: ContItem<F>,
    pub next: Cont<F>,
}

#[derive(Clone)]
pub enum ContItem<F> {
    /// Run a body node whose clause environment starts at cell `base`;
    /// a cut inside it prunes back to the choice point with serial `cut`.
    Goal {
        node: NodeId,
        base: u32,
        cut: u64,
    },
    Fail,
    /// Remaining microseconds of an interrupted `pause/1`.
    Pause(u64),
    Special(F),
}

pub fn cons<F>(item: ContItem<F>, next: Cont<F>) -> Cont<F> {
    Some(Rc::new(ContCell { item, next }))
}

pub enum CpKind<F, C> {
    /// Remaining clauses of a call. `next` is the next clause to try.
    Clauses {
        args: Rc<[Term]>,
        pred: PredId,
        next: usize,
        cont: Cont<F>,
        barrier: u64,
    },
    Between {
        var: Term,
        next: i64,
        hi: i64,
        cont: Cont<F>,
    },
    Special(C),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Flow {
    Proceed,
    Fail,
    Halt,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Outcome {
    Solution,
    Exhausted,
    Halted,
}

pub enum PauseResult {
    Done,
    /// Interrupted with this many microseconds left.
    Interrupted(u64),
}

/// Engine-specific behaviour plugged into the resolution loop.
pub trait Hooks<F, C> {
    /// A parallel conjunction is reached. The default runs the goals in
    /// order, as a plain conjunction.
    fn par_conj(
        &mut self,
        m: &mut Machine<F, C>,
        goals: &[ParGoal],
        base: u32,
        cut: u64,
    ) -> Result<Flow, EngineError> {
        for g in goals.iter().rev() {
            m.cont = cons(
                ContItem::Goal {
                    node: g.node,
                    base,
                    cut,
                },
                m.cont.take(),
            );
        }
        Ok(Flow::Proceed)
    }

    /// A special continuation item is reached.
    fn frame(&mut self, _m: &mut Machine<F, C>, _f: F) -> Result<Flow, EngineError> {
        Err(EngineError::internal("unexpected special frame"))
    }

    /// Backtracking reached a special choice point. Bindings and store have
    /// already been restored to its marks; the hook decides whether it
    /// stays.
    fn retry(&mut self, _m: &mut Machine<F, C>) -> Result<Flow, EngineError> {
        Err(EngineError::internal("unexpected special choice point"))
    }

    /// A special choice point was removed by a cut.
    fn discard(&mut self, _m: &mut Machine<F, C>, _c: C) -> Result<(), EngineError> {
        Ok(())
    }

    /// Cheap check for a pending event, made at every call and redo.
    fn attention(&self) -> bool {
        false
    }

    /// Handles a pending event. `resume` is the continuation that carries
    /// on the interrupted work. Returning `None` carries on at once.
    fn attend(
        &mut self,
        _m: &mut Machine<F, C>,
        _resume: Cont<F>,
    ) -> Result<Option<Flow>, EngineError> {
        Ok(None)
    }

    fn pause(&mut self, _m: &mut Machine<F, C>, _us: u64) -> Result<PauseResult, EngineError> {
        Ok(PauseResult::Done)
    }
}

pub struct Machine<F, C> {
    pub ss: StackSet<CpKind<F, C>>,
    pub cont: Cont<F>,
    pub steps: u64,
    pub budget: Option<u64>,
    pub prog: Arc<Program>,
    /// Microseconds of sleep per unit of a `pause/1` argument.
    pub pause_unit_us: u64,
}

enum Step {
    Flow(Flow),
    Exhausted,
}

impl<F: Clone, C> Machine<F, C> {
    pub fn new(prog: Arc<Program>, agent: u32) -> Self {
        Machine {
            ss: StackSet::new(agent),
            cont: None,
            steps: 0,
            budget: None,
            prog,
            pause_unit_us: 1000,
        }
    }

    /// Allocates the query's variables and sets the query as the
    /// continuation. Returns the base cell of the query variables.
    pub fn start(&mut self, root: NodeId, nvars: u32) -> u32 {
        let base = self.ss.store.alloc(nvars);
        let cut = self.ss.top_serial();
        self.cont = cons(
            ContItem::Goal {
                node: root,
                base,
                cut,
            },
            None,
        );
        base
    }

    pub fn var_terms(&self, base: u32, idx: &[u32]) -> Vec<Term> {
        idx.iter()
            .map(|i| Term::Var(self.ss.store.var_at(base + i)))
            .collect()
    }

    fn tick(&mut self) -> Result<(), EngineError> {
        self.steps += 1;
        match self.budget {
            Some(b) if self.steps > b => Err(EngineError::StepBudget { steps: self.steps }),
            _ => Ok(()),
        }
    }

    /// Runs until the continuation is empty (a solution), the stacks are
    /// exhausted, or a hook halts.
    pub fn run<H: Hooks<F, C>>(&mut self, h: &mut H) -> Result<Outcome, EngineError> {
        let prog = self.prog.clone();
        loop {
            let Some(cell) = self.cont.take() else {
                return Ok(Outcome::Solution);
            };
            let cell = match Rc::try_unwrap(cell) {
                Ok(c) => c,
                Err(shared) => ContCell {
                    item: shared.item.clone(),
                    next: shared.next.clone(),
                },
            };
            self.cont = cell.next;
            let mut flow = match cell.item {
                ContItem::Goal { node, base, cut } => self.exec(&prog, node, base, cut, h)?,
                ContItem::Fail => Flow::Fail,
                ContItem::Pause(us) => self.pause(us, h)?,
                ContItem::Special(f) => h.frame(self, f)?,
            };
            loop {
                match flow {
                    Flow::Proceed => break,
                    Flow::Halt => return Ok(Outcome::Halted),
                    Flow::Fail => match self.backtrack(&prog, h)? {
                        Step::Flow(f) => flow = f,
                        Step::Exhausted => return Ok(Outcome::Exhausted),
                    },
                }
            }
        }
    }

    /// Asks for the next solution after one was returned.
    pub fn redo<H: Hooks<F, C>>(&mut self, h: &mut H) -> Result<Outcome, EngineError> {
        self.cont = cons(ContItem::Fail, None);
        self.run(h)
    }

    fn push_goal(&mut self, node: NodeId, base: u32, cut: u64) {
        self.cont = cons(ContItem::Goal { node, base, cut }, self.cont.take());
    }

    fn exec<H: Hooks<F, C>>(
        &mut self,
        prog: &Program,
        node: NodeId,
        base: u32,
        cut: u64,
        h: &mut H,
    ) -> Result<Flow, EngineError> {
        match prog.node(node) {
            Node::True => {
                self.tick()?;
                Ok(Flow::Proceed)
            }
            Node::Fail => {
                self.tick()?;
                Ok(Flow::Fail)
            }
            Node::Cut => {
                self.tick()?;
                self.cut_to(cut, h)?;
                Ok(Flow::Proceed)
            }
            Node::Conj(ids) => {
                for id in ids.iter().rev() {
                    self.push_goal(*id, base, cut);
                }
                Ok(Flow::Proceed)
            }
            Node::ParConj(goals) => h.par_conj(self, goals, base, cut),
            Node::Builtin(b, args) => {
                self.tick()?;
                self.builtin(prog, *b, args, base, h)
            }
            Node::Call { goal, pred } => {
                if h.attention() {
                    let resume = cons(ContItem::Goal { node, base, cut }, self.cont.clone());
                    if let Some(f) = h.attend(self, resume)? {
                        return Ok(f);
                    }
                }
                let Some(pred) = *pred else {
                    let (f, n) = goal.key().unwrap();
                    return Err(EngineError::UnknownProcedure(format!(
                        "{}/{}",
                        prog.syms.name(f),
                        n
                    )));
                };
                let args: Rc<[Term]> = match goal {
                    Term::Struct(s) => s
                        .args
                        .iter()
                        .map(|a| self.ss.store.build(a, base))
                        .collect(),
                    _ => Rc::from(Vec::new()),
                };
                self.call(prog, pred, args)
            }
        }
    }

    fn matches(prog: &Program, pred: PredId, i: usize, key: Option<ArgKey>) -> bool {
        match (key, prog.pred(pred).clauses[i].key) {
            (Some(k), Some(c)) => k == c,
            _ => true,
        }
    }

    fn next_candidate(
        prog: &Program,
        pred: PredId,
        from: usize,
        key: Option<ArgKey>,
    ) -> Option<usize> {
        let n = prog.pred(pred).clauses.len();
        (from..n).find(|&i| Self::matches(prog, pred, i, key))
    }

    fn first_key(&self, args: &[Term]) -> Option<ArgKey> {
        args.first()
            .and_then(|a| ArgKey::of(self.ss.store.deref(a)))
    }

    fn call(
        &mut self,
        prog: &Program,
        pred: PredId,
        args: Rc<[Term]>,
    ) -> Result<Flow, EngineError> {
        let key = self.first_key(&args);
        let Some(first) = Self::next_candidate(prog, pred, 0, key) else {
            return Ok(Flow::Fail);
        };
        let barrier = self.ss.top_serial();
        let cont = self.cont.take();
        if let Some(next) = Self::next_candidate(prog, pred, first + 1, key) {
            self.ss.push(CpKind::Clauses {
                args: args.clone(),
                pred,
                next,
                cont: cont.clone(),
                barrier,
            });
        }
        self.try_clause(prog, pred, first, &args, barrier, cont)
    }

    fn try_clause(
        &mut self,
        prog: &Program,
        pred: PredId,
        i: usize,
        args: &[Term],
        barrier: u64,
        cont: Cont<F>,
    ) -> Result<Flow, EngineError> {
        self.tick()?;
        let c = &prog.pred(pred).clauses[i];
        let base = self.ss.store.alloc(c.nvars);
        if let Term::Struct(h) = &c.head {
            let ss = &mut self.ss;
            for (tpl, a) in h.args.iter().zip(args.iter()) {
                if !ss.store.unify_head(&mut ss.trail, tpl, a, base) {
                    return Ok(Flow::Fail);
                }
            }
        }
        self.cont = cont;
        if let Some(b) = c.body {
            self.push_goal(b, base, barrier);
        }
        Ok(Flow::Proceed)
    }

    /// Removes every choice point above the one with serial `barrier`
    /// (all of them for 0).
    pub fn cut_to<H: Hooks<F, C>>(&mut self, barrier: u64, h: &mut H) -> Result<(), EngineError> {
        while self.ss.top_serial() != barrier {
            if self.ss.is_empty() {
                return Err(EngineError::internal("cut barrier not on the stack"));
            }
            let cp = self.ss.pop()?;
            if let CpKind::Special(c) = cp.kind {
                h.discard(self, c)?;
            }
        }
        self.ss.prune_segments();
        Ok(())
    }

    fn backtrack<H: Hooks<F, C>>(
        &mut self,
        prog: &Program,
        h: &mut H,
    ) -> Result<Step, EngineError> {
        loop {
            let special = match self.ss.top() {
                None => return Ok(Step::Exhausted),
                Some(cp) => matches!(cp.kind, CpKind::Special(_)),
            };
            if special {
                self.ss.restore_top()?;
                return Ok(Step::Flow(h.retry(self)?));
            }
            if h.attention() {
                if let Some(f) = h.attend(self, cons(ContItem::Fail, None))? {
                    return Ok(Step::Flow(f));
                }
                // the hook may have pushed a choice point
                if matches!(self.ss.top().map(|c| &c.kind), Some(CpKind::Special(_))) {
                    continue;
                }
            }
            self.ss.restore_top()?;
            let top = self.ss.top_mut().unwrap();
            match &mut top.kind {
                CpKind::Clauses {
                    args,
                    pred,
                    next,
                    cont,
                    barrier,
                } => {
                    let (args, pred, i, cont, barrier) =
                        (args.clone(), *pred, *next, cont.clone(), *barrier);
                    let key = self.first_key(&args);
                    match Self::next_candidate(prog, pred, i + 1, key) {
                        Some(n) => {
                            if let Some(CpKind::Clauses { next, .. }) =
                                self.ss.top_mut().map(|c| &mut c.kind)
                            {
                                *next = n;
                            }
                        }
                        None => {
                            self.ss.pop()?;
                        }
                    }
                    match self.try_clause(prog, pred, i, &args, barrier, cont)? {
                        Flow::Fail => continue,
                        f => return Ok(Step::Flow(f)),
                    }
                }
                CpKind::Between {
                    var,
                    next,
                    hi,
                    cont,
                } => {
                    let (var, v, cont) = (var.clone(), *next, cont.clone());
                    if v >= *hi {
                        self.ss.pop()?;
                    } else {
                        *next += 1;
                    }
                    self.tick()?;
                    let ss = &mut self.ss;
                    if ss.store.unify(&mut ss.trail, &var, &Term::Int(v)) {
                        self.cont = cont;
                        return Ok(Step::Flow(Flow::Proceed));
                    }
                }
                CpKind::Special(_) => unreachable!(),
            }
        }
    }

    fn pause<H: Hooks<F, C>>(&mut self, mut us: u64, h: &mut H) -> Result<Flow, EngineError> {
        loop {
            match h.pause(self, us)? {
                PauseResult::Done => return Ok(Flow::Proceed),
                PauseResult::Interrupted(rem) => {
                    let resume = cons(ContItem::Pause(rem), self.cont.clone());
                    if let Some(f) = h.attend(self, resume)? {
                        return Ok(f);
                    }
                    us = rem;
                }
            }
        }
    }

    // ---- builtins ----

    fn build(&mut self, t: &Term, base: u32) -> Term {
        self.ss.store.build(t, base)
    }

    fn eval(&self, t: &Term, base: u32) -> Result<i64, EngineError> {
        let store = &self.ss.store;
        let t = match t {
            Term::Var(v) if v.store == TEMPLATE_STORE => {
                let cell = Term::Var(store.var_at(base + v.index));
                return self.eval(&store.deref(&cell).clone(), base);
            }
            other => store.deref(other),
        };
        let overflow = || EngineError::Arithmetic("integer overflow".into());
        match t {
            Term::Int(i) => Ok(*i),
            Term::Var(_) => Err(EngineError::Instantiation(
                "unbound variable in arithmetic".into(),
            )),
            Term::Atom(a) => Err(EngineError::Type(format!(
                "evaluable expected, found {}",
                self.prog.syms.name(*a)
            ))),
            Term::Struct(s) => {
                let op = s.functor;
                if s.args.len() == 1 && op == symbols::MINUS {
                    return self
                        .eval(&s.args[0], base)?
                        .checked_neg()
                        .ok_or_else(overflow);
                }
                if s.args.len() == 2 {
                    let a = self.eval(&s.args[0], base)?;
                    let b = self.eval(&s.args[1], base)?;
                    let r = match op {
                        symbols::PLUS => a.checked_add(b),
                        symbols::MINUS => a.checked_sub(b),
                        symbols::STAR => a.checked_mul(b),
                        symbols::IDIV | symbols::MOD if b == 0 => {
                            return Err(EngineError::Arithmetic("division by zero".into()))
                        }
                        symbols::IDIV => a.checked_div(b),
                        symbols::MOD => a.checked_rem(b).map(|m| {
                            if m != 0 && ((m < 0) != (b < 0)) {
                                m + b
                            } else {
                                m
                            }
                        }),
                        _ => {
                            return Err(EngineError::Type(format!(
                                "unknown evaluable {}/2",
                                self.prog.syms.name(op)
                            )))
                        }
                    };
                    return r.ok_or_else(overflow);
                }
                Err(EngineError::Type(format!(
                    "unknown evaluable {}/{}",
                    self.prog.syms.name(op),
                    s.args.len()
                )))
            }
        }
    }

    fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let ss = &mut self.ss;
        ss.store.unify(&mut ss.trail, a, b)
    }

    fn builtin<H: Hooks<F, C>>(
        &mut self,
        prog: &Program,
        b: Builtin,
        args: &[Term],
        base: u32,
        h: &mut H,
    ) -> Result<Flow, EngineError> {
        let ok = |b: bool| Ok(if b { Flow::Proceed } else { Flow::Fail });
        match b {
            Builtin::Unify => {
                let x = self.build(&args[0], base);
                let y = self.build(&args[1], base);
                ok(self.unify(&x, &y))
            }
            Builtin::Eq | Builtin::Neq => {
                let x = self.build(&args[0], base);
                let y = self.build(&args[1], base);
                let same = self.ss.store.identical(&x, &y);
                ok(same == (b == Builtin::Eq))
            }
            Builtin::Lt | Builtin::Gt | Builtin::Le | Builtin::Ge => {
                let x = self.eval(&args[0], base)?;
                let y = self.eval(&args[1], base)?;
                ok(match b {
                    Builtin::Lt => x < y,
                    Builtin::Gt => x > y,
                    Builtin::Le => x <= y,
                    _ => x >= y,
                })
            }
            Builtin::Is => {
                let v = self.eval(&args[1], base)?;
                let x = self.build(&args[0], base);
                ok(self.unify(&x, &Term::Int(v)))
            }
            Builtin::Pause => {
                let n = self.eval(&args[0], base)?;
                if n <= 0 {
                    return Ok(Flow::Proceed);
                }
                let us = (n as u64).saturating_mul(self.pause_unit_us);
                self.pause(us, h)
            }
            Builtin::Exists => {
                let x = self.build(&args[0], base);
                if !self.ss.store.is_deref_ground(&x) {
                    return Err(EngineError::Instantiation(
                        "exists/1 needs a ground name".into(),
                    ));
                }
                let r = self.ss.store.resolve(&x, &mut Vec::new());
                ok(prog.has_fact1(symbols::FILE, &r))
            }
            Builtin::Length => {
                let l = self.build(&args[0], base);
                let n = self.build(&args[1], base);
                self.length(&l, &n)
            }
            Builtin::Between => {
                let lo = self.eval(&args[0], base)?;
                let hi = self.eval(&args[1], base)?;
                let x = self.build(&args[2], base);
                match self.ss.store.deref(&x).clone() {
                    Term::Int(v) => ok(lo <= v && v <= hi),
                    Term::Var(_) => {
                        if lo > hi {
                            return Ok(Flow::Fail);
                        }
                        if lo < hi {
                            let cont = self.cont.clone();
                            self.ss.push(CpKind::Between {
                                var: x.clone(),
                                next: lo + 1,
                                hi,
                                cont,
                            });
                        }
                        ok(self.unify(&x, &Term::Int(lo)))
                    }
                    _ => Err(EngineError::Type("between/3 needs an integer".into())),
                }
            }
        }
    }

    fn length(&mut self, l: &Term, n: &Term) -> Result<Flow, EngineError> {
        let mut count: i64 = 0;
        let mut cur = l.clone();
        loop {
            let d = self.ss.store.deref(&cur).clone();
            match d {
                Term::Atom(a) if a == symbols::NIL => {
                    return Ok(if self.unify(n, &Term::Int(count)) {
                        Flow::Proceed
                    } else {
                        Flow::Fail
                    });
                }
                Term::Struct(s) if s.functor == symbols::DOT && s.args.len() == 2 => {
                    count += 1;
                    cur = s.args[1].clone();
                }
                Term::Var(_) => {
                    let want = match self.ss.store.deref(n) {
                        Term::Int(k) => *k,
                        _ => {
                            return Err(EngineError::Instantiation(
                                "length/2 needs a proper list or a length".into(),
                            ))
                        }
                    };
                    if want < count {
                        return Ok(Flow::Fail);
                    }
                    let mut tail = Term::Atom(symbols::NIL);
                    for _ in count..want {
                        let v = self.ss.store.new_var();
                        tail = self.ss.store.mk_struct(symbols::DOT, alloc::vec![v, tail]);
                    }
                    return Ok(if self.unify(&d, &tail) {
                        Flow::Proceed
                    } else {
                        Flow::Fail
                    });
                }
                _ => return Ok(Flow::Fail),
            }
        }
    }

    /// Resolves the given cells into a detached answer tuple.
    pub fn answer(&self, vars: &[VarRef]) -> Vec<Term> {
        let mut seen = Vec::new();
        vars.iter()
            .map(|v| self.ss.store.resolve(&Term::Var(*v), &mut seen))
            .collect()
    }
}
