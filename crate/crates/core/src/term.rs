//! Terms, binding cells, unification and answer-segment copying.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::EngineError;

/// Store id used for clause-template variables. Template variables are
/// never bound; they are resolved against an environment base.
pub const TEMPLATE_STORE: u32 = u32::MAX;

/// Store id for terms built outside any store (parser output, snapshots).
pub const DETACHED_STORE: u32 = u32::MAX - 1;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Sym(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VarRef {
    pub store: u32,
    pub index: u32,
}

/// Where and when a structure was created. `seq` is the store's creation
/// counter at the time, so it orders structures of one store.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Origin {
    pub store: u32,
    pub seq: u64,
}

pub struct Struct {
    pub functor: Sym,
    pub args: Box<[Term]>,
    pub origin: Origin,
    /// No variable occurs anywhere inside, bound or not.
    pub ground: bool,
}

#[derive(Clone)]
pub enum Term {
    Var(VarRef),
    Atom(Sym),
    Int(i64),
    Struct(Arc<Struct>),
}

impl Term {
    /// Physically ground: contains no variable cell at all.
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Atom(_) | Term::Int(_) => true,
            Term::Struct(s) => s.ground,
        }
    }

    pub fn detached_struct(functor: Sym, args: Vec<Term>) -> Term {
        let ground = args.iter().all(Term::is_ground);
        Term::Struct(Arc::new(Struct {
            functor,
            args: args.into_boxed_slice(),
            origin: Origin {
                store: DETACHED_STORE,
                seq: 0,
            },
            ground,
        }))
    }

    pub fn template_var(index: u32) -> Term {
        Term::Var(VarRef {
            store: TEMPLATE_STORE,
            index,
        })
    }

    /// Functor and arity of a callable term.
    pub fn key(&self) -> Option<(Sym, u32)> {
        match self {
            Term::Atom(a) => Some((*a, 0)),
            Term::Struct(s) => Some((s.functor, s.args.len() as u32)),
            _ => None,
        }
    }
}

/// Structural equality; variables compare by identity, origins are ignored.
impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::Var(a), Term::Var(b)) => a == b,
            (Term::Atom(a), Term::Atom(b)) => a == b,
            (Term::Int(a), Term::Int(b)) => a == b,
            (Term::Struct(a), Term::Struct(b)) => {
                Arc::ptr_eq(a, b) || (a.functor == b.functor && a.args == b.args)
            }
            _ => false,
        }
    }
}

impl Eq for Term {}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "_{}_{}", v.store, v.index),
            Term::Atom(a) => write!(f, "#{}", a.0),
            Term::Int(i) => write!(f, "{i}"),
            Term::Struct(s) => {
                write!(f, "#{}(", s.functor.0)?;
                for (i, a) in s.args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a:?}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct StoreMark {
    pub cells: u32,
    pub heap: u64,
}

/// Log of cells bound since some point; entries are cell indices of the
/// owning store. Cells are bound from unbound only, so no old value is kept.
#[derive(Default, Debug, Clone)]
pub struct Trail {
    entries: Vec<u32>,
}

impl Trail {
    pub fn new() -> Self {
        Trail::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn push(&mut self, index: u32) {
        self.entries.push(index);
    }

    /// Reorders the trail: entries `range` are moved to the end, the rest
    /// keep their relative order. Used by relocation.
    pub fn move_to_end(&mut self, start: usize, end: usize) {
        self.entries[start..].rotate_left(end - start);
    }

    /// Drops entries in `start..end` without undoing them.
    pub fn remove_range(&mut self, start: usize, end: usize) {
        self.entries.drain(start..end);
    }
}

/// Binding cells plus the creation counter for structures. Owned by one
/// agent at a time.
pub struct TermStore {
    id: u32,
    cells: Vec<Option<Term>>,
    heap: u64,
    pub occurs_check: bool,
}

impl TermStore {
    pub fn new(id: u32) -> Self {
        TermStore {
            id,
            cells: Vec::new(),
            heap: 0,
            occurs_check: false,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn cell_count(&self) -> u32 {
        self.cells.len() as u32
    }

    pub fn heap_top(&self) -> u64 {
        self.heap
    }

    pub fn mark(&self) -> StoreMark {
        StoreMark {
            cells: self.cells.len() as u32,
            heap: self.heap,
        }
    }

    /// Removes the cells created after `mark`. Structures are reference
    /// counted; the creation counter keeps growing so creation order stays
    /// total.
    pub fn truncate(&mut self, mark: StoreMark) {
        self.cells.truncate(mark.cells as usize);
    }

    pub fn new_var_ref(&mut self) -> VarRef {
        let index = self.cells.len() as u32;
        self.cells.push(None);
        VarRef {
            store: self.id,
            index,
        }
    }

    pub fn new_var(&mut self) -> Term {
        Term::Var(self.new_var_ref())
    }

    /// Allocates `n` consecutive unbound cells and returns the first index.
    pub fn alloc(&mut self, n: u32) -> u32 {
        let base = self.cells.len() as u32;
        self.cells.resize(self.cells.len() + n as usize, None);
        base
    }

    /// Initialises a freshly allocated, never-bound cell. Not a binding in
    /// the trail sense: the cell did not exist before the current marks.
    pub fn init_cell(&mut self, index: u32, value: Term) {
        debug_assert!(self.cells[index as usize].is_none());
        self.cells[index as usize] = Some(value);
    }

    pub fn var_at(&self, index: u32) -> VarRef {
        VarRef {
            store: self.id,
            index,
        }
    }

    pub fn binding(&self, v: VarRef) -> Option<&Term> {
        if v.store != self.id {
            return None;
        }
        self.cells.get(v.index as usize).and_then(|c| c.as_ref())
    }

    pub fn is_own(&self, v: VarRef) -> bool {
        v.store == self.id
    }

    pub fn mk_struct(&mut self, functor: Sym, args: Vec<Term>) -> Term {
        let ground = args.iter().all(Term::is_ground);
        let seq = self.heap;
        self.heap += 1;
        Term::Struct(Arc::new(Struct {
            functor,
            args: args.into_boxed_slice(),
            origin: Origin {
                store: self.id,
                seq,
            },
            ground,
        }))
    }

    /// Follows bindings to the first non-variable or the last unbound cell.
    /// Variables of other stores are returned as they are.
    pub fn deref<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            if v.store != self.id {
                return t;
            }
            match &self.cells[v.index as usize] {
                Some(b) => t = b,
                None => return t,
            }
        }
        t
    }

    fn bind(&mut self, trail: &mut Trail, v: VarRef, t: Term) {
        debug_assert!(self.cells[v.index as usize].is_none());
        self.cells[v.index as usize] = Some(t);
        trail.push(v.index);
    }

    /// Binds an unbound cell of this store and trails it. Fails with a
    /// reinstall conflict if the cell is already bound.
    pub fn bind_external(
        &mut self,
        trail: &mut Trail,
        v: VarRef,
        t: Term,
    ) -> Result<(), EngineError> {
        if v.store != self.id {
            return Err(EngineError::internal("binding a foreign cell"));
        }
        if self.cells[v.index as usize].is_some() {
            return Err(EngineError::ReinstallConflict(alloc::format!(
                "cell {} already bound",
                v.index
            )));
        }
        self.bind(trail, v, t);
        Ok(())
    }

    /// Undoes every binding above `mark` and truncates the trail to it.
    pub fn undo_to(&mut self, trail: &mut Trail, mark: usize) -> Result<(), EngineError> {
        if mark > trail.entries.len() {
            return Err(EngineError::internal("undo mark beyond trail top"));
        }
        for &i in &trail.entries[mark..] {
            if let Some(c) = self.cells.get_mut(i as usize) {
                *c = None;
            }
        }
        trail.entries.truncate(mark);
        Ok(())
    }

    /// Unbinds the cells recorded in `trail[start..end]` without touching
    /// the trail itself.
    pub fn unbind_range(&mut self, trail: &Trail, start: usize, end: usize) {
        for &i in &trail.entries[start..end] {
            if let Some(c) = self.cells.get_mut(i as usize) {
                *c = None;
            }
        }
    }

    fn occurs(&self, v: VarRef, t: &Term) -> bool {
        match self.deref(t) {
            Term::Var(w) => *w == v,
            Term::Struct(s) => s.args.iter().any(|a| self.occurs(v, a)),
            _ => false,
        }
    }

    /// Unifies `a` and `b`, trailing every binding. On failure all bindings
    /// made by this call are undone and the trail is back where it was.
    pub fn unify(&mut self, trail: &mut Trail, a: &Term, b: &Term) -> bool {
        let mark = trail.len();
        if self.unify_inner(trail, a, b) {
            true
        } else {
            let _ = self.undo_to(trail, mark);
            false
        }
    }

    fn bind_var(&mut self, trail: &mut Trail, v: VarRef, t: &Term) -> bool {
        if self.occurs_check && self.occurs(v, t) {
            return false;
        }
        self.bind(trail, v, t.clone());
        true
    }

    fn unify_inner(&mut self, trail: &mut Trail, a: &Term, b: &Term) -> bool {
        let mut a = self.deref(a).clone();
        let mut b = self.deref(b).clone();
        loop {
            match (&a, &b) {
                (Term::Var(x), Term::Var(y)) => {
                    if x == y {
                        return true;
                    }
                    let (x, y) = (*x, *y);
                    let x_own = x.store == self.id;
                    let y_own = y.store == self.id;
                    return match (x_own, y_own) {
                        (true, true) => {
                            if x.index > y.index {
                                self.bind(trail, x, Term::Var(y));
                            } else {
                                self.bind(trail, y, Term::Var(x));
                            }
                            true
                        }
                        (true, false) => {
                            self.bind(trail, x, Term::Var(y));
                            true
                        }
                        (false, true) => {
                            self.bind(trail, y, Term::Var(x));
                            true
                        }
                        (false, false) => false,
                    };
                }
                (Term::Var(x), t) if x.store == self.id => {
                    let x = *x;
                    return self.bind_var(trail, x, &t.clone());
                }
                (t, Term::Var(y)) if y.store == self.id => {
                    let y = *y;
                    return self.bind_var(trail, y, &t.clone());
                }
                (Term::Atom(p), Term::Atom(q)) => return p == q,
                (Term::Int(p), Term::Int(q)) => return p == q,
                (Term::Struct(s), Term::Struct(t)) => {
                    if Arc::ptr_eq(s, t) {
                        return true;
                    }
                    if s.functor != t.functor || s.args.len() != t.args.len() {
                        return false;
                    }
                    let n = s.args.len();
                    let (s, t) = (s.clone(), t.clone());
                    for i in 0..n - 1 {
                        if !self.unify_inner(trail, &s.args[i], &t.args[i]) {
                            return false;
                        }
                    }
                    a = self.deref(&s.args[n - 1]).clone();
                    b = self.deref(&t.args[n - 1]).clone();
                }
                _ => return false,
            }
        }
    }

    /// Instantiates a clause template: template variable `i` becomes cell
    /// `base + i` (or its current value if bound). Ground template
    /// structures are shared.
    pub fn build(&mut self, tpl: &Term, base: u32) -> Term {
        match tpl {
            Term::Var(v) if v.store == TEMPLATE_STORE => {
                let r = VarRef {
                    store: self.id,
                    index: base + v.index,
                };
                let t = Term::Var(r);
                self.deref(&t).clone()
            }
            Term::Struct(s) if !s.ground => {
                let args = s.args.iter().map(|a| self.build(a, base)).collect();
                self.mk_struct(s.functor, args)
            }
            _ => tpl.clone(),
        }
    }

    /// Unifies a clause-template term (environment at `base`) with a live
    /// term without building the template first. Bindings are trailed; on
    /// failure the caller undoes to its own mark.
    pub fn unify_head(&mut self, trail: &mut Trail, tpl: &Term, t: &Term, base: u32) -> bool {
        let mut tpl = tpl.clone();
        let mut t = t.clone();
        loop {
            match &tpl {
                Term::Var(v) if v.store == TEMPLATE_STORE => {
                    let cell = Term::Var(VarRef {
                        store: self.id,
                        index: base + v.index,
                    });
                    return self.unify_inner(trail, &cell, &t);
                }
                Term::Struct(s) if !s.ground => {
                    let d = self.deref(&t).clone();
                    match &d {
                        Term::Var(x) if x.store == self.id => {
                            let x = *x;
                            let built = self.build(&tpl, base);
                            return self.bind_var(trail, x, &built);
                        }
                        Term::Struct(u) => {
                            if u.functor != s.functor || u.args.len() != s.args.len() {
                                return false;
                            }
                            let n = s.args.len();
                            let (s, u) = (s.clone(), u.clone());
                            for i in 0..n - 1 {
                                if !self.unify_head(trail, &s.args[i], &u.args[i], base) {
                                    return false;
                                }
                            }
                            tpl = s.args[n - 1].clone();
                            t = u.args[n - 1].clone();
                        }
                        _ => return false,
                    }
                }
                _ => return self.unify_inner(trail, &tpl, &t),
            }
        }
    }

    /// Structural identity after dereferencing (`==/2`).
    pub fn identical(&self, a: &Term, b: &Term) -> bool {
        let a = self.deref(a);
        let b = self.deref(b);
        match (a, b) {
            (Term::Var(x), Term::Var(y)) => x == y,
            (Term::Atom(x), Term::Atom(y)) => x == y,
            (Term::Int(x), Term::Int(y)) => x == y,
            (Term::Struct(s), Term::Struct(t)) => {
                Arc::ptr_eq(s, t)
                    || (s.functor == t.functor
                        && s.args.len() == t.args.len()
                        && s.args
                            .iter()
                            .zip(t.args.iter())
                            .all(|(x, y)| self.identical(x, y)))
            }
            _ => false,
        }
    }

    /// True if no unbound variable is reachable from `t`.
    pub fn is_deref_ground(&self, t: &Term) -> bool {
        match self.deref(t) {
            Term::Var(_) => false,
            Term::Struct(s) => s.ground || s.args.iter().all(|a| self.is_deref_ground(a)),
            _ => true,
        }
    }

    /// Collects the distinct unbound variables reachable from `t`, in
    /// first-occurrence order.
    pub fn unbound_vars(&self, t: &Term, out: &mut Vec<VarRef>) {
        match self.deref(t) {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Term::Struct(s) if !s.ground => {
                for a in s.args.iter() {
                    self.unbound_vars(a, out);
                }
            }
            _ => {}
        }
    }

    /// Fully dereferenced, detached copy of `t`. Unbound variables become
    /// detached variables numbered by position in `vars`, which is shared
    /// across the terms of one answer.
    pub fn resolve(&self, t: &Term, vars: &mut Vec<VarRef>) -> Term {
        match self.deref(t) {
            Term::Var(v) => {
                let i = match vars.iter().position(|w| w == v) {
                    Some(i) => i,
                    None => {
                        vars.push(*v);
                        vars.len() - 1
                    }
                };
                Term::Var(VarRef {
                    store: DETACHED_STORE,
                    index: i as u32,
                })
            }
            Term::Struct(s) if !s.ground => {
                let args = s.args.iter().map(|a| self.resolve(a, vars)).collect();
                Term::detached_struct(s.functor, args)
            }
            other => other.clone(),
        }
    }

    /// True if `o` was created before `mark` in this store, or elsewhere.
    pub fn is_older(&self, o: Origin, mark: StoreMark) -> bool {
        o.store != self.id || o.seq < mark.heap
    }

    /// Copies the answer of a goal that started at `mark`: for each cell in
    /// `vars` that is bound, its value with every structure created at or
    /// after `mark` deep-copied into a detached snapshot. Older structures
    /// are referenced, unbound cells created after the mark become fresh
    /// snapshot variables, and references to cells of `vars` become
    /// external slots. Sharing among copied structures is preserved.
    pub fn copy_answer_segment(&self, vars: &[VarRef], mark: StoreMark) -> SegmentCopy {
        let mut cx = CopyCx {
            store: self,
            vars,
            mark,
            fresh: BTreeMap::new(),
            shared: BTreeMap::new(),
            nodes: 0,
            bytes: 0,
        };
        let mut entries = Vec::new();
        for (i, v) in vars.iter().enumerate() {
            let t = Term::Var(*v);
            let d = self.deref(&t);
            if let Term::Var(w) = d {
                if w == v {
                    continue;
                }
            }
            let s = cx.snap(d);
            entries.push((i as u32, s));
        }
        SegmentCopy {
            entries,
            fresh: cx.fresh.len() as u32,
            nodes: cx.nodes,
            bytes: cx.bytes,
        }
    }
}

/// Snapshot term: immutable, detached from any store, readable by any agent.
#[derive(Clone, Debug)]
pub enum Snap {
    /// A pre-existing term kept by reference.
    Ref(Term),
    Atom(Sym),
    Int(i64),
    /// A variable created by the goal and unbound at capture time.
    Fresh(u32),
    /// One of the external cells the snapshot was taken over.
    Ext(u32),
    Node(Arc<SnapNode>),
}

#[derive(Debug)]
pub struct SnapNode {
    pub functor: Sym,
    pub args: Box<[Snap]>,
}

impl Snap {
    /// A compound snapshot; ground ones become a detached structure that
    /// every store can share without rebuilding it.
    pub fn compound(functor: Sym, args: Vec<Snap>) -> Snap {
        let ground = args.iter().all(|a| match a {
            Snap::Ref(t) => t.is_ground(),
            Snap::Atom(_) | Snap::Int(_) => true,
            _ => false,
        });
        if !ground {
            return Snap::node(functor, args);
        }
        let args: Box<[Term]> = args
            .into_iter()
            .map(|a| match a {
                Snap::Ref(t) => t,
                Snap::Atom(x) => Term::Atom(x),
                Snap::Int(i) => Term::Int(i),
                _ => unreachable!(),
            })
            .collect();
        Snap::Ref(Term::Struct(Arc::new(Struct {
            functor,
            args,
            origin: Origin {
                store: DETACHED_STORE,
                seq: 0,
            },
            ground: true,
        })))
    }

    pub fn node(functor: Sym, args: Vec<Snap>) -> Snap {
        Snap::Node(Arc::new(SnapNode {
            functor,
            args: args.into_boxed_slice(),
        }))
    }
}

/// Result of [`TermStore::copy_answer_segment`].
#[derive(Clone, Debug, Default)]
pub struct SegmentCopy {
    /// (position in the external-cell list, value) for each bound cell.
    pub entries: Vec<(u32, Snap)>,
    /// Number of distinct fresh variables.
    pub fresh: u32,
    /// Structures deep-copied.
    pub nodes: usize,
    /// Approximate bytes held by the copied structures.
    pub bytes: usize,
}

struct CopyCx<'a> {
    store: &'a TermStore,
    vars: &'a [VarRef],
    mark: StoreMark,
    fresh: BTreeMap<VarRef, u32>,
    shared: BTreeMap<usize, Snap>,
    nodes: usize,
    bytes: usize,
}

impl CopyCx<'_> {
    fn snap(&mut self, t: &Term) -> Snap {
        let store = self.store;
        match store.deref(t) {
            Term::Var(v) => {
                if let Some(p) = self.vars.iter().position(|x| x == v) {
                    Snap::Ext(p as u32)
                } else if v.store == store.id && v.index >= self.mark.cells {
                    let n = self.fresh.len() as u32;
                    Snap::Fresh(*self.fresh.entry(*v).or_insert(n))
                } else {
                    Snap::Ref(Term::Var(*v))
                }
            }
            Term::Atom(a) => Snap::Atom(*a),
            Term::Int(i) => Snap::Int(*i),
            Term::Struct(s) => {
                if store.is_older(s.origin, self.mark) {
                    return Snap::Ref(Term::Struct(s.clone()));
                }
                // a structure held in one place cannot be met twice
                let key = (Arc::strong_count(s) > 1).then_some(Arc::as_ptr(s) as usize);
                if let Some(n) = key.and_then(|k| self.shared.get(&k)) {
                    return n.clone();
                }
                let args: Vec<Snap> = s.args.iter().map(|a| self.snap(a)).collect();
                self.nodes += 1;
                self.bytes +=
                    core::mem::size_of::<SnapNode>() + args.len() * core::mem::size_of::<Snap>();
                let n = Snap::compound(s.functor, args);
                if let Some(k) = key {
                    self.shared.insert(k, n.clone());
                }
                n
            }
        }
    }
}

/// Rebuilds snapshot terms inside a store. One instance per reinstalled
/// answer so fresh variables and shared nodes map consistently across its
/// entries.
pub struct Instantiator<'a> {
    pub ext: &'a [VarRef],
    fresh: Vec<Option<Term>>,
    shared: BTreeMap<usize, Term>,
    pub built: usize,
}

impl<'a> Instantiator<'a> {
    pub fn new(ext: &'a [VarRef], fresh: u32) -> Self {
        Instantiator {
            ext,
            fresh: alloc::vec![None; fresh as usize],
            shared: BTreeMap::new(),
            built: 0,
        }
    }

    pub fn build(&mut self, store: &mut TermStore, s: &Snap) -> Term {
        match s {
            Snap::Ref(t) => t.clone(),
            Snap::Atom(a) => Term::Atom(*a),
            Snap::Int(i) => Term::Int(*i),
            Snap::Ext(i) => Term::Var(self.ext[*i as usize]),
            Snap::Fresh(k) => {
                let k = *k as usize;
                if k >= self.fresh.len() {
                    self.fresh.resize(k + 1, None);
                }
                if let Some(t) = &self.fresh[k] {
                    return t.clone();
                }
                let v = store.new_var();
                self.fresh[k] = Some(v.clone());
                v
            }
            Snap::Node(n) => {
                let key = Arc::as_ptr(n) as usize;
                if let Some(t) = self.shared.get(&key) {
                    return t.clone();
                }
                let args = n.args.iter().map(|a| self.build(store, a)).collect();
                let t = store.mk_struct(n.functor, args);
                self.built += 1;
                self.shared.insert(key, t.clone());
                t
            }
        }
    }
}
