//! Per-conjunction answer store.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::EngineError;
use crate::term::{Instantiator, SegmentCopy, Snap, StoreMark, TermStore, Trail, VarRef};

/// One captured answer of one parallel goal, expressed over the goal's
/// external cells.
#[derive(Debug)]
pub struct MemoAnswer {
    pub seq: u32,
    /// (external slot, value) for every slot the answer binds.
    pub entries: Vec<(u32, Snap)>,
    pub fresh: u32,
    pub bytes: usize,
    pub nodes: usize,
}

impl MemoAnswer {
    pub fn from_copy(seq: u32, copy: SegmentCopy) -> Self {
        MemoAnswer {
            seq,
            entries: copy.entries,
            fresh: copy.fresh,
            bytes: copy.bytes,
            nodes: copy.nodes,
        }
    }

    /// Binds `ext[i]` to the rebuilt value of every entry, trailing each
    /// binding. The cells must be unbound.
    pub fn reinstall(
        &self,
        store: &mut TermStore,
        trail: &mut Trail,
        ext: &[VarRef],
    ) -> Result<usize, EngineError> {
        let mut inst = Instantiator::new(ext, self.fresh);
        for (slot, snap) in &self.entries {
            let cell = *ext
                .get(*slot as usize)
                .ok_or_else(|| EngineError::internal("answer slot out of range"))?;
            let value = inst.build(store, snap);
            store.bind_external(trail, cell, value)?;
        }
        Ok(inst.built)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemoStats {
    pub stored: u64,
    pub bytes: u64,
    pub reinstalls: u64,
}

/// Stored answers of one parallel conjunction, one list per goal.
#[derive(Debug)]
pub struct MemoArea {
    owner: u64,
    answers: Vec<Vec<Arc<MemoAnswer>>>,
    bytes: usize,
    stats: MemoStats,
    released: bool,
}

impl MemoArea {
    pub fn new(owner: u64, goals: usize) -> Self {
        MemoArea {
            owner,
            answers: (0..goals).map(|_| Vec::new()).collect(),
            bytes: 0,
            stats: MemoStats::default(),
            released: false,
        }
    }

    pub fn owner(&self) -> u64 {
        self.owner
    }

    fn check(&self) -> Result<(), EngineError> {
        if self.released {
            Err(EngineError::internal(format!(
                "memo area of conjunction {} used after release",
                self.owner
            )))
        } else {
            Ok(())
        }
    }

    /// Stores a captured answer for goal `h` and returns its sequence number.
    pub fn memoize(&mut self, h: usize, copy: SegmentCopy) -> Result<Arc<MemoAnswer>, EngineError> {
        self.check()?;
        let list = self
            .answers
            .get_mut(h)
            .ok_or_else(|| EngineError::internal("no such goal in conjunction"))?;
        let a = Arc::new(MemoAnswer::from_copy(list.len() as u32, copy));
        self.bytes += a.bytes;
        self.stats.stored += 1;
        self.stats.bytes += a.bytes as u64;
        list.push(a.clone());
        Ok(a)
    }

    /// Captures the current bindings of `ext` (cells older than `mark`) and
    /// stores them as the next answer of goal `h`.
    pub fn memoize_from(
        &mut self,
        h: usize,
        store: &TermStore,
        ext: &[VarRef],
        mark: StoreMark,
    ) -> Result<Arc<MemoAnswer>, EngineError> {
        let copy = store.copy_answer_segment(ext, mark);
        self.memoize(h, copy)
    }

    pub fn answer(&self, h: usize, k: usize) -> Result<&Arc<MemoAnswer>, EngineError> {
        self.check()?;
        self.answers
            .get(h)
            .and_then(|l| l.get(k))
            .ok_or_else(|| EngineError::internal(format!("no stored answer {k} for goal {h}")))
    }

    pub fn count(&self, h: usize) -> usize {
        self.answers.get(h).map_or(0, |l| l.len())
    }

    /// Reinstalls answer `k` of goal `h` onto `ext` cells of `store`.
    pub fn reinstall(
        &mut self,
        h: usize,
        k: usize,
        store: &mut TermStore,
        trail: &mut Trail,
        ext: &[VarRef],
    ) -> Result<(), EngineError> {
        let a = self.answer(h, k)?.clone();
        a.reinstall(store, trail, ext)?;
        self.stats.reinstalls += 1;
        Ok(())
    }

    pub fn note_reinstall(&mut self) {
        self.stats.reinstalls += 1;
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn stats(&self) -> MemoStats {
        self.stats
    }

    pub fn is_released(&self) -> bool {
        self.released
    }

    /// Drops every stored answer. Allowed once.
    pub fn release(&mut self) -> Result<(), EngineError> {
        self.check()?;
        for l in &mut self.answers {
            l.clear();
        }
        self.bytes = 0;
        self.released = true;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{Sym, Term};
    use alloc::vec;

    #[test]
    fn empty_answer_reinstall_is_noop() {
        let mut s = TermStore::new(0);
        let mut tr = Trail::new();
        let x = s.new_var_ref();
        let mark = s.mark();
        let mut m = MemoArea::new(1, 1);
        m.memoize_from(0, &s, &[x], mark).unwrap();
        m.reinstall(0, 0, &mut s, &mut tr, &[x]).unwrap();
        assert!(tr.is_empty());
    }

    #[test]
    fn release_lifecycle() {
        let mut m = MemoArea::new(1, 2);
        m.release().unwrap();
        assert!(m.release().is_err());
        assert!(m.answer(0, 0).is_err());

        let mut s = TermStore::new(0);
        let mut tr = Trail::new();
        let x = s.new_var_ref();
        let mark = s.mark();
        let f = s.mk_struct(Sym(1), vec![Term::Int(1)]);
        assert!(s.unify(&mut tr, &Term::Var(x), &f));
        let mut m = MemoArea::new(2, 1);
        m.memoize_from(0, &s, &[x], mark).unwrap();
        m.memoize_from(0, &s, &[x], mark).unwrap();
        assert!(m.bytes() > 0);
        m.release().unwrap();
        assert_eq!(m.bytes(), 0);
    }

    #[test]
    fn reinstall_onto_bound_cell_is_a_conflict() {
        let mut s = TermStore::new(0);
        let mut tr = Trail::new();
        let x = s.new_var_ref();
        let mark = s.mark();
        assert!(s.unify(&mut tr, &Term::Var(x), &Term::Int(1)));
        let mut m = MemoArea::new(1, 1);
        m.memoize_from(0, &s, &[x], mark).unwrap();
        let e = m.reinstall(0, 0, &mut s, &mut tr, &[x]).unwrap_err();
        assert!(e.is_invariant_violation());
    }
}
