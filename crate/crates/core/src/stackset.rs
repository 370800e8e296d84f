//! One agent's execution stacks: choice points, trail and term store, plus
//! the goal segments of the parallel goals that ran on them.

use alloc::vec::Vec;

use crate::error::EngineError;
use crate::term::{StoreMark, TermStore, Trail};

#[derive(Debug)]
pub struct ChoicePoint<K> {
    pub kind: K,
    pub trail_mark: usize,
    pub store_mark: StoreMark,
    /// Unique per stack set; survives relocation. Used as a cut barrier.
    pub serial: u64,
}

/// The stack region of one parallel goal execution. `cp_end` and
/// `trail_end` are `None` while the region extends to the tops (the goal
/// is running or is being backtracked into).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoalSegment {
    pub handler: u64,
    pub cp_base: usize,
    pub cp_end: Option<usize>,
    pub trail_base: usize,
    pub trail_end: Option<usize>,
    /// Store tops when the goal started; bounds answer capture.
    pub start: StoreMark,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Backtrack {
    /// The top choice point produced its next alternative.
    Retried,
    /// The top choice point had no alternative left and was popped. Carries
    /// the handler whose segment base it was, if any.
    Exhausted(Option<u64>),
    Empty,
}

pub struct StackSet<K> {
    pub agent: u32,
    pub store: TermStore,
    pub trail: Trail,
    cps: Vec<ChoicePoint<K>>,
    segments: Vec<GoalSegment>,
    next_serial: u64,
    relocations: u64,
}

impl<K> StackSet<K> {
    pub fn new(agent: u32) -> Self {
        StackSet {
            agent,
            store: TermStore::new(agent),
            trail: Trail::new(),
            cps: Vec::new(),
            segments: Vec::new(),
            next_serial: 1,
            relocations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.cps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cps.is_empty()
    }

    /// Pushes a choice point recording the current trail and store tops and
    /// returns its serial.
    pub fn push(&mut self, kind: K) -> u64 {
        let serial = self.next_serial;
        self.next_serial += 1;
        self.cps.push(ChoicePoint {
            kind,
            trail_mark: self.trail.len(),
            store_mark: self.store.mark(),
            serial,
        });
        serial
    }

    pub fn pop(&mut self) -> Result<ChoicePoint<K>, EngineError> {
        self.cps
            .pop()
            .ok_or_else(|| EngineError::internal("pop on empty choice-point stack"))
    }

    pub fn top(&self) -> Option<&ChoicePoint<K>> {
        self.cps.last()
    }

    pub fn top_mut(&mut self) -> Option<&mut ChoicePoint<K>> {
        self.cps.last_mut()
    }

    pub fn top_serial(&self) -> u64 {
        self.cps.last().map_or(0, |c| c.serial)
    }

    pub fn get(&self, i: usize) -> Option<&ChoicePoint<K>> {
        self.cps.get(i)
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut ChoicePoint<K>> {
        self.cps.get_mut(i)
    }

    pub fn cps(&self) -> &[ChoicePoint<K>] {
        &self.cps
    }

    pub fn index_of_serial(&self, serial: u64) -> Option<usize> {
        self.cps.iter().rposition(|c| c.serial == serial)
    }

    /// Undoes bindings and reclaims cells created since the top choice
    /// point was pushed.
    pub fn restore_top(&mut self) -> Result<(), EngineError> {
        let (t, s) = match self.cps.last() {
            Some(c) => (c.trail_mark, c.store_mark),
            None => return Ok(()),
        };
        self.store.undo_to(&mut self.trail, t)?;
        self.store.truncate(s);
        Ok(())
    }

    /// Restores the top choice point and lets `advance` move its cursor. If
    /// `advance` reports no alternative the choice point is popped.
    pub fn backtrack_top(
        &mut self,
        advance: impl FnOnce(&mut K) -> bool,
    ) -> Result<Backtrack, EngineError> {
        if self.cps.is_empty() {
            return Ok(Backtrack::Empty);
        }
        self.restore_top()?;
        let top = self.cps.len() - 1;
        if advance(&mut self.cps[top].kind) {
            return Ok(Backtrack::Retried);
        }
        self.cps.pop();
        let h = self
            .segments
            .iter()
            .find(|s| s.cp_base == top)
            .map(|s| s.handler);
        Ok(Backtrack::Exhausted(h))
    }

    pub fn relocations(&self) -> u64 {
        self.relocations
    }

    // ---- goal segments ----

    /// Starts a segment for `handler` whose base is the next choice point
    /// pushed.
    pub fn open_segment(&mut self, handler: u64, start: StoreMark) {
        self.segments.push(GoalSegment {
            handler,
            cp_base: self.cps.len(),
            cp_end: None,
            trail_base: self.trail.len(),
            trail_end: None,
            start,
        });
    }

    pub fn segment(&self, handler: u64) -> Option<&GoalSegment> {
        self.segments.iter().find(|s| s.handler == handler)
    }

    pub fn segments(&self) -> &[GoalSegment] {
        &self.segments
    }

    /// Freezes the segment's extent at the current tops.
    pub fn close_segment(&mut self, handler: u64) -> Result<(), EngineError> {
        let (c, t) = (self.cps.len(), self.trail.len());
        let s = self.segment_mut(handler)?;
        s.cp_end = Some(c);
        s.trail_end = Some(t);
        Ok(())
    }

    /// Lets the segment extend to the tops again. It must be on top.
    pub fn reopen_segment(&mut self, handler: u64) -> Result<(), EngineError> {
        if self.is_trapped(handler) {
            return Err(EngineError::internal("reopening a trapped segment"));
        }
        let s = self.segment_mut(handler)?;
        s.cp_end = None;
        s.trail_end = None;
        Ok(())
    }

    pub fn drop_segment(&mut self, handler: u64) {
        self.segments.retain(|s| s.handler != handler);
    }

    fn segment_mut(&mut self, handler: u64) -> Result<&mut GoalSegment, EngineError> {
        self.segments
            .iter_mut()
            .find(|s| s.handler == handler)
            .ok_or_else(|| EngineError::internal("no segment for handler"))
    }

    /// A closed segment with choice points of other goals above it.
    pub fn is_trapped(&self, handler: u64) -> bool {
        match self.segment(handler) {
            Some(GoalSegment {
                cp_end: Some(e), ..
            }) => *e != self.cps.len(),
            _ => false,
        }
    }

    /// Moves a trapped goal's choice points and trail entries to the tops,
    /// shifting everything that was above it down. Term stores are not
    /// moved; the moved choice points get the current store tops as marks.
    pub fn relocate_to_top(&mut self, handler: u64) -> Result<(), EngineError> {
        let seg = self
            .segment(handler)
            .ok_or_else(|| EngineError::internal("no segment for handler"))?;
        if seg.cp_end.is_none() {
            return Err(EngineError::internal("relocating a running goal"));
        }
        if !self.is_trapped(handler) {
            return Ok(());
        }
        self.move_to_top(handler)?;
        self.relocations += 1;
        Ok(())
    }

    fn move_to_top(&mut self, handler: u64) -> Result<(), EngineError> {
        let seg = self
            .segment(handler)
            .cloned()
            .ok_or_else(|| EngineError::internal("no segment for handler"))?;
        let (cb, ce) = (seg.cp_base, seg.cp_end.unwrap_or(self.cps.len()));
        let (tb, te) = (seg.trail_base, seg.trail_end.unwrap_or(self.trail.len()));
        let clen = self.cps.len();
        let tlen = self.trail.len();
        if ce == clen {
            return Ok(());
        }
        let cshift = ce - cb;
        let tshift = te - tb;
        let top_marks = self.store.mark();

        // 1 and 2: the slice goes to the top, what was above moves down.
        self.cps[cb..].rotate_left(cshift);
        self.trail.move_to_end(tb, te);

        // 3: remap trail marks.
        for cp in &mut self.cps[cb..clen - cshift] {
            cp.trail_mark -= tshift;
        }
        for cp in &mut self.cps[clen - cshift..] {
            cp.trail_mark = cp.trail_mark - tb + (tlen - tshift);
            // 4: stores stay put; backtracking the moved goal must not
            // reclaim objects of the goals that are now below it.
            cp.store_mark = top_marks;
        }

        for s in &mut self.segments {
            let end = s.cp_end.unwrap_or(clen);
            if s.cp_base >= cb && end <= ce {
                s.cp_base = s.cp_base - cb + (clen - cshift);
                s.cp_end = s.cp_end.map(|e| e - cb + (clen - cshift));
                s.trail_base = s.trail_base - tb + (tlen - tshift);
                s.trail_end = s.trail_end.map(|e| e - tb + (tlen - tshift));
            } else if s.cp_base >= ce {
                s.cp_base -= cshift;
                s.cp_end = s.cp_end.map(|e| e - cshift);
                s.trail_base -= tshift;
                s.trail_end = s.trail_end.map(|e| e - tshift);
            }
        }
        Ok(())
    }

    /// Discards a goal's whole segment wherever it is: the segment is moved
    /// to the top, then every choice point in it is popped (each passed to
    /// `discard`) and its bindings undone. Not counted as a relocation.
    pub fn remove_segment(
        &mut self,
        handler: u64,
        mut discard: impl FnMut(ChoicePoint<K>),
    ) -> Result<(), EngineError> {
        if self.segment(handler).is_none() {
            return Ok(());
        }
        self.move_to_top(handler)?;
        let seg = self.segment(handler).cloned().unwrap();
        while self.cps.len() > seg.cp_base {
            self.restore_top()?;
            let cp = self.pop()?;
            discard(cp);
        }
        let base = seg.cp_base;
        self.segments.retain(|s| s.cp_base < base);
        Ok(())
    }

    /// Drops segment records whose base choice point no longer exists.
    pub fn prune_segments(&mut self) {
        let n = self.cps.len();
        self.segments.retain(|s| s.cp_base < n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Term;
    use alloc::vec;

    #[test]
    fn push_pop_identity_and_marks() {
        let mut ss: StackSet<u32> = StackSet::new(0);
        let x = ss.store.new_var();
        ss.push(1);
        assert_eq!(ss.len(), 1);
        assert!(ss.store.unify(&mut ss.trail, &x, &Term::Int(1)));
        ss.push(2);
        assert_eq!(ss.top().unwrap().trail_mark, 1);
        ss.pop().unwrap();
        ss.pop().unwrap();
        assert!(ss.is_empty());
        assert!(ss.pop().is_err());
    }

    #[test]
    fn backtrack_top_outcomes() {
        let mut ss: StackSet<u32> = StackSet::new(0);
        assert_eq!(ss.backtrack_top(|_| true).unwrap(), Backtrack::Empty);
        ss.open_segment(7, ss.store.mark());
        ss.push(1);
        let r = ss
            .backtrack_top(|k| {
                *k += 1;
                *k < 2
            })
            .unwrap();
        assert_eq!(r, Backtrack::Exhausted(Some(7)));
    }

    #[test]
    fn relocation_preserves_marks_order() {
        let mut ss: StackSet<u32> = StackSet::new(0);
        let vs: Vec<Term> = (0..4).map(|_| ss.store.new_var()).collect();
        // goal 1 at the bottom
        ss.open_segment(1, ss.store.mark());
        ss.push(10);
        assert!(ss.store.unify(&mut ss.trail, &vs[0], &Term::Int(0)));
        ss.push(11);
        assert!(ss.store.unify(&mut ss.trail, &vs[1], &Term::Int(1)));
        ss.close_segment(1).unwrap();
        // goal 2 above it
        ss.open_segment(2, ss.store.mark());
        ss.push(20);
        assert!(ss.store.unify(&mut ss.trail, &vs[2], &Term::Int(2)));
        ss.close_segment(2).unwrap();
        assert!(ss.is_trapped(1));
        assert!(!ss.is_trapped(2));
        ss.relocate_to_top(1).unwrap();
        assert!(!ss.is_trapped(1));
        assert!(ss.is_trapped(2));
        let kinds: Vec<u32> = ss.cps().iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![20, 10, 11]);
        let marks: Vec<usize> = ss.cps().iter().map(|c| c.trail_mark).collect();
        assert_eq!(marks, vec![0, 1, 2]);
        assert_eq!(
            ss.trail.entries(),
            &[vs_index(&vs[2]), vs_index(&vs[0]), vs_index(&vs[1])]
        );
        // backtracking the top undoes only goal 1's later binding
        ss.restore_top().unwrap();
        assert!(matches!(ss.store.deref(&vs[1]), Term::Var(_)));
        assert_eq!(ss.store.deref(&vs[0]), &Term::Int(0));
        assert_eq!(ss.store.deref(&vs[2]), &Term::Int(2));
        assert_eq!(ss.relocations(), 1);
    }

    fn vs_index(t: &Term) -> u32 {
        match t {
            Term::Var(v) => v.index,
            _ => panic!(),
        }
    }

    #[test]
    fn remove_segment_from_the_middle() {
        let mut ss: StackSet<u32> = StackSet::new(0);
        let a = ss.store.new_var();
        let b = ss.store.new_var();
        ss.open_segment(1, ss.store.mark());
        ss.push(1);
        assert!(ss.store.unify(&mut ss.trail, &a, &Term::Int(1)));
        ss.close_segment(1).unwrap();
        ss.push(2);
        assert!(ss.store.unify(&mut ss.trail, &b, &Term::Int(2)));
        let mut gone = Vec::new();
        ss.remove_segment(1, |c| gone.push(c.kind)).unwrap();
        assert_eq!(gone, vec![1]);
        assert_eq!(ss.len(), 1);
        assert!(matches!(ss.store.deref(&a), Term::Var(_)));
        assert_eq!(ss.store.deref(&b), &Term::Int(2));
        assert_eq!(ss.relocations(), 0);
        assert!(ss.segments().is_empty());
    }
}
