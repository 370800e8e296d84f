//! Enumeration of answer tuples for a parallel conjunction.
//!
//! Each handler keeps a count of its answers that have already taken part in
//! combinations (`combined`). A batch pairs one producer's next answer with
//! every already-combined answer of the other handlers. Running one batch
//! per uncombined answer, in any order, emits every tuple of the final
//! cross product exactly once.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Combination {
    producer: Option<usize>,
    tuple: Vec<usize>,
    limits: Vec<usize>,
}

impl Combination {
    /// The first tuple of a conjunction: every handler's first answer.
    pub fn initial(n: usize) -> Self {
        Combination {
            producer: None,
            tuple: vec![0; n],
            limits: vec![1; n],
        }
    }

    /// The batch for answer `k` of handler `producer`, crossed with the
    /// first `combined[i]` answers of every other handler `i`. `None` when
    /// some other handler has nothing combined yet (the batch is empty).
    pub fn batch(producer: usize, k: usize, combined: &[usize]) -> Option<Self> {
        let n = combined.len();
        let mut limits = combined.to_vec();
        limits[producer] = k + 1;
        if (0..n).any(|i| i != producer && limits[i] == 0) {
            return None;
        }
        let mut tuple = vec![0; n];
        tuple[producer] = k;
        Some(Combination {
            producer: Some(producer),
            tuple,
            limits,
        })
    }

    pub fn producer(&self) -> Option<usize> {
        self.producer
    }

    pub fn current(&self) -> &[usize] {
        &self.tuple
    }

    /// Answers of each handler taking part in the batch.
    pub fn limits(&self) -> &[usize] {
        &self.limits
    }

    /// Number of tuples in the whole batch.
    pub fn len(&self) -> usize {
        (0..self.tuple.len())
            .filter(|&i| Some(i) != self.producer)
            .map(|i| self.limits[i])
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Moves to the next tuple, rightmost position fastest, the producer's
    /// position fixed. Returns the lowest position whose answer changed, or
    /// `None` when the batch is finished.
    pub fn advance(&mut self) -> Option<usize> {
        let mut i = self.tuple.len();
        while i > 0 {
            i -= 1;
            if Some(i) == self.producer {
                continue;
            }
            self.tuple[i] += 1;
            if self.tuple[i] < self.limits[i] {
                return Some(i);
            }
            self.tuple[i] = 0;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn drain(mut c: Combination) -> Vec<Vec<usize>> {
        let mut out = vec![c.current().to_vec()];
        while c.advance().is_some() {
            out.push(c.current().to_vec());
        }
        out
    }

    #[test]
    fn left_third_answer_against_three_right_answers() {
        // counts (2,3) after the left handler's third answer arrives
        let c = Combination::batch(0, 2, &[2, 3]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(drain(c), vec![vec![2, 0], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn race_between_two_producers_totals_nine() {
        // a and b each have 3 answers, 2 of each combined so far.
        let mut seen = BTreeSet::new();
        let mut combined = vec![1, 1];
        seen.extend(drain(Combination::initial(2)));
        for (p, k) in [(1, 1), (0, 1)] {
            seen.extend(drain(Combination::batch(p, k, &combined).unwrap()));
            combined[p] += 1;
        }
        assert_eq!(seen.len(), 4);
        let a = drain(Combination::batch(0, 2, &combined).unwrap());
        assert_eq!(a.len(), 2);
        combined[0] += 1;
        let b = drain(Combination::batch(1, 2, &combined).unwrap());
        assert_eq!(b.len(), 3);
        combined[1] += 1;
        let before = seen.len();
        seen.extend(a);
        seen.extend(b);
        assert_eq!(seen.len(), before + 5);
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn single_goal_batches_have_one_tuple() {
        let c = Combination::batch(0, 4, &[4]).unwrap();
        assert_eq!(drain(c), vec![vec![4]]);
    }

    #[test]
    fn advance_reports_lowest_changed_position() {
        let mut c = Combination::batch(1, 1, &[2, 1, 2]).unwrap();
        assert_eq!(c.current(), &[0, 1, 0]);
        assert_eq!(c.advance(), Some(2));
        assert_eq!(c.advance(), Some(0));
        assert_eq!(c.current(), &[1, 1, 0]);
        assert_eq!(c.advance(), Some(2));
        assert_eq!(c.advance(), None);
    }

    #[test]
    fn empty_batch_when_sibling_has_nothing_combined() {
        assert!(Combination::batch(0, 0, &[0, 0]).is_none());
    }
}
