use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::model::Interval;

/// Static interval tree over `[enter, leave)` spans.
///
/// Entries are stored sorted by enter time and the balanced tree is implicit:
/// the root of any sub-range `lo..hi` is its midpoint, and `max_leave[mid]`
/// holds the largest leave time inside `lo..hi`. Overlap queries visit
/// `O(log n + k)` entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IntervalTree {
    enters: Vec<u64>,
    leaves: Vec<u64>,
    ids: Vec<u32>,
    max_leave: Vec<u64>,
}

impl IntervalTree {
    /// Build over `(enter, leave, id)` triples in any order.
    pub fn from_spans(mut spans: Vec<(u64, u64, u32)>) -> Self {
        spans.sort_unstable_by_key(|&(e, _, id)| (e, id));
        let n = spans.len();
        let mut tree = IntervalTree {
            enters: spans.iter().map(|s| s.0).collect(),
            leaves: spans.iter().map(|s| s.1).collect(),
            ids: spans.iter().map(|s| s.2).collect(),
            max_leave: alloc::vec![0; n],
        };
        tree.fill_max(0, n);
        tree
    }

    fn fill_max(&mut self, lo: usize, hi: usize) -> u64 {
        if lo >= hi {
            return 0;
        }
        let mid = lo + (hi - lo) / 2;
        let left = self.fill_max(lo, mid);
        let right = self.fill_max(mid + 1, hi);
        let m = self.leaves[mid].max(left).max(right);
        self.max_leave[mid] = m;
        m
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Visit every id with `enter < t1 && leave > t0`, in `(enter, id)` order.
    pub fn for_each_overlap<F: FnMut(u32)>(&self, t0: u64, t1: u64, mut f: F) {
        if t0 >= t1 {
            return;
        }
        self.visit(0, self.ids.len(), t0, t1, &mut f);
    }

    fn visit<F: FnMut(u32)>(&self, lo: usize, hi: usize, t0: u64, t1: u64, f: &mut F) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        if self.max_leave[mid] <= t0 {
            return;
        }
        self.visit(lo, mid, t0, t1, f);
        if self.enters[mid] < t1 {
            if self.leaves[mid] > t0 {
                f(self.ids[mid]);
            }
            self.visit(mid + 1, hi, t0, t1, f);
        }
    }

    pub fn query(&self, t0: u64, t1: u64) -> Vec<u32> {
        let mut out = Vec::new();
        self.for_each_overlap(t0, t1, |id| out.push(id));
        out
    }

    /// Ids covering the instant `t`.
    pub fn stab(&self, t: u64) -> Vec<u32> {
        self.query(t, t.saturating_add(1))
    }
}

/// Interval tree whose ids are positions in `intervals`.
pub fn build_interval_tree(intervals: &[Interval]) -> IntervalTree {
    IntervalTree::from_spans(
        intervals
            .iter()
            .enumerate()
            .map(|(i, iv)| (iv.enter.0, iv.leave.0, i as u32))
            .collect(),
    )
}
