use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::model::{Guid, Interval};

/// Guid -> interval position lookup over a slice of intervals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GuidIndex {
    sorted: Vec<(Guid, u32)>,
}

impl GuidIndex {
    pub fn build(intervals: &[Interval]) -> Self {
        let mut sorted: Vec<(Guid, u32)> = intervals
            .iter()
            .enumerate()
            .map(|(i, iv)| (iv.guid, i as u32))
            .collect();
        sorted.sort_unstable();
        GuidIndex { sorted }
    }

    pub fn get(&self, guid: Guid) -> Option<usize> {
        self.sorted
            .binary_search_by_key(&guid, |&(g, _)| g)
            .ok()
            .map(|p| self.sorted[p].1 as usize)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Parent -> children adjacency in compressed form, keyed by interval position.
///
/// Every child list is sorted by the child's `(enter, guid)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ChildIndex {
    offsets: Vec<u32>,
    children: Vec<u32>,
}

impl ChildIndex {
    /// Build from an explicit parent function (`parent_of(i)` is the position
    /// of interval `i`'s parent, if it has a usable one).
    pub fn build<F>(intervals: &[Interval], parent_of: F) -> Self
    where
        F: Fn(usize) -> Option<usize>,
    {
        let n = intervals.len();
        let mut edges: Vec<(u32, u32)> = (0..n)
            .filter_map(|c| parent_of(c).map(|p| (p as u32, c as u32)))
            .collect();
        edges.sort_unstable_by_key(|&(p, c)| {
            let child = &intervals[c as usize];
            (p, child.enter, child.guid)
        });
        let mut offsets = alloc::vec![0u32; n + 1];
        for &(p, _) in &edges {
            offsets[p as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        ChildIndex {
            offsets,
            children: edges.into_iter().map(|(_, c)| c).collect(),
        }
    }

    pub fn children(&self, parent: usize) -> &[u32] {
        match (self.offsets.get(parent), self.offsets.get(parent + 1)) {
            (Some(&a), Some(&b)) => &self.children[a as usize..b as usize],
            _ => &[],
        }
    }

    /// Number of parent -> child links.
    pub fn edge_count(&self) -> usize {
        self.children.len()
    }

    /// All positions reachable from `root` through child links, excluding
    /// `root`, in depth-first preorder. Stops after `cap` results; the flag
    /// reports whether anything was cut off.
    pub fn descendants(&self, root: usize, cap: usize) -> (Vec<u32>, bool) {
        let mut out = Vec::new();
        let mut stack: Vec<u32> = self.children(root).iter().rev().copied().collect();
        while let Some(c) = stack.pop() {
            if out.len() == cap {
                return (out, true);
            }
            out.push(c);
            stack.extend(self.children(c as usize).iter().rev().copied());
        }
        (out, false)
    }
}

/// Child index over raw parent-guid links. Links to guids that are not in
/// `intervals` are ignored.
pub fn build_child_index(intervals: &[Interval]) -> ChildIndex {
    let guids = GuidIndex::build(intervals);
    ChildIndex::build(intervals, |i| intervals[i].parent.and_then(|p| guids.get(p)))
}
