use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

#[cfg(feature = "serde")]
use serde::Serialize;

use super::utilization::{grid_of, Coverage};
use super::{Cancel, QueryError};
use crate::dataset::Dataset;
use crate::model::Guid;
use crate::pixels::ratio;
use crate::tree::NodeId;

/// One node instance together with everything it spawned.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct AggBar {
    pub instance_guid: Guid,
    /// Earliest enter over the instance's interval set.
    pub start: u64,
    /// Latest leave over the instance's interval set.
    pub end: u64,
    pub row: u32,
    /// Size of the interval set (instance plus descendants).
    pub interval_count: u64,
    /// First pixel of `utilization`.
    pub first_pixel: u32,
    /// Busy resources per pixel due to this bar's intervals, over the pixels it touches.
    pub utilization: Vec<f64>,
    /// Largest value in `utilization`, for per-bar normalization.
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct AggregatedGantt {
    pub node: NodeId,
    pub t0: u64,
    pub t1: u64,
    pub width: u32,
    /// Rows used by all bars of the node, visible or not.
    pub row_count: u32,
    /// Bars overlapping `[t0, t1)`, sorted by start.
    pub bars: Vec<AggBar>,
}

/// Assign each `[start, end)` extent the lowest row whose previous bar has
/// ended. Extents are processed by start time; the result is indexed like
/// the input.
pub fn greedy_rows(extents: &[(u64, u64)]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..extents.len()).collect();
    order.sort_by_key(|&i| (extents[i].0, i));
    let mut busy: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
    let mut free: BinaryHeap<Reverse<u32>> = BinaryHeap::new();
    let mut rows_used = 0u32;
    let mut rows = alloc::vec![0; extents.len()];
    for i in order {
        let (start, end) = extents[i];
        while let Some(&Reverse((e, r))) = busy.peek() {
            if e > start {
                break;
            }
            busy.pop();
            free.push(Reverse(r));
        }
        let row = match free.pop() {
            Some(Reverse(r)) => r,
            None => {
                rows_used += 1;
                rows_used - 1
            }
        };
        rows[i] = row;
        busy.push(Reverse((end, row)));
    }
    rows
}

/// Aggregated Gantt bars for every instance of a tree node.
///
/// Rows are assigned over full extents so they stay put while panning;
/// only bars overlapping the window are returned.
pub fn aggregated_gantt(
    ds: &Dataset,
    node: NodeId,
    t0: u64,
    t1: u64,
    width: u32,
    cancel: Cancel,
) -> Result<AggregatedGantt, QueryError> {
    let grid = grid_of(t0, t1, width)?;
    let instances = ds.tree.node_instances(node)?;
    let mut sets = Vec::with_capacity(instances.len());
    for &pos in instances {
        cancel.check()?;
        let (mut set, _) = ds.index.children.descendants(pos as usize, usize::MAX);
        set.push(pos);
        let start = set.iter().map(|&i| ds.intervals[i as usize].enter.0).min().unwrap_or(0);
        let end = set.iter().map(|&i| ds.intervals[i as usize].leave.0).max().unwrap_or(0);
        sets.push((pos, start, end, set));
    }
    sets.sort_by_key(|&(pos, start, _, _)| (start, ds.intervals[pos as usize].guid));
    let extents: Vec<(u64, u64)> = sets.iter().map(|s| (s.1, s.2)).collect();
    let rows = greedy_rows(&extents);
    let row_count = rows.iter().max().map_or(0, |&r| r + 1);
    let span = grid.span() as u128;

    let mut bars = Vec::new();
    for ((pos, start, end, set), row) in sets.into_iter().zip(rows) {
        let Some(range) = grid.pixel_range(start, end) else {
            continue;
        };
        cancel.check()?;
        let mut cov = Coverage::window(range.clone());
        for &i in &set {
            let iv = &ds.intervals[i as usize];
            cov.add(&grid, iv.enter.0, iv.leave.0);
        }
        let utilization: Vec<f64> = cov.scaled(&grid).into_iter().map(|c| ratio(c, span)).collect();
        let peak = utilization.iter().copied().fold(0.0, f64::max);
        bars.push(AggBar {
            instance_guid: ds.intervals[pos as usize].guid,
            start,
            end,
            row,
            interval_count: set.len() as u64,
            first_pixel: range.start,
            utilization,
            peak,
        });
    }
    Ok(AggregatedGantt {
        node,
        t0,
        t1,
        width,
        row_count,
        bars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BuildOptions;
    use crate::ingest::ingest_text;

    #[test]
    fn hand_simulated_rows() {
        assert_eq!(greedy_rows(&[(0, 10), (5, 15), (12, 20)]), [0, 1, 0]);
        assert_eq!(greedy_rows(&[(0, 1), (1, 2), (2, 3)]), [0, 0, 0]);
        assert_eq!(greedy_rows(&[(12, 20), (0, 10), (5, 15)]), [0, 0, 1]);
        assert!(greedy_rows(&[]).is_empty());
    }

    #[test]
    fn lowest_free_row_is_reused() {
        // Rows 0 and 1 both free up before the last bar; it takes row 0.
        assert_eq!(greedy_rows(&[(0, 5), (1, 4), (2, 10), (6, 8)]), [0, 1, 2, 0]);
    }

    #[test]
    fn fixture_loop_bars() {
        let text = "L 0 0 0\nL 1 0 1\nE 0 0 1 - run\nE 10 1 2 1 loop\nX 40 1 2\nE 50 1 3 1 loop\nX 70 1 3\nX 100 0 1\n";
        let d = Dataset::build(ingest_text(text).unwrap(), Vec::new(), BuildOptions { bin_count: 4 }).unwrap();
        let loop_node = d.tree.nodes[0].children[0];
        let g = aggregated_gantt(&d, loop_node, 0, 100, 10, Cancel::NEVER).unwrap();
        assert_eq!(g.bars.len(), 2);
        assert_eq!(g.row_count, 1);
        let b = &g.bars[0];
        assert_eq!(
            (b.instance_guid, b.start, b.end, b.row, b.first_pixel),
            (Guid(2), 10, 40, 0, 1)
        );
        assert_eq!(b.utilization, [1.0, 1.0, 1.0]);
        assert_eq!(b.peak, 1.0);
        let root = aggregated_gantt(&d, NodeId(0), 0, 100, 4, Cancel::NEVER).unwrap();
        assert_eq!(root.bars[0].interval_count, 3);
        assert_eq!(root.bars[0].utilization, [1.6, 1.6, 1.8, 1.0]);
        let hidden = aggregated_gantt(&d, loop_node, 80, 100, 4, Cancel::NEVER).unwrap();
        assert!(hidden.bars.is_empty());
        assert_eq!(hidden.row_count, 1);
        assert!(aggregated_gantt(&d, NodeId(5), 0, 100, 4, Cancel::NEVER).is_err());
    }
}
