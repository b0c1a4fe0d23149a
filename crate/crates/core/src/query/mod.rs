//! View-feeding queries over a [`Dataset`].
//!
//! Every query is read-only. Long-running ones take a [`Cancel`] handle so a
//! server can abandon work a newer request has superseded.

mod aggregate;
mod counters;
mod deps;
mod gantt;
mod histogram;
mod tree_view;
mod utilization;

use alloc::vec::Vec;
use core::ops::Range;
use core::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "serde")]
use serde::Serialize;

pub use aggregate::{aggregated_gantt, greedy_rows, AggBar, AggregatedGantt};
pub use counters::{counter_rates, BoxPlotSeries, LocationRates, PixelStats};
pub use deps::{dependency_chain, interval_at, interval_info, DependencyChain, IntervalInfo, DESCENDANT_CAP};
pub use gantt::{gantt_matrix, GanttCell, GanttMatrix, GanttRow};
pub use histogram::{histogram, HistogramResult, HistogramScale};
pub use tree_view::{top_contexts, tree_view, ContextSummary, TreeView, TreeViewNode, DEFAULT_TREE_DEPTH};
pub use utilization::{selection_utilization, utilization, PixelSeries, UtilizationFilter};

use crate::dataset::Dataset;
use crate::model::Guid;
use crate::tree::{NodeId, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("invalid range: {0}")]
    BadRange(&'static str),
    #[error("unknown tree node {0}")]
    UnknownNode(NodeId),
    #[error("unknown interval guid {0}")]
    UnknownGuid(Guid),
    #[error("unknown counter '{0}'")]
    UnknownCounter(alloc::string::String),
    #[error("unknown location {0}")]
    UnknownLocation(u32),
    #[error("query cancelled")]
    Cancelled,
}

impl From<TreeError> for QueryError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::UnknownNode(n) => QueryError::UnknownNode(n),
            TreeError::UnknownGuid(g) => QueryError::UnknownGuid(g),
        }
    }
}

/// Cooperative cancellation flag checked between units of work.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cancel<'a>(Option<&'a AtomicBool>);

impl<'a> Cancel<'a> {
    pub const NEVER: Cancel<'static> = Cancel(None);

    pub fn new(flag: &'a AtomicBool) -> Self {
        Cancel(Some(flag))
    }

    #[inline]
    pub fn check(&self) -> Result<(), QueryError> {
        match self.0 {
            Some(f) if f.load(Ordering::Relaxed) => Err(QueryError::Cancelled),
            _ => Ok(()),
        }
    }
}

/// What the user picked in one view, applied as a highlight or filter elsewhere.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Selection {
    /// Every interval in the node's subtree.
    Node {
        node: NodeId,
    },
    /// The interval plus its whole dependency chain (ancestors and descendants).
    Interval {
        guid: Guid,
    },
    Guids {
        guids: Vec<Guid>,
    },
    /// Intervals whose duration lies in `min..=max` ticks.
    Durations {
        min: u64,
        max: u64,
    },
}

/// Resolved selection: membership by interval position.
#[derive(Debug, Clone)]
pub(crate) struct Membership {
    pub mask: Vec<bool>,
    pub members: Vec<u32>,
}

impl Membership {
    fn from_members(n: usize, mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        let mut mask = alloc::vec![false; n];
        for &m in &members {
            mask[m as usize] = true;
        }
        Membership { mask, members }
    }

    #[inline]
    pub fn contains(&self, position: u32) -> bool {
        self.mask[position as usize]
    }
}

pub(crate) fn resolve_selection(ds: &Dataset, selection: &Selection) -> Result<Membership, QueryError> {
    let n = ds.intervals.len();
    let members = match selection {
        Selection::Node { node } => ds.node_index(*node)?.members.clone(),
        Selection::Interval { guid } => {
            let pos = ds.position_of(*guid).ok_or(QueryError::UnknownGuid(*guid))?;
            let mut m = ds.tree.ancestors(pos);
            m.push(pos as u32);
            m.extend(ds.index.children.descendants(pos, usize::MAX).0);
            m
        }
        Selection::Guids { guids } => guids
            .iter()
            .map(|g| ds.position_of(*g).map(|p| p as u32).ok_or(QueryError::UnknownGuid(*g)))
            .collect::<Result<Vec<_>, _>>()?,
        Selection::Durations { min, max } => ds
            .intervals
            .iter()
            .enumerate()
            .filter(|(_, iv)| (*min..=*max).contains(&iv.duration()))
            .map(|(i, _)| i as u32)
            .collect(),
    };
    Ok(Membership::from_members(n, members))
}

pub(crate) fn check_locations(ds: &Dataset, locations: &Range<u32>) -> Result<(), QueryError> {
    let count = ds.locations.len() as u32;
    if locations.start >= locations.end {
        return Err(QueryError::BadRange("empty location range"));
    }
    if locations.end > count {
        return Err(QueryError::UnknownLocation(locations.end - 1));
    }
    Ok(())
}

/// A requested time window plus pixel width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct Viewport {
    pub t0: u64,
    pub t1: u64,
    pub width: u32,
}

/// Pixel widths beyond this are never rendered, however large the overdraw.
pub const MAX_RENDER_WIDTH: u32 = 1 << 16;

/// Widen a viewport by `factor` around its center so the client can pan
/// without refetching. The result is clamped to `[0, bound]` and keeps the
/// requested pixel density.
pub fn overdraw(view: Viewport, factor: f64, bound: u64) -> Viewport {
    let span = view.t1.saturating_sub(view.t0);
    if span == 0 || factor.is_nan() || factor <= 1.0 {
        return view;
    }
    let target = libm::round(span as f64 * factor) as u64;
    let extra = target.saturating_sub(span);
    let left = extra / 2;
    let right = extra - left;
    let bound = bound.max(view.t1);
    let t0 = view.t0.saturating_sub(left);
    let t1 = view.t1.saturating_add(right).min(bound);
    let width = libm::round(view.width as f64 * (t1 - t0) as f64 / span as f64) as u32;
    Viewport {
        t0,
        t1,
        width: width.clamp(view.width, MAX_RENDER_WIDTH.max(view.width)),
    }
}
