use alloc::borrow::Cow;
use alloc::vec::Vec;
use core::ops::Range;

#[cfg(feature = "serde")]
use serde::Serialize;

use super::{check_locations, resolve_selection, Cancel, QueryError, Selection};
use crate::dataset::Dataset;
use crate::index::{build_utilization_sat, IntervalTree, SeriesKey, SummedAreaTable};
use crate::pixels::{ratio, PixelGrid};
use crate::tree::NodeId;

/// One value per pixel over `[t0, t1)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct PixelSeries {
    pub t0: u64,
    pub t1: u64,
    pub width: u32,
    pub values: Vec<f64>,
}

impl PixelSeries {
    fn new(grid: &PixelGrid, values: Vec<f64>) -> Self {
        PixelSeries {
            t0: grid.t0,
            t1: grid.t1,
            width: grid.width,
            values,
        }
    }
}

/// Restricts utilization to a subtree and/or a location range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UtilizationFilter {
    pub node: Option<NodeId>,
    pub locations: Option<Range<u32>>,
}

/// Exact per-pixel coverage, accumulated in scaled ticks, over pixels
/// `first..first + len`.
pub(crate) struct Coverage {
    first: u32,
    partial: Vec<u128>,
    full: Vec<i64>,
}

impl Coverage {
    pub fn new(width: u32) -> Self {
        Coverage::window(0..width)
    }

    /// Coverage of a pixel sub-range; every added span must stay inside it.
    pub fn window(pixels: Range<u32>) -> Self {
        let len = pixels.len();
        Coverage {
            first: pixels.start,
            partial: alloc::vec![0; len],
            full: alloc::vec![0; len + 1],
        }
    }

    pub fn add(&mut self, grid: &PixelGrid, enter: u64, leave: u64) {
        let r = grid.raster(enter, leave);
        for (i, ov) in r.partial.into_iter().flatten() {
            self.partial[(i - self.first) as usize] += ov;
        }
        if !r.full.is_empty() {
            self.full[(r.full.start - self.first) as usize] += 1;
            self.full[(r.full.end - self.first) as usize] -= 1;
        }
    }

    /// Scaled-tick coverage per pixel.
    pub fn scaled(&self, grid: &PixelGrid) -> Vec<u128> {
        let span = grid.span() as u128;
        let mut running = 0i64;
        self.partial
            .iter()
            .zip(&self.full)
            .map(|(&p, &d)| {
                running += d;
                p + running as u128 * span
            })
            .collect()
    }

    /// Covered ticks divided by pixel ticks.
    pub fn values(&self, grid: &PixelGrid) -> Vec<f64> {
        let span = grid.span() as u128;
        self.scaled(grid).into_iter().map(|c| ratio(c, span)).collect()
    }
}

fn use_sat(ds: &Dataset, grid: &PixelGrid) -> bool {
    grid.span() as u128 >= grid.width as u128 * ds.index.total.bin_width as u128
}

/// Trees holding every candidate interval for a filter.
fn candidate_trees<'a>(ds: &'a Dataset, locations: &Option<Range<u32>>) -> Vec<&'a IntervalTree> {
    match locations {
        None => alloc::vec![&ds.index.tree],
        Some(r) => ds.index.location_trees[r.start as usize..r.end as usize]
            .iter()
            .collect(),
    }
}

fn exact_series<F>(
    ds: &Dataset,
    grid: &PixelGrid,
    trees: &[&IntervalTree],
    keep: F,
    cancel: Cancel,
) -> Result<Vec<f64>, QueryError>
where
    F: Fn(u32) -> bool,
{
    let mut cov = Coverage::new(grid.width);
    for tree in trees {
        cancel.check()?;
        tree.for_each_overlap(grid.t0, grid.t1, |pos| {
            if keep(pos) {
                let iv = &ds.intervals[pos as usize];
                cov.add(grid, iv.enter.0, iv.leave.0);
            }
        });
    }
    Ok(cov.values(grid))
}

fn member_sat(ds: &Dataset, members: &[u32], keep: impl Fn(u32) -> bool) -> SummedAreaTable {
    build_utilization_sat(
        members.iter().filter(|&&m| keep(m)).map(|&m| &ds.intervals[m as usize]),
        ds.span(),
        ds.index.bin_count,
        SeriesKey::Combined,
    )
}

pub(crate) fn grid_of(t0: u64, t1: u64, width: u32) -> Result<PixelGrid, QueryError> {
    if t0 >= t1 {
        return Err(QueryError::BadRange("t0 must be less than t1"));
    }
    PixelGrid::new(t0, t1, width).ok_or(QueryError::BadRange("width must be at least 1"))
}

/// Busy resources per pixel: busy ticks inside the pixel over pixel ticks.
///
/// Wide pixels read the summed area tables; pixels narrower than a bin are
/// rasterized exactly from the interval tree.
pub fn utilization(
    ds: &Dataset,
    t0: u64,
    t1: u64,
    width: u32,
    filter: &UtilizationFilter,
    cancel: Cancel,
) -> Result<PixelSeries, QueryError> {
    let grid = grid_of(t0, t1, width)?;
    if let Some(r) = &filter.locations {
        check_locations(ds, r)?;
    }
    let node = match filter.node {
        Some(n) => Some(ds.node_index(n)?),
        None => None,
    };
    let in_range = |pos: u32| {
        filter
            .locations
            .as_ref()
            .is_none_or(|r| r.contains(&ds.intervals[pos as usize].location.0))
    };
    cancel.check()?;
    let values = if use_sat(ds, &grid) {
        let sat: Cow<SummedAreaTable> = match (&node, &filter.locations) {
            (None, None) => Cow::Borrowed(&ds.index.total),
            (None, Some(r)) if r.len() == 1 => Cow::Borrowed(&ds.index.per_location[r.start as usize]),
            (None, Some(r)) => Cow::Owned(SummedAreaTable::combine(
                &ds.index.per_location[r.start as usize..r.end as usize],
                ds.span(),
                ds.index.bin_count,
            )),
            (Some(n), None) => Cow::Borrowed(&n.sat),
            (Some(n), Some(_)) => Cow::Owned(member_sat(ds, &n.members, in_range)),
        };
        sat.pixel_values(&grid)
    } else {
        let trees = candidate_trees(ds, &filter.locations);
        match &node {
            None => exact_series(ds, &grid, &trees, |_| true, cancel)?,
            Some(n) => {
                let mut mask = alloc::vec![false; ds.intervals.len()];
                for &m in &n.members {
                    mask[m as usize] = true;
                }
                exact_series(ds, &grid, &trees, |p| mask[p as usize], cancel)?
            }
        }
    };
    Ok(PixelSeries::new(&grid, values))
}

/// Utilization due to the selected intervals, restricted by the same filter
/// as the total it overlays. Never exceeds [`utilization`] at any pixel.
pub fn selection_utilization(
    ds: &Dataset,
    selection: &Selection,
    t0: u64,
    t1: u64,
    width: u32,
    filter: &UtilizationFilter,
    cancel: Cancel,
) -> Result<PixelSeries, QueryError> {
    let grid = grid_of(t0, t1, width)?;
    if let Some(r) = &filter.locations {
        check_locations(ds, r)?;
    }
    let mut sel = resolve_selection(ds, selection)?;
    if let Some(n) = filter.node {
        let node = ds.node_index(n)?;
        let mut in_node = alloc::vec![false; ds.intervals.len()];
        for &m in &node.members {
            in_node[m as usize] = true;
        }
        sel.members.retain(|&m| in_node[m as usize]);
        for (s, n) in sel.mask.iter_mut().zip(in_node) {
            *s &= n;
        }
    }
    cancel.check()?;
    let values = if use_sat(ds, &grid) {
        let keep = |pos: u32| {
            filter
                .locations
                .as_ref()
                .is_none_or(|r| r.contains(&ds.intervals[pos as usize].location.0))
        };
        member_sat(ds, &sel.members, keep).pixel_values(&grid)
    } else {
        let trees = candidate_trees(ds, &filter.locations);
        exact_series(ds, &grid, &trees, |p| sel.contains(p), cancel)?
    };
    Ok(PixelSeries::new(&grid, values))
}
