use alloc::vec::Vec;
use core::ops::Range;

#[cfg(feature = "serde")]
use serde::Serialize;

use super::utilization::{grid_of, Coverage};
use super::{check_locations, resolve_selection, Cancel, QueryError, Selection};
use crate::dataset::Dataset;
use crate::model::Guid;
use crate::pixels::ratio;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct GanttCell {
    /// Intervals on this location overlapping the pixel.
    pub count: u32,
    /// The interval's guid when `count == 1`.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub solo_guid: Option<Guid>,
    /// Fraction of the pixel covered by at least one interval.
    pub busy_fraction: f64,
    /// Whether any overlapping interval is selected; absent without a selection.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub selected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct GanttRow {
    pub location: u32,
    pub label: alloc::string::String,
    pub cells: Vec<GanttCell>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct GanttMatrix {
    pub t0: u64,
    pub t1: u64,
    pub width: u32,
    pub rows: Vec<GanttRow>,
}

/// Per-location pixel raster of interval counts and coverage.
pub fn gantt_matrix(
    ds: &Dataset,
    t0: u64,
    t1: u64,
    width: u32,
    locations: Range<u32>,
    selection: Option<&Selection>,
    cancel: Cancel,
) -> Result<GanttMatrix, QueryError> {
    let grid = grid_of(t0, t1, width)?;
    check_locations(ds, &locations)?;
    let membership = selection.map(|s| resolve_selection(ds, s)).transpose()?;
    let w = width as usize;
    let mut rows = Vec::with_capacity(locations.len());
    for loc in locations {
        cancel.check()?;
        let mut count = alloc::vec![0i64; w + 1];
        // Sum of (position + 1) per pixel; identifies the interval when count is 1.
        let mut ident = alloc::vec![0i128; w + 1];
        let mut chosen = alloc::vec![0i64; w + 1];
        let mut union = Coverage::new(width);
        let mut run: Option<(u64, u64)> = None;
        ds.index.location_trees[loc as usize].for_each_overlap(t0, t1, |pos| {
            let iv = &ds.intervals[pos as usize];
            let (a, b) = (iv.enter.0, iv.leave.0);
            if let Some(r) = grid.pixel_range(a, b) {
                let (s, e) = (r.start as usize, r.end as usize);
                count[s] += 1;
                count[e] -= 1;
                ident[s] += pos as i128 + 1;
                ident[e] -= pos as i128 + 1;
                if membership.as_ref().is_some_and(|m| m.contains(pos)) {
                    chosen[s] += 1;
                    chosen[e] -= 1;
                }
            }
            // Enter order lets overlapping spans merge into a disjoint union.
            run = match run {
                Some((ra, rb)) if a <= rb => Some((ra, rb.max(b))),
                Some((ra, rb)) => {
                    union.add(&grid, ra, rb);
                    Some((a, b))
                }
                None => Some((a, b)),
            };
        });
        if let Some((ra, rb)) = run {
            union.add(&grid, ra, rb);
        }
        let span = grid.span() as u128;
        let covered = union.scaled(&grid);
        let (mut c, mut id, mut sel) = (0i64, 0i128, 0i64);
        let cells = (0..w)
            .map(|i| {
                c += count[i];
                id += ident[i];
                sel += chosen[i];
                GanttCell {
                    count: c as u32,
                    solo_guid: (c == 1).then(|| ds.intervals[id as usize - 1].guid),
                    busy_fraction: ratio(covered[i].min(span), span),
                    selected: membership.as_ref().map(|_| sel > 0),
                }
            })
            .collect();
        rows.push(GanttRow {
            location: loc,
            label: ds.locations[loc as usize].label(),
            cells,
        });
    }
    Ok(GanttMatrix { t0, t1, width, rows })
}
