use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::Serialize;

use super::utilization::grid_of;
use super::{Cancel, QueryError};
use crate::dataset::{CounterSeries, Dataset};
use crate::model::CounterId;
use crate::pixels::PixelGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct PixelStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation across locations.
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct LocationRates {
    pub location: u32,
    pub rates: Vec<Option<f64>>,
}

/// Functional box plot of a counter's rate across locations.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct BoxPlotSeries {
    pub counter: String,
    pub t0: u64,
    pub t1: u64,
    pub width: u32,
    /// `None` where no location has a rate segment covering the pixel.
    pub pixels: Vec<Option<PixelStats>>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub per_location: Option<Vec<LocationRates>>,
    /// Segments skipped because the counter decreased.
    pub resets: u64,
}

/// Time-weighted mean rate per pixel for one location's samples.
fn location_rates(series: &CounterSeries, grid: &PixelGrid, resets: &mut u64) -> Vec<Option<f64>> {
    let w = grid.width as usize;
    let mut weighted = alloc::vec![0.0f64; w];
    let mut weight = alloc::vec![0u128; w];
    for k in 1..series.times.len() {
        let (ta, tb) = (series.times[k - 1], series.times[k]);
        let (va, vb) = (series.values[k - 1], series.values[k]);
        if ta >= tb {
            continue;
        }
        if vb < va {
            *resets += 1;
            continue;
        }
        let rate = (vb - va) / (tb - ta) as f64;
        for (i, ov) in grid.raster(ta, tb).pixels(grid.span()) {
            weighted[i as usize] += rate * ov as f64;
            weight[i as usize] += ov;
        }
    }
    weighted
        .into_iter()
        .zip(weight)
        .map(|(num, den)| (den > 0).then(|| num / den as f64))
        .collect()
}

fn stats(values: &[f64]) -> Option<PixelStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(PixelStats {
        min,
        max,
        mean,
        stddev: libm::sqrt(var),
    })
}

/// Rates `(vB − vA) / (tB − tA)` between consecutive samples, aggregated per
/// pixel as a time-weighted mean per location, then summarized across locations.
pub fn counter_rates(
    ds: &Dataset,
    counter: &str,
    t0: u64,
    t1: u64,
    width: u32,
    per_location: bool,
    cancel: Cancel,
) -> Result<BoxPlotSeries, QueryError> {
    let grid = grid_of(t0, t1, width)?;
    let id = ds
        .counter_names
        .id(counter)
        .ok_or_else(|| QueryError::UnknownCounter(counter.into()))?;
    let mut resets = 0;
    let mut rows = Vec::new();
    for series in ds.counters.series_of(CounterId(id)) {
        cancel.check()?;
        rows.push(LocationRates {
            location: series.location.0,
            rates: location_rates(series, &grid, &mut resets),
        });
    }
    let mut column = Vec::with_capacity(rows.len());
    let pixels = (0..width as usize)
        .map(|i| {
            column.clear();
            column.extend(rows.iter().filter_map(|r| r.rates[i]));
            stats(&column)
        })
        .collect();
    Ok(BoxPlotSeries {
        counter: counter.into(),
        t0,
        t1,
        width,
        pixels,
        per_location: per_location.then_some(rows),
        resets,
    })
}
