use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::QueryError;
use crate::dataset::Dataset;
use crate::tree::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum HistogramScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct HistogramResult {
    /// `counts.len() + 1` strictly increasing edges, in ticks.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub filter: Option<NodeId>,
    pub scale: HistogramScale,
}

/// Durations binned into `bins` equal-width bins (linear or log10), last bin
/// closed. `Ok(None)` when nothing matches.
pub fn histogram(
    ds: &Dataset,
    bins: u32,
    filter: Option<NodeId>,
    scale: HistogramScale,
) -> Result<Option<HistogramResult>, QueryError> {
    if bins == 0 {
        return Err(QueryError::BadRange("bins must be at least 1"));
    }
    let node;
    let durations: &[u64] = match filter {
        Some(n) => {
            node = ds.node_index(n)?;
            &node.durations
        }
        None => &ds.index.durations,
    };
    Ok(
        histogram_of(durations, bins, scale).map(|(bin_edges, counts)| HistogramResult {
            bin_edges,
            counts,
            filter,
            scale,
        }),
    )
}

/// Bin sorted durations; returns `(edges, counts)`.
pub(crate) fn histogram_of(sorted: &[u64], bins: u32, scale: HistogramScale) -> Option<(Vec<f64>, Vec<u64>)> {
    let (&lo, &hi) = (sorted.first()?, sorted.last()?);
    if lo == hi {
        let d = lo as f64;
        return Some((alloc::vec![d - 0.5, d + 0.5], alloc::vec![sorted.len() as u64]));
    }
    let k = bins as u64;
    let (edges, index): (Vec<f64>, Vec<u64>) = match scale {
        HistogramScale::Linear => {
            let range = (hi - lo) as u128;
            let edges = (0..=k)
                .map(|i| lo as f64 + (hi - lo) as f64 * i as f64 / k as f64)
                .collect();
            let bin = |d: u64| ((((d - lo) as u128 * k as u128) / range) as u64).min(k - 1);
            (edges, sorted.iter().map(|&d| bin(d)).collect())
        }
        HistogramScale::Log => {
            // Zero-length intervals never reach a dataset, but stay safe.
            let (llo, lhi) = (libm::log10(lo.max(1) as f64), libm::log10(hi.max(1) as f64));
            let step = (lhi - llo) / k as f64;
            let edges = (0..=k).map(|i| libm::pow(10.0, llo + step * i as f64)).collect();
            let bin = |d: u64| {
                let x = (libm::log10(d.max(1) as f64) - llo) * k as f64 / (lhi - llo);
                (libm::floor(x.max(0.0)) as u64).min(k - 1)
            };
            (edges, sorted.iter().map(|&d| bin(d)).collect())
        }
    };
    // Bin index is monotone in duration, so each bin is a contiguous run.
    let counts = (0..k)
        .map(|b| (index.partition_point(|&i| i <= b) - index.partition_point(|&i| i < b)) as u64)
        .collect();
    Some((strictly_increasing(edges, lo as f64, hi as f64), counts))
}

fn strictly_increasing(mut edges: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    edges[0] = lo;
    let last = edges.len() - 1;
    edges[last] = edges[last].max(hi);
    for i in 1..edges.len() {
        if edges[i] <= edges[i - 1] {
            edges[i] = edges[i - 1].next_up();
        }
    }
    edges
}
