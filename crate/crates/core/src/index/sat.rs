use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::model::{Interval, LocationId};
use crate::pixels::{ratio, PixelGrid};
use crate::tree::NodeId;

pub const DEFAULT_BIN_COUNT: u32 = 4096;

/// Which series a summed area table accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum SeriesKey {
    UtilizationTotal,
    UtilizationLocation(LocationId),
    UtilizationNode(NodeId),
    /// Bin-wise sum of several tables, built on demand.
    Combined,
}

/// Prefix sums of busy ticks over `bin_count` equal time bins covering `[0, span)`.
///
/// Bin `k` covers `[k·w, min((k+1)·w, span))` with `w = ceil(span / bin_count)`;
/// bins past `span` are empty. `prefix[k]` is the busy mass of bins `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SummedAreaTable {
    pub key: SeriesKey,
    pub bin_count: u32,
    pub bin_width: u64,
    pub span: u64,
    pub prefix: Vec<u64>,
}

impl SummedAreaTable {
    pub fn empty(key: SeriesKey, span: u64, bin_count: u32) -> Self {
        let bin_count = bin_count.max(1);
        let bin_width = span.div_ceil(bin_count as u64).max(1);
        SummedAreaTable {
            key,
            bin_count,
            bin_width,
            span,
            prefix: alloc::vec![0; bin_count as usize + 1],
        }
    }

    /// Real width of bin `k` after clipping to the span.
    #[inline]
    pub fn bin_extent(&self, k: u32) -> u64 {
        let lo = k as u64 * self.bin_width;
        let hi = (lo + self.bin_width).min(self.span);
        hi.saturating_sub(lo)
    }

    #[inline]
    pub fn bin_mass(&self, k: u32) -> u64 {
        self.prefix[k as usize + 1] - self.prefix[k as usize]
    }

    pub fn total(&self) -> u64 {
        *self.prefix.last().expect("prefix has bin_count + 1 entries")
    }

    /// Per-bin masses.
    pub fn masses(&self) -> Vec<u64> {
        self.prefix.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Exact mass between two bin boundaries.
    pub fn aligned_sum(&self, bin_lo: u32, bin_hi: u32) -> u64 {
        let hi = bin_hi.min(self.bin_count) as usize;
        let lo = (bin_lo as usize).min(hi);
        self.prefix[hi] - self.prefix[lo]
    }

    /// Bin-wise sum of tables sharing the same geometry.
    pub fn combine<'a, I>(tables: I, span: u64, bin_count: u32) -> Self
    where
        I: IntoIterator<Item = &'a SummedAreaTable>,
    {
        let mut out = SummedAreaTable::empty(SeriesKey::Combined, span, bin_count);
        for t in tables {
            debug_assert_eq!((t.bin_count, t.bin_width), (out.bin_count, out.bin_width));
            for (o, v) in out.prefix.iter_mut().zip(&t.prefix) {
                *o += v;
            }
        }
        out
    }

    /// Mass inside `[x0, x1)`, bounds given in ticks × `scale`.
    ///
    /// Boundary bins are prorated linearly by their overlap.
    fn mass_fraction(&self, x0: u128, x1: u128, scale: u128) -> Fraction {
        let limit = self.span as u128 * scale;
        let x1 = x1.min(limit);
        if self.span == 0 || x0 >= x1 {
            return Fraction::ZERO;
        }
        let bw = self.bin_width as u128 * scale;
        let k0 = (x0 / bw) as u32;
        let k1 = (x1.div_ceil(bw) - 1) as u32;
        let bin_lo = |k: u32| k as u128 * bw;
        let bin_hi = |k: u32| (bin_lo(k) + bw).min(limit);
        if k0 == k1 {
            let w0 = self.bin_extent(k0) as u128;
            let m0 = self.bin_mass(k0) as u128;
            return Fraction::of(&[(m0, x1 - x0, w0)], 0, scale);
        }
        let full = self.aligned_sum(k0 + 1, k1) as u128;
        let (w0, w1) = (self.bin_extent(k0) as u128, self.bin_extent(k1) as u128);
        let (m0, m1) = (self.bin_mass(k0) as u128, self.bin_mass(k1) as u128);
        let o0 = bin_hi(k0) - x0;
        let o1 = x1 - bin_lo(k1);
        Fraction::of(&[(m0, o0, w0), (m1, o1, w1)], full, scale)
    }

    /// Busy ticks in `[t0, t1)`; exact on bin boundaries, boundary bins
    /// prorated otherwise. Out-of-range bounds are clamped to the span.
    pub fn range_sum(&self, t0: u64, t1: u64) -> f64 {
        let t1 = t1.min(self.span);
        if t0 >= t1 {
            return 0.0;
        }
        self.mass_fraction(t0 as u128, t1 as u128, 1).value(1)
    }

    /// Average busy resources per pixel: `busy ticks in pixel / pixel ticks`.
    pub fn pixel_values(&self, grid: &PixelGrid) -> Vec<f64> {
        let span_q = grid.span() as u128;
        (0..grid.width)
            .map(|i| {
                self.mass_fraction(grid.edge(i), grid.edge(i + 1), grid.scale())
                    .value(span_q)
            })
            .collect()
    }
}

impl Default for SummedAreaTable {
    fn default() -> Self {
        SummedAreaTable::empty(SeriesKey::UtilizationTotal, 0, 1)
    }
}

/// A bin mass `full + Σ m·o/(w·scale)`, kept as an exact fraction
/// `num / (scale · Π w)` while it fits in u128.
struct Fraction {
    num: Option<u128>,
    /// `Π w` over the prorated bins.
    widths: u128,
    scale: u128,
    approx: f64,
}

impl Fraction {
    const ZERO: Fraction = Fraction {
        num: Some(0),
        widths: 1,
        scale: 1,
        approx: 0.0,
    };

    fn of(parts: &[(u128, u128, u128)], full: u128, scale: u128) -> Fraction {
        let parts = parts.iter().filter(|p| p.2 > 0);
        let mut approx = full as f64;
        for &(m, o, w) in parts.clone() {
            approx += m as f64 * (o as f64 / (w as f64 * scale as f64));
        }
        let exact = (|| {
            let mut widths = 1u128;
            for &(_, _, w) in parts.clone() {
                widths = widths.checked_mul(w)?;
            }
            let mut num = full.checked_mul(widths)?.checked_mul(scale)?;
            for &(m, o, w) in parts {
                num = num.checked_add(m.checked_mul(o)?.checked_mul(widths / w)?)?;
            }
            Some((num, widths))
        })();
        match exact {
            Some((num, widths)) => Fraction {
                num: Some(num),
                widths,
                scale,
                approx,
            },
            None => Fraction {
                num: None,
                widths: 1,
                scale,
                approx,
            },
        }
    }

    /// `mass · scale / divisor`: the mass in ticks for `scale = divisor = 1`,
    /// or mass / pixel span for `scale = W, divisor = t1 - t0`.
    fn value(&self, divisor: u128) -> f64 {
        if let (Some(num), Some(den)) = (self.num, self.widths.checked_mul(divisor)) {
            return ratio(num, den);
        }
        self.approx * self.scale as f64 / divisor as f64
    }
}

/// Build a utilization table from the given intervals over `[0, span)`.
pub fn build_utilization_sat<'a, I>(intervals: I, span: u64, bin_count: u32, key: SeriesKey) -> SummedAreaTable
where
    I: IntoIterator<Item = &'a Interval>,
{
    let mut sat = SummedAreaTable::empty(key, span, bin_count);
    let b = sat.bin_count as usize;
    let bw = sat.bin_width;
    let mut mass = alloc::vec![0u64; b];
    let mut full = alloc::vec![0i64; b + 1];
    for iv in intervals {
        let a = iv.enter.0;
        let e = iv.leave.0.min(span);
        if a >= e {
            continue;
        }
        let fb = (a / bw) as usize;
        let lb = ((e - 1) / bw) as usize;
        if fb == lb {
            mass[fb] += e - a;
            continue;
        }
        mass[fb] += (fb as u64 + 1) * bw - a;
        mass[lb] += e - lb as u64 * bw;
        if lb > fb + 1 {
            full[fb + 1] += 1;
            full[lb] -= 1;
        }
    }
    let mut running = 0i64;
    for k in 0..b {
        running += full[k];
        mass[k] += running as u64 * sat.bin_extent(k as u32);
        sat.prefix[k + 1] = sat.prefix[k] + mass[k];
    }
    sat
}
