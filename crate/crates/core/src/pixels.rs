//! Exact pixel geometry over a time range.
//!
//! Pixel `i` of a `W`-wide grid over `[t0, t1)` covers the real interval
//! `[t0 + i·s/W, t0 + (i+1)·s/W)` with `s = t1 - t0`. All comparisons are
//! done in "scaled ticks" (ticks × W) so edges are integers and overlap
//! tests agree bit-for-bit with a brute-force check.

use core::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGrid {
    pub t0: u64,
    pub t1: u64,
    pub width: u32,
}

impl PixelGrid {
    /// `None` unless `t0 < t1` and `width >= 1`.
    pub fn new(t0: u64, t1: u64, width: u32) -> Option<Self> {
        (t0 < t1 && width >= 1).then_some(PixelGrid { t0, t1, width })
    }

    #[inline]
    pub fn span(&self) -> u64 {
        self.t1 - self.t0
    }

    #[inline]
    pub fn scale(&self) -> u128 {
        self.width as u128
    }

    /// Scaled left edge of pixel `i` (`i == width` gives the right edge of the grid).
    #[inline]
    pub fn edge(&self, i: u32) -> u128 {
        self.t0 as u128 * self.scale() + i as u128 * self.span() as u128
    }

    #[inline]
    pub fn scaled(&self, t: u64) -> u128 {
        t as u128 * self.scale()
    }

    /// Real-valued time of a pixel edge, for reporting.
    pub fn edge_time(&self, i: u32) -> f64 {
        self.t0 as f64 + i as f64 * self.span() as f64 / self.width as f64
    }

    /// Pixel span in ticks (may be fractional).
    pub fn pixel_ticks(&self) -> f64 {
        self.span() as f64 / self.width as f64
    }

    /// Pixels that `[enter, leave)` overlaps, or `None` if it misses the grid.
    pub fn pixel_range(&self, enter: u64, leave: u64) -> Option<Range<u32>> {
        if enter >= self.t1 || leave <= self.t0 || enter >= leave {
            return None;
        }
        let w = self.scale();
        let s = self.span() as u128;
        let first = if enter <= self.t0 {
            0
        } else {
            ((enter - self.t0) as u128 * w / s) as u32
        };
        let last = if leave >= self.t1 {
            self.width - 1
        } else {
            // Largest i with edge(i) < leave·W.
            let num = (leave - self.t0) as u128 * w;
            (num.div_ceil(s) - 1) as u32
        };
        Some(first..last + 1)
    }

    /// Overlap of `[enter, leave)` with pixel `i`, in scaled ticks.
    #[inline]
    pub fn overlap_scaled(&self, i: u32, enter: u64, leave: u64) -> u128 {
        let lo = self.scaled(enter).max(self.edge(i));
        let hi = self.scaled(leave).min(self.edge(i + 1));
        hi.saturating_sub(lo)
    }

    /// Rasterize `[enter, leave)` into per-pixel scaled-tick coverage.
    ///
    /// Interior pixels are fully covered (`span` scaled ticks each); the at
    /// most two boundary pixels carry their exact partial overlap.
    pub fn raster(&self, enter: u64, leave: u64) -> Raster {
        let mut out = Raster::default();
        let Some(r) = self.pixel_range(enter, leave) else {
            return out;
        };
        let s = self.span() as u128;
        let first = r.start;
        let last = r.end - 1;
        let ov_first = self.overlap_scaled(first, enter, leave);
        let ov_last = if first == last {
            ov_first
        } else {
            self.overlap_scaled(last, enter, leave)
        };
        let mut lo = first;
        let mut hi = last + 1;
        if ov_first < s {
            out.partial[0] = Some((first, ov_first));
            lo = first + 1;
        }
        if first != last && ov_last < s {
            out.partial[1] = Some((last, ov_last));
            hi = last;
        }
        if lo < hi {
            out.full = lo..hi;
        }
        out
    }
}

/// Coverage of one span on a [`PixelGrid`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Raster {
    /// Boundary pixels with their partial overlap in scaled ticks.
    pub partial: [Option<(u32, u128)>; 2],
    /// Fully covered pixels.
    pub full: Range<u32>,
}

impl Raster {
    /// Every touched pixel with its overlap, given the grid's span.
    pub fn pixels(&self, span: u64) -> impl Iterator<Item = (u32, u128)> + '_ {
        let full = self.full.clone().map(move |i| (i, span as u128));
        self.partial.iter().flatten().copied().chain(full)
    }
}

/// `num / den` as f64, exact whenever the quotient is representable.
pub(crate) fn ratio(num: u128, den: u128) -> f64 {
    debug_assert!(den > 0);
    const EXACT: u128 = 1 << 53;
    if num < EXACT && den < EXACT {
        return num as f64 / den as f64;
    }
    let q = num / den;
    let r = num % den;
    if r == 0 {
        q as f64
    } else {
        q as f64 + r as f64 / den as f64
    }
}
