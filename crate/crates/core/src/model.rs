//! Domain types shared by every other module.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Nanoseconds since the trace epoch. After ingest the earliest event is tick 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct TimePoint(pub u64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0);

    #[inline]
    pub fn ticks(self) -> u64 {
        self.0
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Globally unique interval identifier within one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct Guid(pub u64);

impl fmt::Display for Guid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Dense location index, `0..location_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct LocationId(pub u32);

impl LocationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interned primitive name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct PrimitiveId(pub u32);

/// Interned counter name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct CounterId(pub u32);

/// A computational resource: one hardware thread on one core.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Location {
    pub index: LocationId,
    pub core_id: i64,
    pub thread_id: i64,
}

impl Location {
    /// `"{core}-{thread}"`, the label the views show for a resource row.
    pub fn label(&self) -> String {
        alloc::format!("{}-{}", self.core_id, self.thread_id)
    }
}

/// One durational trace event on one location.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Interval {
    pub guid: Guid,
    pub parent: Option<Guid>,
    pub location: LocationId,
    pub primitive: PrimitiveId,
    pub enter: TimePoint,
    pub leave: TimePoint,
}

impl Interval {
    #[inline]
    pub fn duration(&self) -> u64 {
        duration(self)
    }

    /// True when `[enter, leave)` intersects `[t0, t1)`.
    #[inline]
    pub fn overlaps(&self, t0: u64, t1: u64) -> bool {
        self.enter.0 < t1 && self.leave.0 > t0
    }

    /// Ticks of `[enter, leave)` falling inside `[t0, t1)`.
    #[inline]
    pub fn overlap_ticks(&self, t0: u64, t1: u64) -> u64 {
        let lo = self.enter.0.max(t0);
        let hi = self.leave.0.min(t1);
        hi.saturating_sub(lo)
    }
}

/// `leave - enter` in ticks. Intervals are validated at ingest so this is > 0.
#[inline]
pub fn duration(interval: &Interval) -> u64 {
    interval.leave.0 - interval.enter.0
}

/// Root-first path of primitive ids identifying one execution-tree node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct PrimitiveContext(pub Vec<PrimitiveId>);

impl PrimitiveContext {
    pub fn root(primitive: PrimitiveId) -> Self {
        PrimitiveContext(alloc::vec![primitive])
    }

    pub fn child(&self, primitive: PrimitiveId) -> Self {
        let mut path = self.0.clone();
        path.push(primitive);
        PrimitiveContext(path)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn leaf(&self) -> PrimitiveId {
        *self.0.last().expect("contexts are never empty")
    }
}

/// One accumulator reading of a performance counter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CounterSample {
    pub location: LocationId,
    pub counter: CounterId,
    pub time: TimePoint,
    pub value: f64,
}

/// Catalog-level description of one bundled dataset.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DatasetMeta {
    pub dataset_id: String,
    pub label: String,
    pub time_begin: TimePoint,
    pub time_end: TimePoint,
    pub location_count: u32,
    pub interval_count: u64,
    pub primitive_names: Vec<String>,
    pub counter_names: Vec<String>,
    pub source_files: Option<Vec<String>>,
}

/// Bijective name <-> dense id table.
///
/// Ids are assigned in lexicographic name order so that interning the same
/// set of names always yields the same ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct Interner {
    names: Vec<String>,
}

impl Interner {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        Interner { names }
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| i as u32)
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Machine-readable code for a non-fatal anomaly found while building a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(rename_all = "SCREAMING_SNAKE_CASE")
)]
pub enum WarningCode {
    UnmatchedEnter,
    UnmatchedLeave,
    ZeroDuration,
    UnknownRecord,
    Reordered,
    UndefinedLocation,
    SelfParent,
    CounterDecrease,
    UnresolvedParent,
    ParentCycle,
    MissingSource,
}

impl WarningCode {
    pub fn as_str(self) -> &'static str {
        match self {
            WarningCode::UnmatchedEnter => "UNMATCHED_ENTER",
            WarningCode::UnmatchedLeave => "UNMATCHED_LEAVE",
            WarningCode::ZeroDuration => "ZERO_DURATION",
            WarningCode::UnknownRecord => "UNKNOWN_RECORD",
            WarningCode::Reordered => "REORDERED",
            WarningCode::UndefinedLocation => "UNDEFINED_LOCATION",
            WarningCode::SelfParent => "SELF_PARENT",
            WarningCode::CounterDecrease => "COUNTER_DECREASE",
            WarningCode::UnresolvedParent => "UNRESOLVED_PARENT",
            WarningCode::ParentCycle => "PARENT_CYCLE",
            WarningCode::MissingSource => "MISSING_SOURCE",
        }
    }
}

impl fmt::Display for WarningCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Warning {
    pub code: WarningCode,
    pub message: String,
}

impl Warning {
    pub fn new(code: WarningCode, message: impl Into<String>) -> Self {
        Warning {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}
