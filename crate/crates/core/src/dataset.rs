//! The immutable bundle every query runs against.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Deref;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::index::{
    build_interval_tree, build_utilization_sat, ChildIndex, GuidIndex, IntervalTree, SeriesKey, SummedAreaTable,
    DEFAULT_BIN_COUNT,
};
use crate::ingest::RawTrace;
use crate::model::{CounterId, DatasetMeta, Guid, Interner, Interval, Location, LocationId, TimePoint, Warning};
use crate::tree::{build_execution_tree, ExecutionTree, NodeId, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Summed-area-table resolution; a power of two.
    pub bin_count: u32,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            bin_count: DEFAULT_BIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("bin count must be a power of two >= 1, got {0}")]
    InvalidBinCount(u32),
    #[error("bundle parts are inconsistent: {0}")]
    Inconsistent(String),
}

/// A source file attached to the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

/// Samples of one counter on one location.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CounterSeries {
    pub counter: CounterId,
    pub location: LocationId,
    pub times: Vec<u64>,
    pub values: Vec<f64>,
}

/// Counter series sorted by `(counter, location)`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CounterTable {
    pub series: Vec<CounterSeries>,
}

impl CounterTable {
    pub fn series_of(&self, counter: CounterId) -> &[CounterSeries] {
        let lo = self.series.partition_point(|s| s.counter < counter);
        let hi = self.series.partition_point(|s| s.counter <= counter);
        &self.series[lo..hi]
    }
}

/// Time-domain indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TimeIndex {
    pub bin_count: u32,
    pub total: SummedAreaTable,
    pub per_location: Vec<SummedAreaTable>,
    pub tree: IntervalTree,
    pub location_trees: Vec<IntervalTree>,
    pub guids: GuidIndex,
    pub children: ChildIndex,
    /// All interval durations, ascending.
    pub durations: Vec<u64>,
}

/// Everything persisted for a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DatasetParts {
    pub meta: DatasetMeta,
    pub intervals: Vec<Interval>,
    pub locations: Vec<Location>,
    pub primitives: Interner,
    pub counter_names: Interner,
    pub tree: ExecutionTree,
    pub index: TimeIndex,
    pub counters: CounterTable,
    pub sources: Vec<SourceFile>,
    pub warnings: Vec<Warning>,
}

/// Indices of one execution-tree node's subtree, built on first use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIndex {
    /// Interval positions in the subtree, ascending.
    pub members: Vec<u32>,
    pub sat: SummedAreaTable,
    /// Member durations, ascending.
    pub durations: Vec<u64>,
}

#[derive(Debug, Default)]
struct NodeCache {
    #[cfg(feature = "std")]
    map: std::sync::RwLock<alloc::collections::BTreeMap<NodeId, Arc<NodeIndex>>>,
}

/// A bundled dataset: intervals, execution tree, indices and counters.
#[derive(Debug)]
pub struct Dataset {
    parts: DatasetParts,
    #[cfg_attr(not(feature = "std"), allow(dead_code))]
    cache: NodeCache,
}

impl Deref for Dataset {
    type Target = DatasetParts;

    fn deref(&self) -> &DatasetParts {
        &self.parts
    }
}

impl Dataset {
    /// Build the tree and all indices from a validated trace.
    pub fn build(raw: RawTrace, sources: Vec<SourceFile>, options: BuildOptions) -> Result<Dataset, DatasetError> {
        if options.bin_count == 0 || !options.bin_count.is_power_of_two() {
            return Err(DatasetError::InvalidBinCount(options.bin_count));
        }
        let span = raw.time_end().0;
        let bins = options.bin_count;
        let tree = build_execution_tree(&raw.intervals);
        let intervals = raw.intervals;
        let location_count = raw.locations.len();

        let mut by_location: Vec<Vec<&Interval>> = alloc::vec![Vec::new(); location_count];
        for iv in &intervals {
            by_location[iv.location.index()].push(iv);
        }
        let per_location = by_location
            .iter()
            .enumerate()
            .map(|(l, ivs)| {
                build_utilization_sat(
                    ivs.iter().copied(),
                    span,
                    bins,
                    SeriesKey::UtilizationLocation(LocationId(l as u32)),
                )
            })
            .collect();
        let location_trees = (0..location_count)
            .map(|l| {
                IntervalTree::from_spans(
                    intervals
                        .iter()
                        .enumerate()
                        .filter(|(_, iv)| iv.location.index() == l)
                        .map(|(i, iv)| (iv.enter.0, iv.leave.0, i as u32))
                        .collect(),
                )
            })
            .collect();
        let mut durations: Vec<u64> = intervals.iter().map(Interval::duration).collect();
        durations.sort_unstable();

        let index = TimeIndex {
            bin_count: bins,
            total: build_utilization_sat(&intervals, span, bins, SeriesKey::UtilizationTotal),
            per_location,
            tree: build_interval_tree(&intervals),
            location_trees,
            guids: GuidIndex::build(&intervals),
            children: tree.child_index(&intervals),
            durations,
        };

        let mut counters = CounterTable::default();
        for s in &raw.counters {
            match counters.series.last_mut() {
                Some(last) if last.counter == s.counter && last.location == s.location => {
                    last.times.push(s.time.0);
                    last.values.push(s.value);
                }
                _ => counters.series.push(CounterSeries {
                    counter: s.counter,
                    location: s.location,
                    times: alloc::vec![s.time.0],
                    values: alloc::vec![s.value],
                }),
            }
        }

        let mut warnings = raw.warnings;
        warnings.extend(tree.warnings.iter().cloned());

        let meta = DatasetMeta {
            dataset_id: String::new(),
            label: String::new(),
            time_begin: TimePoint::ZERO,
            time_end: TimePoint(span),
            location_count: location_count as u32,
            interval_count: intervals.len() as u64,
            primitive_names: raw.primitives.names().to_vec(),
            counter_names: raw.counter_names.names().to_vec(),
            source_files: (!sources.is_empty()).then(|| sources.iter().map(|s| s.path.clone()).collect()),
        };

        Ok(Dataset::from_parts_unchecked(DatasetParts {
            meta,
            intervals,
            locations: raw.locations,
            primitives: raw.primitives,
            counter_names: raw.counter_names,
            tree,
            index,
            counters,
            sources,
            warnings,
        }))
    }

    fn from_parts_unchecked(parts: DatasetParts) -> Dataset {
        Dataset {
            parts,
            cache: NodeCache::default(),
        }
    }

    /// Reassemble a dataset from persisted parts, checking cross-part sizes.
    pub fn from_parts(parts: DatasetParts) -> Result<Dataset, DatasetError> {
        let n = parts.intervals.len();
        let l = parts.locations.len();
        let checks = [
            (parts.tree.interval_node.len() == n, "tree covers every interval"),
            (
                parts.tree.effective_parent.len() == n,
                "parent links cover every interval",
            ),
            (parts.index.guids.len() == n, "guid index covers every interval"),
            (parts.index.tree.len() == n, "interval tree covers every interval"),
            (parts.index.durations.len() == n, "duration index covers every interval"),
            (parts.index.per_location.len() == l, "one table per location"),
            (parts.index.location_trees.len() == l, "one tree per location"),
            (parts.meta.interval_count == n as u64, "meta interval count"),
            (parts.meta.location_count == l as u32, "meta location count"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(DatasetError::Inconsistent(what.into()));
            }
        }
        Ok(Dataset::from_parts_unchecked(parts))
    }

    pub fn parts(&self) -> &DatasetParts {
        &self.parts
    }

    pub fn into_parts(self) -> DatasetParts {
        self.parts
    }

    pub fn set_identity(&mut self, dataset_id: impl Into<String>, label: impl Into<String>) {
        self.parts.meta.dataset_id = dataset_id.into();
        self.parts.meta.label = label.into();
    }

    /// Trace span in ticks.
    pub fn span(&self) -> u64 {
        self.meta.time_end.0
    }

    pub fn position_of(&self, guid: Guid) -> Option<usize> {
        self.index.guids.get(guid)
    }

    pub fn interval(&self, guid: Guid) -> Option<&Interval> {
        self.position_of(guid).map(|p| &self.intervals[p])
    }

    pub fn primitive_name(&self, interval: &Interval) -> &str {
        self.primitives.name(interval.primitive.0).unwrap_or("")
    }

    /// Subtree indices of a node, built and cached on first request.
    pub fn node_index(&self, node: NodeId) -> Result<Arc<NodeIndex>, TreeError> {
        self.tree.node(node)?;
        #[cfg(feature = "std")]
        {
            if let Some(hit) = self.cache.map.read().expect("node cache poisoned").get(&node) {
                return Ok(hit.clone());
            }
        }
        let built = Arc::new(self.build_node_index(node)?);
        #[cfg(feature = "std")]
        let built = self
            .cache
            .map
            .write()
            .expect("node cache poisoned")
            .entry(node)
            .or_insert(built)
            .clone();
        Ok(built)
    }

    fn build_node_index(&self, node: NodeId) -> Result<NodeIndex, TreeError> {
        let members = self.tree.subtree_intervals(node)?;
        let sat = build_utilization_sat(
            members.iter().map(|&i| &self.intervals[i as usize]),
            self.span(),
            self.index.bin_count,
            SeriesKey::UtilizationNode(node),
        );
        let mut durations: Vec<u64> = members.iter().map(|&i| self.intervals[i as usize].duration()).collect();
        durations.sort_unstable();
        Ok(NodeIndex {
            members,
            sat,
            durations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest_text;

    const FIXTURE: &str = "\
L 0 0 0
L 1 0 1
E 0 0 1 - run
E 10 1 2 1 loop
X 40 1 2
E 50 1 3 1 loop
X 70 1 3
X 100 0 1
C 0 0 cycles 0
C 100 0 cycles 1000
";

    fn fixture() -> Dataset {
        Dataset::build(ingest_text(FIXTURE).unwrap(), Vec::new(), BuildOptions { bin_count: 4 }).unwrap()
    }

    #[test]
    fn builds_everything() {
        let ds = fixture();
        assert_eq!(ds.meta.interval_count, 3);
        assert_eq!(ds.meta.location_count, 2);
        assert_eq!(ds.span(), 100);
        assert_eq!(ds.index.total.total(), 100 + 30 + 20);
        assert_eq!(ds.index.per_location[1].total(), 50);
        assert_eq!(ds.index.durations, [20, 30, 100]);
        assert_eq!(ds.counters.series.len(), 1);
        assert_eq!(ds.counters.series_of(CounterId(0)).len(), 1);
        assert!(ds.counters.series_of(CounterId(1)).is_empty());
    }

    #[test]
    fn node_index_is_cached_and_matches_subtree() {
        let ds = fixture();
        let a = ds.node_index(NodeId(0)).unwrap();
        let b = ds.node_index(NodeId(0)).unwrap();
        assert_eq!(a.members, [0, 1, 2]);
        assert_eq!(a.sat.total(), 150);
        #[cfg(feature = "std")]
        assert!(Arc::ptr_eq(&a, &b));
        let _ = b;
        assert!(ds.node_index(NodeId(9)).is_err());
    }

    #[test]
    fn rejects_non_power_of_two_bins() {
        let raw = ingest_text(FIXTURE).unwrap();
        assert_eq!(
            Dataset::build(raw, Vec::new(), BuildOptions { bin_count: 6 }).unwrap_err(),
            DatasetError::InvalidBinCount(6)
        );
    }

    #[test]
    fn from_parts_round_trip_and_validation() {
        let ds = fixture();
        let parts = ds.into_parts();
        let again = Dataset::from_parts(parts.clone()).unwrap();
        assert_eq!(again.parts(), &parts);
        let mut broken = parts;
        broken.meta.interval_count = 7;
        assert!(Dataset::from_parts(broken).is_err());
    }
}
