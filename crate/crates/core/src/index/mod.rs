//! Query indices built once at bundling time.

mod children;
mod itree;
mod sat;

pub use children::{build_child_index, ChildIndex, GuidIndex};
pub use itree::{build_interval_tree, IntervalTree};
pub use sat::{build_utilization_sat, SeriesKey, SummedAreaTable, DEFAULT_BIN_COUNT};
