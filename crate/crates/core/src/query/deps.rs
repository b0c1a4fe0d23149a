use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::Serialize;

use super::QueryError;
use crate::dataset::Dataset;
use crate::model::{Guid, Interval, LocationId};
use crate::tree::NodeId;

/// Descendant lists longer than this are truncated.
pub const DESCENDANT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct DependencyChain {
    pub guid: Guid,
    /// Root first.
    pub ancestors: Vec<Guid>,
    pub children: Vec<Guid>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub descendants: Option<Vec<Guid>>,
    pub truncated: bool,
}

/// Ancestors and direct children of an interval, plus optionally every
/// descendant (capped at [`DESCENDANT_CAP`]).
pub fn dependency_chain(ds: &Dataset, guid: Guid, with_descendants: bool) -> Result<DependencyChain, QueryError> {
    let pos = ds.position_of(guid).ok_or(QueryError::UnknownGuid(guid))?;
    let guid_of = |i: &u32| ds.intervals[*i as usize].guid;
    let (descendants, truncated) = if with_descendants {
        let (d, t) = ds.index.children.descendants(pos, DESCENDANT_CAP);
        (Some(d.iter().map(guid_of).collect()), t)
    } else {
        (None, false)
    };
    Ok(DependencyChain {
        guid,
        ancestors: ds.tree.ancestors(pos).iter().map(guid_of).collect(),
        children: ds.index.children.children(pos).iter().map(guid_of).collect(),
        descendants,
        truncated,
    })
}

/// The interval drawn at `time` on `location`; the latest enter wins when
/// several overlap.
pub fn interval_at(ds: &Dataset, time: u64, location: LocationId) -> Result<Option<&Interval>, QueryError> {
    let tree = ds
        .index
        .location_trees
        .get(location.index())
        .ok_or(QueryError::UnknownLocation(location.0))?;
    let mut best: Option<&Interval> = None;
    tree.for_each_overlap(time, time.saturating_add(1), |pos| {
        let iv = &ds.intervals[pos as usize];
        if best.is_none_or(|b| (iv.enter, iv.guid) > (b.enter, b.guid)) {
            best = Some(iv);
        }
    });
    Ok(best)
}

/// Everything the selection panel shows for one interval.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct IntervalInfo {
    pub guid: Guid,
    pub parent: Option<Guid>,
    pub primitive: String,
    pub location: u32,
    pub location_label: String,
    pub enter: u64,
    pub leave: u64,
    pub duration: u64,
    pub node: NodeId,
    /// Primitive names from the root context down to this interval's.
    pub context: Vec<String>,
}

pub fn interval_info(ds: &Dataset, guid: Guid) -> Result<IntervalInfo, QueryError> {
    let pos = ds.position_of(guid).ok_or(QueryError::UnknownGuid(guid))?;
    let iv = &ds.intervals[pos];
    let node = ds.tree.interval_node[pos];
    let context = ds
        .tree
        .node(node)?
        .context
        .0
        .iter()
        .map(|p| ds.primitives.name(p.0).unwrap_or("").into())
        .collect();
    Ok(IntervalInfo {
        guid,
        parent: iv.parent,
        primitive: ds.primitive_name(iv).into(),
        location: iv.location.0,
        location_label: ds.locations[iv.location.index()].label(),
        enter: iv.enter.0,
        leave: iv.leave.0,
        duration: iv.duration(),
        node,
        context,
    })
}
