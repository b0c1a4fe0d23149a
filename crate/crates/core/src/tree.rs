//! Execution tree: intervals aggregated by primitive context, derived from
//! parent-guid links.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::index::{ChildIndex, GuidIndex};
use crate::model::{Guid, Interval, PrimitiveContext, PrimitiveId, Warning, WarningCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ContextNode {
    pub node_id: NodeId,
    pub context: PrimitiveContext,
    pub parent_node: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub interval_count: u64,
    /// Σ duration of intervals whose context is exactly this node's.
    pub inclusive_duration: u64,
    /// `inclusive_duration` of this node plus all descendant nodes.
    pub subtree_duration: u64,
    /// Positions of this node's intervals, sorted by `(enter, guid)`.
    pub instances: Vec<u32>,
}

impl ContextNode {
    pub fn primitive(&self) -> PrimitiveId {
        self.context.leaf()
    }

    /// 1 for roots.
    pub fn depth(&self) -> usize {
        self.context.depth()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ExecutionTree {
    pub roots: Vec<NodeId>,
    pub nodes: Vec<ContextNode>,
    /// Node of every interval, by interval position.
    pub interval_node: Vec<NodeId>,
    /// Parent position actually used for each interval; `None` for roots,
    /// unresolved parents and broken cycle members.
    pub effective_parent: Vec<Option<u32>>,
    pub unresolved_parent_count: u64,
    pub cycle_break_count: u64,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("unknown tree node {0}")]
    UnknownNode(NodeId),
    #[error("unknown interval guid {0}")]
    UnknownGuid(Guid),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Link {
    None,
    Resolved(u32),
    Unresolved,
}

/// Build the execution tree over intervals sorted by `(enter, guid)`.
///
/// An interval's context is its parent's context extended by its own
/// primitive. Intervals without a parent, or whose parent guid is not in the
/// trace (`UNRESOLVED_PARENT`), root at `[primitive]`. Every interval on a
/// parent-link cycle is treated as a root (`PARENT_CYCLE`).
pub fn build_execution_tree(intervals: &[Interval]) -> ExecutionTree {
    let n = intervals.len();
    let guids = GuidIndex::build(intervals);
    let mut warnings = Vec::new();

    let mut unresolved_parent_count = 0u64;
    let links: Vec<Link> = intervals
        .iter()
        .map(|iv| match iv.parent {
            None => Link::None,
            Some(p) => match guids.get(p) {
                Some(pi) => Link::Resolved(pi as u32),
                None => {
                    unresolved_parent_count += 1;
                    warnings.push(Warning::new(
                        WarningCode::UnresolvedParent,
                        format!("interval {} names unknown parent {p}; treated as root", iv.guid),
                    ));
                    Link::Unresolved
                }
            },
        })
        .collect();

    // Cycle detection on the functional parent graph.
    const UNSEEN: u8 = 0;
    const ON_PATH: u8 = 1;
    const DONE: u8 = 2;
    let mut state = alloc::vec![UNSEEN; n];
    let mut on_cycle = alloc::vec![false; n];
    let mut cycle_break_count = 0u64;
    let mut path: Vec<u32> = Vec::new();
    for start in 0..n {
        if state[start] != UNSEEN {
            continue;
        }
        path.clear();
        let mut cur = start;
        loop {
            state[cur] = ON_PATH;
            path.push(cur as u32);
            match links[cur] {
                Link::Resolved(p) if state[p as usize] == UNSEEN => cur = p as usize,
                Link::Resolved(p) if state[p as usize] == ON_PATH => {
                    let from = path.iter().position(|&x| x == p).expect("on path");
                    let members = &path[from..];
                    for &m in members {
                        on_cycle[m as usize] = true;
                    }
                    cycle_break_count += 1;
                    let mut list: Vec<u64> = members.iter().map(|&m| intervals[m as usize].guid.0).collect();
                    list.sort_unstable();
                    warnings.push(Warning::new(
                        WarningCode::ParentCycle,
                        format!("parent links form a cycle over guids {list:?}; each treated as root"),
                    ));
                    break;
                }
                _ => break,
            }
        }
        for &m in &path {
            state[m as usize] = DONE;
        }
    }

    let effective_parent: Vec<Option<u32>> = (0..n)
        .map(|i| match links[i] {
            Link::Resolved(p) if !on_cycle[i] => Some(p),
            _ => None,
        })
        .collect();

    // Assign nodes, ancestors first.
    const UNASSIGNED: u32 = u32::MAX;
    let mut interval_node = alloc::vec![UNASSIGNED; n];
    let mut nodes: Vec<ContextNode> = Vec::new();
    let mut lookup: BTreeMap<(Option<NodeId>, PrimitiveId), NodeId> = BTreeMap::new();
    let mut roots = Vec::new();
    let mut chain: Vec<usize> = Vec::new();
    for start in 0..n {
        if interval_node[start] != UNASSIGNED {
            continue;
        }
        chain.clear();
        let mut cur = start;
        loop {
            chain.push(cur);
            match effective_parent[cur] {
                Some(p) if interval_node[p as usize] == UNASSIGNED => cur = p as usize,
                _ => break,
            }
        }
        for &i in chain.iter().rev() {
            let parent_node = effective_parent[i].map(|p| NodeId(interval_node[p as usize]));
            let prim = intervals[i].primitive;
            let node = *lookup.entry((parent_node, prim)).or_insert_with(|| {
                let id = NodeId(nodes.len() as u32);
                let context = match parent_node {
                    Some(pn) => nodes[pn.index()].context.child(prim),
                    None => PrimitiveContext::root(prim),
                };
                nodes.push(ContextNode {
                    node_id: id,
                    context,
                    parent_node,
                    children: Vec::new(),
                    interval_count: 0,
                    inclusive_duration: 0,
                    subtree_duration: 0,
                    instances: Vec::new(),
                });
                match parent_node {
                    Some(pn) => nodes[pn.index()].children.push(id),
                    None => roots.push(id),
                }
                id
            });
            interval_node[i] = node.0;
        }
    }

    for (i, iv) in intervals.iter().enumerate() {
        let node = &mut nodes[interval_node[i] as usize];
        node.interval_count += 1;
        node.inclusive_duration += iv.duration();
        node.instances.push(i as u32);
    }
    // Children are always created after their parent node.
    for id in (0..nodes.len()).rev() {
        nodes[id].subtree_duration += nodes[id].inclusive_duration;
        if let Some(p) = nodes[id].parent_node {
            let add = nodes[id].subtree_duration;
            nodes[p.index()].subtree_duration += add;
        }
    }

    ExecutionTree {
        roots,
        nodes,
        interval_node: interval_node.into_iter().map(NodeId).collect(),
        effective_parent,
        unresolved_parent_count,
        cycle_break_count,
        warnings,
    }
}

impl ExecutionTree {
    pub fn node(&self, id: NodeId) -> Result<&ContextNode, TreeError> {
        self.nodes.get(id.index()).ok_or(TreeError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Interval positions of a node, sorted by enter time.
    pub fn node_instances(&self, id: NodeId) -> Result<&[u32], TreeError> {
        Ok(&self.node(id)?.instances)
    }

    /// The node and every node below it, in preorder.
    pub fn subtree_nodes(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.node(id)?;
        let mut out = Vec::new();
        let mut stack = alloc::vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n.index()].children.iter().rev().copied());
        }
        Ok(out)
    }

    /// Positions of every interval in the node's subtree, sorted.
    pub fn subtree_intervals(&self, id: NodeId) -> Result<Vec<u32>, TreeError> {
        let mut out: Vec<u32> = Vec::new();
        for n in self.subtree_nodes(id)? {
            out.extend_from_slice(&self.nodes[n.index()].instances);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Ancestor positions of an interval, root first. Stops at roots,
    /// unresolved parents and broken cycles.
    pub fn ancestors(&self, position: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut cur = self.effective_parent.get(position).copied().flatten();
        while let Some(p) = cur {
            out.push(p);
            cur = self.effective_parent[p as usize];
        }
        out.reverse();
        out
    }

    /// Child index over the effective (acyclic) parent links.
    pub fn child_index(&self, intervals: &[Interval]) -> ChildIndex {
        ChildIndex::build(intervals, |i| self.effective_parent[i].map(|p| p as usize))
    }
}

/// Guids of a node's intervals, sorted by enter time.
pub fn node_instances(tree: &ExecutionTree, intervals: &[Interval], node: NodeId) -> Result<Vec<Guid>, TreeError> {
    Ok(tree
        .node_instances(node)?
        .iter()
        .map(|&i| intervals[i as usize].guid)
        .collect())
}

/// Guids reachable from `guid` through child links, excluding itself.
pub fn descendants_of(
    intervals: &[Interval],
    guids: &GuidIndex,
    children: &ChildIndex,
    guid: Guid,
) -> Result<Vec<Guid>, TreeError> {
    let pos = guids.get(guid).ok_or(TreeError::UnknownGuid(guid))?;
    let (desc, _) = children.descendants(pos, usize::MAX);
    Ok(desc.into_iter().map(|i| intervals[i as usize].guid).collect())
}

/// Guids of `guid`'s ancestors, root first.
pub fn ancestors_of(
    intervals: &[Interval],
    guids: &GuidIndex,
    tree: &ExecutionTree,
    guid: Guid,
) -> Result<Vec<Guid>, TreeError> {
    let pos = guids.get(guid).ok_or(TreeError::UnknownGuid(guid))?;
    Ok(tree
        .ancestors(pos)
        .into_iter()
        .map(|i| intervals[i as usize].guid)
        .collect())
}
