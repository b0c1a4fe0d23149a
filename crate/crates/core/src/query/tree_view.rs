use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::Serialize;

use super::QueryError;
use crate::dataset::Dataset;
use crate::tree::NodeId;

/// Levels shown when the client does not ask for a depth.
pub const DEFAULT_TREE_DEPTH: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct TreeViewNode {
    pub node_id: NodeId,
    pub parent: Option<NodeId>,
    /// Primitive name of the context leaf.
    pub name: String,
    /// 1 for the top level of the view.
    pub level: u32,
    pub interval_count: u64,
    pub inclusive_duration: u64,
    pub subtree_duration: u64,
    pub child_count: u32,
    /// Children exist but lie below the depth limit.
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct TreeView {
    pub roots: Vec<NodeId>,
    pub depth: u32,
    /// Nodes in preorder.
    pub nodes: Vec<TreeViewNode>,
}

/// The execution tree cut at `depth` levels below `root` (or below the
/// forest roots). Nodes at the last level with children are marked collapsed.
pub fn tree_view(ds: &Dataset, root: Option<NodeId>, depth: u32) -> Result<TreeView, QueryError> {
    if depth == 0 {
        return Err(QueryError::BadRange("depth must be at least 1"));
    }
    let roots = match root {
        Some(r) => {
            ds.tree.node(r)?;
            alloc::vec![r]
        }
        None => ds.tree.roots.clone(),
    };
    let mut nodes = Vec::new();
    let mut stack: Vec<(NodeId, u32)> = roots.iter().rev().map(|&r| (r, 1)).collect();
    while let Some((id, level)) = stack.pop() {
        let n = &ds.tree.nodes[id.index()];
        let expand = level < depth;
        nodes.push(TreeViewNode {
            node_id: id,
            parent: n.parent_node,
            name: ds.primitives.name(n.primitive().0).unwrap_or("").into(),
            level,
            interval_count: n.interval_count,
            inclusive_duration: n.inclusive_duration,
            subtree_duration: n.subtree_duration,
            child_count: n.children.len() as u32,
            collapsed: !expand && !n.children.is_empty(),
        });
        if expand {
            stack.extend(n.children.iter().rev().map(|&c| (c, level + 1)));
        }
    }
    Ok(TreeView { roots, depth, nodes })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
pub struct ContextSummary {
    pub node_id: NodeId,
    /// Context path, primitive names joined by `/`.
    pub path: String,
    pub interval_count: u64,
    pub subtree_duration: u64,
}

/// The `n` nodes with the largest subtree duration, ties by node id.
pub fn top_contexts(ds: &Dataset, n: usize) -> Vec<ContextSummary> {
    let mut order: Vec<&crate::tree::ContextNode> = ds.tree.nodes.iter().collect();
    order.sort_by_key(|c| (core::cmp::Reverse(c.subtree_duration), c.node_id));
    order
        .into_iter()
        .take(n)
        .map(|c| ContextSummary {
            node_id: c.node_id,
            path: c
                .context
                .0
                .iter()
                .map(|p| ds.primitives.name(p.0).unwrap_or(""))
                .collect::<Vec<_>>()
                .join("/"),
            interval_count: c.interval_count,
            subtree_duration: c.subtree_duration,
        })
        .collect()
}
