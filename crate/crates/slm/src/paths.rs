//! Partial-path extraction: for an expansion site, the set of tree paths
//! from every leaf to the expanded parent, plus the path from the root.
//!
//! A leaf is any node that currently has no children, except holes. This
//! covers fully generated structures (subtoken chains end in `EOS_TOK`,
//! nonterminals in `EOS_NODE`) as well as partially generated ones, where
//! the tip of an unfinished chain or a still-childless nonterminal counts.

use thiserror::Error;

use crate::ast::{dfs_order, NodeId, NodeKind, Tree};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PathError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

/// Where a path starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOrigin {
    Leaf(NodeId),
    Root,
}

/// The unique simple path from a leaf (or the root) to the expanded parent:
/// up to the lowest common ancestor, then down. Both endpoints included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialPath {
    pub origin: PathOrigin,
    pub destination: NodeId,
    pub nodes: Vec<NodeId>,
}

/// All partial paths for one prediction step.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    /// One path per leaf, ordered by leaf DFS position.
    pub leaf_paths: Vec<PartialPath>,
    /// Path from node 0 down to the expanded parent.
    pub root_path: PartialPath,
}

/// Leaves of the (possibly partially generated) tree in DFS order:
/// childless nodes, holes excluded.
pub fn leaves(tree: &Tree) -> Vec<NodeId> {
    dfs_order(tree)
        .into_iter()
        .filter(|&id| tree.children(id).is_empty() && tree.kind(id) != NodeKind::Hole)
        .collect()
}

/// The unique tree path between two nodes, inclusive of both endpoints.
pub fn tree_path(tree: &Tree, from: NodeId, to: NodeId) -> Vec<NodeId> {
    if from == to {
        return vec![from];
    }
    let up_from = tree.ancestors_inclusive(from);
    let up_to = tree.ancestors_inclusive(to);
    // Strip the shared suffix down to the lowest common ancestor.
    let mut i = up_from.len();
    let mut j = up_to.len();
    while i > 0 && j > 0 && up_from[i - 1] == up_to[j - 1] {
        i -= 1;
        j -= 1;
    }
    // up_from[..=i] ascends from `from` to the LCA; up_to[..j] descends to `to`.
    let mut path: Vec<NodeId> = up_from[..=i].to_vec();
    path.extend(up_to[..j].iter().rev());
    path
}

/// Extract the path set for expanding a child of `parent_id`.
pub fn leaf_paths(tree: &Tree, parent_id: NodeId) -> Result<PathSet, PathError> {
    if tree.get(parent_id).is_none() {
        return Err(PathError::UnknownNode(parent_id));
    }
    let leaf_paths = leaves(tree)
        .into_iter()
        .map(|leaf| PartialPath {
            origin: PathOrigin::Leaf(leaf),
            destination: parent_id,
            nodes: tree_path(tree, leaf, parent_id),
        })
        .collect();
    let root_path = PartialPath {
        origin: PathOrigin::Root,
        destination: parent_id,
        nodes: tree_path(tree, Tree::ROOT, parent_id),
    };
    Ok(PathSet { leaf_paths, root_path })
}

/// Debug form: one element per path node, `Kind[index]` for structure nodes
/// and `'value'` for subtoken-like nodes.
pub fn format_path(tree: &Tree, path: &PartialPath) -> String {
    path.nodes
        .iter()
        .map(|&id| match tree.kind(id) {
            NodeKind::Subtoken => format!("'{}'", tree.value(id).unwrap_or_default()),
            NodeKind::EosTok => "'<eos_tok>'".to_string(),
            k => format!("{}[{}]", k, tree.node(id).child_index),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
