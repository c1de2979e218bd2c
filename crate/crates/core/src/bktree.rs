//! Burkhard–Keller tree over 64-bit perceptual hashes with the Hamming metric.
//!
//! Nodes live in an arena. Each node keeps its children sorted by edge
//! distance, so traversal order (and with it best-match tie handling) is
//! reproducible. Inserting a hash that is already present appends the payload
//! to the existing node.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::hashing::{hamming_distance, PerceptualHash, HASH_BITS};

/// Identifier of a registry entry carried as the payload of a tree node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(pub u64);

impl fmt::Debug for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

type NodeIdx = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
struct BkNode {
    hash: PerceptualHash,
    /// Ascending.
    payloads: Vec<EntryId>,
    /// `(edge distance, child)`, ascending by distance.
    children: Vec<(u8, NodeIdx)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BkTree {
    nodes: Vec<BkNode>,
    count: usize,
}

/// One search result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hit {
    pub distance: u32,
    pub entry: EntryId,
    pub hash: PerceptualHash,
}

/// Traversal counters for pruning diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_visited: usize,
}

/// A node in pre-order, as written to snapshot files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    /// Distance label of the edge from the parent; 0 for the root.
    pub edge: u8,
    pub hash: PerceptualHash,
    pub payloads: Vec<EntryId>,
    pub child_count: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TreeShapeError {
    #[error("record stream ended inside a subtree")]
    Truncated,
    #[error("{0} trailing records after the root subtree")]
    Trailing(usize),
    #[error("edge label {label} but distance to parent is {actual}")]
    EdgeMismatch { label: u8, actual: u32 },
    #[error("duplicate edge label {0} under one node")]
    DuplicateEdge(u8),
    #[error("node without payloads")]
    EmptyNode,
    #[error("payload ids not strictly ascending")]
    UnsortedPayloads,
    #[error("root record must have edge label 0")]
    RootEdge,
}

impl BkTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of stored payloads (duplicates included).
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Number of distinct hashes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn insert(&mut self, hash: PerceptualHash, payload: EntryId) {
        self.count += 1;
        if self.nodes.is_empty() {
            self.nodes.push(BkNode {
                hash,
                payloads: vec![payload],
                children: Vec::new(),
            });
            return;
        }
        let mut cur = 0usize;
        loop {
            let d = hamming_distance(self.nodes[cur].hash, hash);
            if d == 0 {
                let payloads = &mut self.nodes[cur].payloads;
                let at = payloads.partition_point(|p| *p < payload);
                payloads.insert(at, payload);
                return;
            }
            let edge = d as u8;
            match self.nodes[cur].children.binary_search_by_key(&edge, |c| c.0) {
                Ok(i) => cur = self.nodes[cur].children[i].1 as usize,
                Err(i) => {
                    let idx = self.nodes.len() as NodeIdx;
                    self.nodes.push(BkNode {
                        hash,
                        payloads: vec![payload],
                        children: Vec::new(),
                    });
                    self.nodes[cur].children.insert(i, (edge, idx));
                    return;
                }
            }
        }
    }

    /// All stored entries within `radius` of `query`, in traversal order.
    pub fn search_radius(&self, query: PerceptualHash, radius: u32) -> Vec<Hit> {
        self.search_radius_with_stats(query, radius).0
    }

    pub fn search_radius_with_stats(
        &self,
        query: PerceptualHash,
        radius: u32,
    ) -> (Vec<Hit>, SearchStats) {
        let mut hits = Vec::new();
        let mut stats = SearchStats::default();
        if self.nodes.is_empty() {
            return (hits, stats);
        }
        let mut stack: Vec<NodeIdx> = vec![0];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            stats.nodes_visited += 1;
            let d = hamming_distance(node.hash, query);
            if d <= radius {
                hits.extend(node.payloads.iter().map(|&entry| Hit {
                    distance: d,
                    entry,
                    hash: node.hash,
                }));
            }
            let lo = d.saturating_sub(radius);
            let hi = d + radius;
            // push in reverse so children pop in ascending edge order
            for &(edge, child) in node.children.iter().rev() {
                let e = u32::from(edge);
                if e >= lo && e <= hi {
                    stack.push(child);
                }
            }
        }
        (hits, stats)
    }

    /// The stored entry closest to `query`, if its distance is at most
    /// `max_radius`. Among equal distances the smallest entry id wins.
    pub fn search_best(&self, query: PerceptualHash, max_radius: u32) -> Option<Hit> {
        self.nearest_within(query, max_radius, &mut SearchStats::default())
    }

    /// [`search_best`](Self::search_best) with traversal counters. The bound
    /// is inclusive, so callers can thread the best distance found elsewhere
    /// through successive trees and still see equal-distance ties.
    pub fn nearest_within(
        &self,
        query: PerceptualHash,
        max_radius: u32,
        stats: &mut SearchStats,
    ) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut bound = max_radius.min(HASH_BITS);
        let mut best: Option<Hit> = None;
        let mut stack: Vec<NodeIdx> = vec![0];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            stats.nodes_visited += 1;
            let d = hamming_distance(node.hash, query);
            if d <= bound {
                let cand = Hit {
                    distance: d,
                    entry: node.payloads[0],
                    hash: node.hash,
                };
                if best.is_none_or(|b| (cand.distance, cand.entry) < (b.distance, b.entry)) {
                    best = Some(cand);
                    bound = d;
                }
            }
            let lo = d.saturating_sub(bound);
            let hi = d + bound;
            for &(edge, child) in node.children.iter().rev() {
                let e = u32::from(edge);
                if e >= lo && e <= hi {
                    stack.push(child);
                }
            }
        }
        best
    }

    /// Every `(hash, entry)` pair, unordered.
    pub fn entries(&self) -> impl Iterator<Item = (PerceptualHash, EntryId)> + '_ {
        self.nodes
            .iter()
            .flat_map(|n| n.payloads.iter().map(move |&p| (n.hash, p)))
    }

    /// Pre-order record stream, children ascending by edge distance.
    pub fn preorder(&self) -> Vec<NodeRecord> {
        let mut out = Vec::with_capacity(self.nodes.len());
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack: Vec<(u8, NodeIdx)> = vec![(0, 0)];
        while let Some((edge, idx)) = stack.pop() {
            let node = &self.nodes[idx as usize];
            out.push(NodeRecord {
                edge,
                hash: node.hash,
                payloads: node.payloads.clone(),
                child_count: node.children.len(),
            });
            stack.extend(node.children.iter().rev().copied());
        }
        out
    }

    /// Rebuild a tree from [`preorder`](Self::preorder) records, checking
    /// every structural invariant on the way.
    pub fn from_preorder(records: &[NodeRecord]) -> Result<Self, TreeShapeError> {
        let mut tree = BkTree::new();
        if records.is_empty() {
            return Ok(tree);
        }
        if records[0].edge != 0 {
            return Err(TreeShapeError::RootEdge);
        }
        // (node index, children still expected)
        let mut open: Vec<(NodeIdx, usize)> = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            if rec.payloads.is_empty() {
                return Err(TreeShapeError::EmptyNode);
            }
            if rec.payloads.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TreeShapeError::UnsortedPayloads);
            }
            while matches!(open.last(), Some((_, 0))) {
                open.pop();
            }
            let idx = tree.nodes.len() as NodeIdx;
            if i > 0 {
                let Some((parent, remaining)) = open.last_mut() else {
                    return Err(TreeShapeError::Trailing(records.len() - i));
                };
                *remaining -= 1;
                let parent = &mut tree.nodes[*parent as usize];
                let actual = hamming_distance(parent.hash, rec.hash);
                if actual != u32::from(rec.edge) || actual == 0 {
                    return Err(TreeShapeError::EdgeMismatch {
                        label: rec.edge,
                        actual,
                    });
                }
                if parent.children.last().is_some_and(|c| c.0 >= rec.edge) {
                    return Err(TreeShapeError::DuplicateEdge(rec.edge));
                }
                parent.children.push((rec.edge, idx));
            }
            tree.nodes.push(BkNode {
                hash: rec.hash,
                payloads: rec.payloads.clone(),
                children: Vec::with_capacity(rec.child_count),
            });
            tree.count += rec.payloads.len();
            open.push((idx, rec.child_count));
        }
        if open.iter().any(|&(_, remaining)| remaining > 0) {
            return Err(TreeShapeError::Truncated);
        }
        Ok(tree)
    }

    /// Checks the edge-distance invariant on every node.
    pub fn validate(&self) -> Result<(), TreeShapeError> {
        let mut payloads = 0;
        for node in &self.nodes {
            payloads += node.payloads.len();
            for w in node.children.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(TreeShapeError::DuplicateEdge(w[1].0));
                }
            }
            for &(edge, child) in &node.children {
                let actual = hamming_distance(node.hash, self.nodes[child as usize].hash);
                if actual != u32::from(edge) {
                    return Err(TreeShapeError::EdgeMismatch {
                        label: edge,
                        actual,
                    });
                }
            }
        }
        debug_assert_eq!(payloads, self.count);
        Ok(())
    }
}
