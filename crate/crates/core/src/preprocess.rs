//! Loop removal and chain merging.

use std::collections::BTreeMap;

use crate::cfg::{Cfg, Stage};
use crate::snapshot::NodeId;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Color {
    White,
    Gray,
    Black,
}

/// Back edges of the canonical depth-first traversal: rooted at the entry,
/// then at every still-unvisited node in ascending id order, successors
/// explored in ascending id order. Self-loops are always back edges.
pub fn back_edges(cfg: &Cfg) -> Vec<(NodeId, NodeId)> {
    let mut color: BTreeMap<NodeId, Color> = cfg.node_ids().map(|n| (n, Color::White)).collect();
    let mut back = Vec::new();
    let roots = std::iter::once(cfg.entry()).chain(cfg.node_ids());
    for root in roots {
        if color[&root] != Color::White {
            continue;
        }
        // (node, successors still to visit)
        let mut stack: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
        color.insert(root, Color::Gray);
        stack.push((root, cfg.successors(root).rev().collect()));
        while let Some((node, pending)) = stack.last_mut() {
            let node = *node;
            match pending.pop() {
                Some(next) => match color[&next] {
                    Color::White => {
                        color.insert(next, Color::Gray);
                        let succ = cfg.successors(next).rev().collect();
                        stack.push((next, succ));
                    }
                    Color::Gray => back.push((node, next)),
                    Color::Black => {}
                },
                None => {
                    color.insert(node, Color::Black);
                    stack.pop();
                }
            }
        }
    }
    back
}

/// Produces the partially preprocessed graph by deleting back edges.
pub fn remove_loops(cfg: &Cfg) -> Cfg {
    let mut out = cfg.clone();
    for (from, to) in back_edges(cfg) {
        out.remove_edge(from, to);
    }
    out.set_stage(cfg.stage().max(Stage::Partial));
    out
}

/// First mergeable `(parent, child)` pair with the given parent, if any.
fn mergeable_child(cfg: &Cfg, parent: NodeId) -> Option<NodeId> {
    if cfg.out_degree(parent) != 1 {
        return None;
    }
    let child = cfg.successors(parent).next()?;
    (child != parent && cfg.in_degree(child) == 1).then_some(child)
}

/// Merges every single-child parent with its single-parent child until no
/// such pair remains. Parents are scanned in ascending id order; a merged
/// node keeps the parent's id and start address.
pub fn merge_chains(cfg: &Cfg) -> Cfg {
    let mut out = cfg.clone();
    loop {
        let mut changed = false;
        let ids: Vec<NodeId> = out.node_ids().collect();
        for parent in ids {
            if !out.contains(parent) {
                continue;
            }
            while let Some(child) = mergeable_child(&out, parent) {
                out.absorb(parent, child);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out.set_stage(Stage::Complete);
    out
}

/// Both preprocessing passes: `(partial, complete)`.
pub fn preprocess(raw: &Cfg) -> (Cfg, Cfg) {
    let partial = remove_loops(raw);
    let complete = merge_chains(&partial);
    (partial, complete)
}
