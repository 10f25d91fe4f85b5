//! Seed-node selection and subgraph extraction around potential malicious
//! nodes of the partially preprocessed CFG.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::cfg::Cfg;
use crate::mapper::NodeMapper;
use crate::snapshot::NodeId;
use crate::strings::RankedString;

pub const DEFAULT_LEVELS: usize = 2;
pub const DEFAULT_MAX_REGIONS: usize = 10;

/// Which of the four selection outcomes applied to a binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SelectionCase {
    /// At least `max_regions` nodes found; the first `max_regions` are kept.
    TenOrMore,
    /// Between one and `max_regions - 1` nodes found.
    OneToNine,
    /// No string mapped to any node; the entry node stands in.
    NoMalicious,
    /// The CFG could not be built or analysis failed.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSelection {
    pub seeds: Vec<NodeId>,
    /// Text of the string that first mapped to each seed (`None` for the
    /// entry fallback).
    pub seed_strings: Vec<Option<String>>,
    pub case: SelectionCase,
}

impl RegionSelection {
    pub fn failed() -> Self {
        RegionSelection {
            seeds: Vec::new(),
            seed_strings: Vec::new(),
            case: SelectionCase::Failed,
        }
    }
}

/// Walks the ranked strings in order and collects distinct mapped nodes
/// until `max_regions` seeds are found.
pub fn select_seed_nodes(
    cfg: &Cfg,
    ranked: &[RankedString],
    mapper: &NodeMapper<'_>,
    max_regions: usize,
) -> RegionSelection {
    select_seed_nodes_with(cfg, ranked, |s| mapper.map_string_to_nodes(s), max_regions)
}

/// Same as [`select_seed_nodes`] with an arbitrary string-to-node mapping.
pub fn select_seed_nodes_with<F>(
    cfg: &Cfg,
    ranked: &[RankedString],
    mut map: F,
    max_regions: usize,
) -> RegionSelection
where
    F: FnMut(&RankedString) -> BTreeSet<NodeId>,
{
    let mut seeds = Vec::new();
    let mut seed_strings = Vec::new();
    let mut seen = BTreeSet::new();
    let mut found = 0usize;
    'outer: for s in ranked {
        for node in map(s) {
            if !cfg.contains(node) || !seen.insert(node) {
                continue;
            }
            found += 1;
            if seeds.len() < max_regions {
                seeds.push(node);
                seed_strings.push(Some(s.text.clone()));
            } else {
                break 'outer;
            }
        }
    }
    let case = match found {
        0 => SelectionCase::NoMalicious,
        n if n >= max_regions => SelectionCase::TenOrMore,
        _ => SelectionCase::OneToNine,
    };
    if case == SelectionCase::NoMalicious {
        seeds.push(cfg.entry());
        seed_strings.push(None);
    }
    RegionSelection {
        seeds,
        seed_strings,
        case,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgraph {
    pub seed: NodeId,
    pub nodes: BTreeSet<NodeId>,
    pub bfs_order: Vec<NodeId>,
    pub levels: usize,
}

/// Seed plus every node within `levels` predecessor steps or `levels`
/// successor steps of it.
pub fn extract_subgraph(cfg: &Cfg, seed: NodeId, levels: usize) -> Subgraph {
    let mut nodes = BTreeSet::from([seed]);
    for upward in [true, false] {
        let mut visited = BTreeSet::from([seed]);
        let mut frontier = vec![seed];
        for _ in 0..levels {
            let mut next = Vec::new();
            for &n in &frontier {
                let adj: Vec<NodeId> = if upward {
                    cfg.predecessors(n).collect()
                } else {
                    cfg.successors(n).collect()
                };
                next.extend(adj.into_iter().filter(|&m| visited.insert(m)));
            }
            frontier = next;
        }
        nodes.extend(visited);
    }
    let bfs_order = bfs_order(&nodes, cfg);
    Subgraph {
        seed,
        nodes,
        bfs_order,
        levels,
    }
}

/// Breadth-first order over the subgraph induced by `members`, starting
/// from its topmost level (members with no predecessor inside it).
pub fn bfs_order(members: &BTreeSet<NodeId>, cfg: &Cfg) -> Vec<NodeId> {
    let roots: Vec<NodeId> = members
        .iter()
        .copied()
        .filter(|&n| !cfg.predecessors(n).any(|p| members.contains(&p)))
        .collect();
    bfs_from(members, cfg, roots)
}

/// Breadth-first order over the whole graph: the entry first, then every
/// other node without predecessors, in ascending id order.
pub fn whole_graph_order(cfg: &Cfg) -> Vec<NodeId> {
    let members: BTreeSet<NodeId> = cfg.node_ids().collect();
    let entry = cfg.entry();
    let roots = std::iter::once(entry)
        .chain(
            cfg.node_ids()
                .filter(|&n| n != entry && cfg.in_degree(n) == 0),
        )
        .collect();
    bfs_from(&members, cfg, roots)
}

fn bfs_from(members: &BTreeSet<NodeId>, cfg: &Cfg, roots: Vec<NodeId>) -> Vec<NodeId> {
    let mut order = Vec::with_capacity(members.len());
    let mut seen: BTreeSet<NodeId> = roots.iter().copied().collect();
    let mut queue: VecDeque<NodeId> = roots.into();
    while let Some(n) = queue.pop_front() {
        order.push(n);
        for s in cfg.successors(n) {
            if members.contains(&s) && seen.insert(s) {
                queue.push_back(s);
            }
        }
    }
    // cycles in unpreprocessed input can leave members without a root
    for &n in members {
        if !seen.contains(&n) {
            order.push(n);
        }
    }
    order
}
