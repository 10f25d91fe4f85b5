//! Fixtures, generators and brute-force oracles shared by the integration
//! tests. Oracles deliberately avoid the library's own graph helpers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use malregion::cfg::Cfg;
use malregion::snapshot::{parse_snapshot, DisassemblySnapshot, NodeId};
use rand::Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).expect("fixture exists")
}

pub fn fixture(name: &str) -> DisassemblySnapshot {
    parse_snapshot(&fixture_bytes(name)).expect("fixture parses")
}

pub const SNAPSHOT_FIXTURES: [&str; 6] = [
    "cfg_loops.json",
    "region_levels.json",
    "region_readout.json",
    "xref_paths.json",
    "single_block.json",
    "empty_cfg.json",
];

pub fn ids(v: &[usize]) -> BTreeSet<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// Random digraph on `1..=max_n` nodes, self-loops and cycles allowed.
pub fn random_digraph<R: Rng>(rng: &mut R, max_n: usize) -> (usize, Vec<(usize, usize)>) {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(0..=3 * n);
    let edges = (0..m)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect();
    (n, edges)
}

/// Adjacency lists as plain vectors over `0..n`.
pub fn adjacency(cfg: &Cfg) -> BTreeMap<usize, Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = cfg.node_ids().map(|n| (n.0, Vec::new())).collect();
    for (a, b) in cfg.edges() {
        adj.get_mut(&a.0).unwrap().push(b.0);
    }
    adj
}

/// Nodes reachable from `from` in one or more steps.
pub fn reachable_from(adj: &BTreeMap<usize, Vec<usize>>, from: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<usize> = adj[&from].clone();
    while let Some(v) = stack.pop() {
        if seen.insert(v) {
            stack.extend(adj[&v].iter().copied());
        }
    }
    seen
}

/// A cycle exists iff some node reaches itself.
pub fn brute_has_cycle(cfg: &Cfg) -> bool {
    let adj = adjacency(cfg);
    adj.keys().any(|&v| reachable_from(&adj, v).contains(&v))
}

/// Every `(parent, child)` edge where the parent has one child and the
/// child has one parent.
pub fn brute_mergeable_pairs(cfg: &Cfg) -> Vec<(usize, usize)> {
    let adj = adjacency(cfg);
    let mut indeg: BTreeMap<usize, usize> = adj.keys().map(|&k| (k, 0)).collect();
    for outs in adj.values() {
        for t in outs {
            *indeg.get_mut(t).unwrap() += 1;
        }
    }
    adj.iter()
        .filter(|(p, outs)| outs.len() == 1 && outs[0] != **p && indeg[&outs[0]] == 1)
        .map(|(&p, outs)| (p, outs[0]))
        .collect()
}

pub fn edge_list(cfg: &Cfg) -> Vec<(usize, usize)> {
    cfg.edges().map(|(a, b)| (a.0, b.0)).collect()
}

/// Breadth-first hop distances from `seed` following `adj`.
pub fn hop_distances(adj: &BTreeMap<usize, Vec<usize>>, seed: usize) -> BTreeMap<usize, usize> {
    let mut dist = BTreeMap::from([(seed, 0)]);
    let mut q = VecDeque::from([seed]);
    while let Some(v) = q.pop_front() {
        let d = dist[&v];
        for &w in &adj[&v] {
            dist.entry(w).or_insert_with(|| {
                q.push_back(w);
                d + 1
            });
        }
    }
    dist
}

pub fn reversed(adj: &BTreeMap<usize, Vec<usize>>) -> BTreeMap<usize, Vec<usize>> {
    let mut r: BTreeMap<usize, Vec<usize>> = adj.keys().map(|&k| (k, Vec::new())).collect();
    for (&a, outs) in adj {
        for &b in outs {
            r.get_mut(&b).unwrap().push(a);
        }
    }
    r
}

/// All simple paths from `from` to `to` in a graph given as successor
/// lists, by exhaustive recursion.
pub fn all_simple_paths(adj: &BTreeMap<u64, Vec<u64>>, from: u64, to: u64) -> Vec<Vec<u64>> {
    fn go(adj: &BTreeMap<u64, Vec<u64>>, path: &mut Vec<u64>, to: u64, out: &mut Vec<Vec<u64>>) {
        let at = *path.last().unwrap();
        if at == to {
            out.push(path.clone());
            return;
        }
        for &n in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
            if !path.contains(&n) {
                path.push(n);
                go(adj, path, to, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(adj, &mut vec![from], to, &mut out);
    out
}

/// Mann-Whitney concordance: the share of (positive, negative) pairs the
/// scores order correctly, ties counting one half.
pub fn pairwise_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
