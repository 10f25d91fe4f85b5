//! Control-flow graph of the entry function.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::snapshot::{BasicBlock, DisassemblySnapshot, NodeId};

/// Preprocessing stage a graph has been brought to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Stage {
    Raw,
    /// Back edges removed.
    Partial,
    /// Back edges removed and single-child chains merged.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    nodes: BTreeMap<NodeId, BasicBlock>,
    succ: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pred: BTreeMap<NodeId, BTreeSet<NodeId>>,
    members: BTreeMap<NodeId, Vec<NodeId>>,
    entry: NodeId,
    stage: Stage,
}

/// Builds the raw CFG of the snapshot's entry function.
pub fn build_cfg(snapshot: &DisassemblySnapshot) -> Result<Cfg> {
    let entry = snapshot.entry_node().ok_or(Error::EmptyCfg)?;
    Cfg::new(
        snapshot.entry_blocks.clone(),
        snapshot.entry_edges.iter().copied(),
        entry,
    )
}

impl Cfg {
    pub fn new(
        blocks: Vec<BasicBlock>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        entry: NodeId,
    ) -> Result<Cfg> {
        if blocks.is_empty() {
            return Err(Error::EmptyCfg);
        }
        let mut cfg = Cfg {
            nodes: BTreeMap::new(),
            succ: BTreeMap::new(),
            pred: BTreeMap::new(),
            members: BTreeMap::new(),
            entry,
            stage: Stage::Raw,
        };
        for block in blocks {
            let id = block.id;
            if cfg.nodes.insert(id, block).is_some() {
                return Err(Error::schema(format!("duplicate block id {id}")));
            }
            cfg.succ.insert(id, BTreeSet::new());
            cfg.pred.insert(id, BTreeSet::new());
            cfg.members.insert(id, vec![id]);
        }
        if !cfg.nodes.contains_key(&entry) {
            return Err(Error::schema(format!("entry node {entry} not in graph")));
        }
        for (from, to) in edges {
            if !cfg.nodes.contains_key(&from) || !cfg.nodes.contains_key(&to) {
                return Err(Error::schema(format!("edge ({from}, {to}) is dangling")));
            }
            cfg.add_edge(from, to);
        }
        Ok(cfg)
    }

    /// Graph of `n` empty blocks `0..n` with the given edges, entry at 0.
    /// Convenient for structural tests that don't care about instructions.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Cfg> {
        let blocks = (0..n)
            .map(|i| BasicBlock {
                id: NodeId(i),
                start_addr: 0x1000 + 0x10 * i as u64,
                instructions: Vec::new(),
            })
            .collect();
        Cfg::new(
            blocks,
            edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))),
            NodeId(0),
        )
    }

    pub fn entry(&self) -> NodeId {
        self.entry
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub(crate) fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.values().map(BTreeSet::len).sum()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<&BasicBlock> {
        self.nodes.get(&id)
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BasicBlock> {
        self.nodes.values()
    }

    pub fn successors(&self, id: NodeId) -> impl DoubleEndedIterator<Item = NodeId> + '_ {
        self.succ.get(&id).into_iter().flatten().copied()
    }

    pub fn predecessors(&self, id: NodeId) -> impl DoubleEndedIterator<Item = NodeId> + '_ {
        self.pred.get(&id).into_iter().flatten().copied()
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.succ.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn in_degree(&self, id: NodeId) -> usize {
        self.pred.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.succ.get(&from).is_some_and(|s| s.contains(&to))
    }

    /// All edges, ordered by (source, target).
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.succ
            .iter()
            .flat_map(|(&from, tos)| tos.iter().map(move |&to| (from, to)))
    }

    /// Original block ids folded into `id` by chain merging, in order.
    pub fn members(&self, id: NodeId) -> &[NodeId] {
        self.members.get(&id).map_or(&[], Vec::as_slice)
    }

    /// Total instruction count over all nodes.
    pub fn instruction_count(&self) -> usize {
        self.nodes.values().map(|b| b.instructions.len()).sum()
    }

    /// Kahn's algorithm; true when every node can be topologically ordered.
    pub fn is_acyclic(&self) -> bool {
        let mut indeg: BTreeMap<NodeId, usize> = self
            .nodes
            .keys()
            .map(|&id| (id, self.in_degree(id)))
            .collect();
        let mut ready: Vec<NodeId> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for s in self.successors(n) {
                let d = indeg.get_mut(&s).expect("successor exists");
                *d -= 1;
                if *d == 0 {
                    ready.push(s);
                }
            }
        }
        seen == self.nodes.len()
    }

    pub(crate) fn add_edge(&mut self, from: NodeId, to: NodeId) {
        self.succ.entry(from).or_default().insert(to);
        self.pred.entry(to).or_default().insert(from);
    }

    pub(crate) fn remove_edge(&mut self, from: NodeId, to: NodeId) {
        if let Some(s) = self.succ.get_mut(&from) {
            s.remove(&to);
        }
        if let Some(p) = self.pred.get_mut(&to) {
            p.remove(&from);
        }
    }

    /// Folds `child` into `parent`: instructions appended, successors
    /// inherited, `child` removed. Caller guarantees the single-edge shape.
    pub(crate) fn absorb(&mut self, parent: NodeId, child: NodeId) {
        self.remove_edge(parent, child);
        let child_block = self.nodes.remove(&child).expect("child exists");
        let child_succ = self.succ.remove(&child).unwrap_or_default();
        self.pred.remove(&child);
        for s in child_succ {
            let s = if s == child { parent } else { s };
            if let Some(p) = self.pred.get_mut(&s) {
                p.remove(&child);
            }
            self.add_edge(parent, s);
        }
        let child_members = self.members.remove(&child).unwrap_or_default();
        self.members
            .get_mut(&parent)
            .expect("parent exists")
            .extend(child_members);
        self.nodes
            .get_mut(&parent)
            .expect("parent exists")
            .instructions
            .extend(child_block.instructions);
        if self.entry == child {
            self.entry = parent;
        }
    }
}
