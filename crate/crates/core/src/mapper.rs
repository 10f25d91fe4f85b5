//! Maps imported APIs and strings onto nodes of the entry function's CFG.
//!
//! A reference is *direct* when an instruction of a CFG node touches the
//! target itself. It is *indirect* when the target is used inside some other
//! function that the entry function reaches through a chain of calls. For
//! indirect references we walk the call cross-reference graph from the
//! function holding the reference towards `entry()`, collect the functions
//! that sit immediately before `entry()` on those routes, and map the target
//! to every CFG node that calls one of them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::cfg::Cfg;
use crate::error::{Error, Result};
use crate::snapshot::{DisassemblySnapshot, ImportedApi, NodeId, WARN_TOO_MANY_FUNCTIONS};
use crate::strings::RankedString;

/// Binaries with more functions than this are not mapped.
pub const MAX_FUNCTIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum XrefKind {
    Entry,
    Function,
    Import,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct XrefNode {
    pub addr: u64,
    pub name: String,
    pub kind: XrefKind,
}

/// Directed graph of call cross references. An edge `F -> G` means `G`
/// contains a call or reference to `F`.
#[derive(Debug, Clone)]
pub struct CallXrefGraph {
    nodes: BTreeMap<u64, XrefNode>,
    callers: BTreeMap<u64, BTreeSet<u64>>,
    entry: u64,
}

pub fn build_xref_graph(snapshot: &DisassemblySnapshot) -> CallXrefGraph {
    let entry = snapshot.entry_function.addr;
    let mut g = CallXrefGraph {
        nodes: BTreeMap::new(),
        callers: BTreeMap::new(),
        entry,
    };
    g.add_node(entry, &snapshot.entry_function.name, XrefKind::Entry);
    for f in &snapshot.functions {
        g.add_node(f.entry_addr, &f.name, XrefKind::Function);
    }
    let imports: BTreeMap<u64, &str> = snapshot
        .imports
        .iter()
        .map(|i| (i.plt_addr, i.name.as_str()))
        .collect();
    // static call targets inside the entry CFG are call sites of entry()
    let entry_calls = snapshot
        .entry_blocks
        .iter()
        .flat_map(|b| &b.instructions)
        .filter_map(|i| i.call_target.map(|t| (entry, t)));
    let recorded = snapshot.functions.iter().flat_map(|f| {
        f.call_sites
            .iter()
            .map(move |&(_, callee)| (f.entry_addr, callee))
    });
    for (caller, callee) in recorded.chain(entry_calls) {
        if !g.nodes.contains_key(&callee) {
            match imports.get(&callee) {
                Some(name) => g.add_node(callee, name, XrefKind::Import),
                None => g.add_node(callee, &format!("ext_{callee:x}"), XrefKind::External),
            }
        }
        g.callers.entry(callee).or_default().insert(caller);
    }
    g
}

impl CallXrefGraph {
    fn add_node(&mut self, addr: u64, name: &str, kind: XrefKind) {
        self.nodes.entry(addr).or_insert_with(|| XrefNode {
            addr,
            name: name.to_string(),
            kind,
        });
        self.callers.entry(addr).or_default();
    }

    pub fn entry(&self) -> u64 {
        self.entry
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.callers.values().map(BTreeSet::len).sum()
    }

    pub fn node(&self, addr: u64) -> Option<&XrefNode> {
        self.nodes.get(&addr)
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.nodes.contains_key(&addr)
    }

    /// Functions that reference `addr`.
    pub fn callers(&self, addr: u64) -> impl Iterator<Item = u64> + '_ {
        self.callers.get(&addr).into_iter().flatten().copied()
    }

    /// Every simple path from `from` to `entry()`, found by depth-first
    /// search with callers visited in ascending address order. Stops after
    /// `limit` paths.
    pub fn paths_to_entry(&self, from: u64, limit: usize) -> Vec<Vec<u64>> {
        let mut paths = Vec::new();
        if !self.contains(from) {
            return paths;
        }
        let mut path = vec![from];
        let mut on_path = BTreeSet::from([from]);
        self.dfs(from, &mut path, &mut on_path, &mut paths, limit);
        paths
    }

    fn dfs(
        &self,
        at: u64,
        path: &mut Vec<u64>,
        on_path: &mut BTreeSet<u64>,
        out: &mut Vec<Vec<u64>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if at == self.entry {
            out.push(path.clone());
            return;
        }
        for next in self.callers(at) {
            if on_path.insert(next) {
                path.push(next);
                self.dfs(next, path, on_path, out, limit);
                path.pop();
                on_path.remove(&next);
            }
        }
    }

    /// Functions that immediately precede `entry()` on some simple path
    /// from `source`. A simple path `source .. f -> entry` exists exactly
    /// when `entry` calls `f` and `f` is reachable from `source` without
    /// passing through `entry`, so no path enumeration is needed.
    pub fn entry_neighbors_on_paths(&self, source: u64) -> BTreeSet<u64> {
        let mut found = BTreeSet::new();
        if source == self.entry || !self.contains(source) {
            return found;
        }
        let mut seen = BTreeSet::from([source]);
        let mut queue = VecDeque::from([source]);
        while let Some(at) = queue.pop_front() {
            for next in self.callers(at) {
                if next == self.entry {
                    found.insert(at);
                } else if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        found
    }
}

/// Where in a CFG node a target is referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeHit {
    pub node: NodeId,
    /// Address of the first referencing instruction in the node.
    pub addr: u64,
}

/// Resolves references for one binary against one CFG.
#[derive(Debug)]
pub struct NodeMapper<'a> {
    snapshot: &'a DisassemblySnapshot,
    xg: &'a CallXrefGraph,
    /// instruction address -> node
    instr_node: BTreeMap<u64, NodeId>,
    /// instruction address -> addresses it calls or references
    targets: BTreeMap<u64, BTreeSet<u64>>,
}

impl<'a> NodeMapper<'a> {
    pub fn new(
        snapshot: &'a DisassemblySnapshot,
        cfg: &Cfg,
        xg: &'a CallXrefGraph,
    ) -> Result<Self> {
        if snapshot.functions.len() > MAX_FUNCTIONS {
            return Err(Error::TooManyFunctions {
                count: snapshot.functions.len(),
                limit: MAX_FUNCTIONS,
            });
        }
        if snapshot.has_warning(WARN_TOO_MANY_FUNCTIONS) {
            return Err(Error::TooManyFunctions {
                count: snapshot.functions.len().max(MAX_FUNCTIONS + 1),
                limit: MAX_FUNCTIONS,
            });
        }
        let mut instr_node = BTreeMap::new();
        let mut targets: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for block in cfg.blocks() {
            for ins in &block.instructions {
                instr_node.insert(ins.address, block.id);
                if let Some(t) = ins.call_target {
                    targets.entry(ins.address).or_default().insert(t);
                }
            }
        }
        for f in &snapshot.functions {
            for &(caller, callee) in &f.call_sites {
                if instr_node.contains_key(&caller) {
                    targets.entry(caller).or_default().insert(callee);
                }
            }
        }
        Ok(NodeMapper {
            snapshot,
            xg,
            instr_node,
            targets,
        })
    }

    pub fn xref_graph(&self) -> &CallXrefGraph {
        self.xg
    }

    /// Nodes holding an instruction that calls or references any of `addrs`.
    fn nodes_calling(&self, addrs: &BTreeSet<u64>, hits: &mut BTreeMap<NodeId, u64>) {
        for (&ins, t) in &self.targets {
            if t.iter().any(|a| addrs.contains(a)) {
                let node = self.instr_node[&ins];
                let e = hits.entry(node).or_insert(ins);
                *e = (*e).min(ins);
            }
        }
    }

    fn indirect_hits(&self, sources: &BTreeSet<u64>, hits: &mut BTreeMap<NodeId, u64>) {
        let mut neighbors = BTreeSet::new();
        for &s in sources {
            neighbors.extend(self.xg.entry_neighbors_on_paths(s));
        }
        if !neighbors.is_empty() {
            self.nodes_calling(&neighbors, hits);
        }
    }

    /// Function whose body holds `addr`: the closest function entry at or
    /// below it, bounded by the function size when known.
    pub fn function_containing(&self, addr: u64) -> Option<u64> {
        let f = self
            .snapshot
            .functions
            .iter()
            .filter(|f| f.entry_addr <= addr)
            .max_by_key(|f| f.entry_addr)?;
        match f.size {
            Some(size) if addr >= f.entry_addr.saturating_add(size) => None,
            _ => Some(f.entry_addr),
        }
    }

    pub fn api_hits(&self, api: &ImportedApi) -> BTreeMap<NodeId, u64> {
        let mut hits = BTreeMap::new();
        let plt = BTreeSet::from([api.plt_addr]);
        self.nodes_calling(&plt, &mut hits);
        self.indirect_hits(&plt, &mut hits);
        hits
    }

    pub fn string_hits(&self, s: &RankedString) -> BTreeMap<NodeId, u64> {
        let mut hits = BTreeMap::new();
        let mut sources = BTreeSet::new();
        for &addr in &s.ref_addrs {
            if let Some(&node) = self.instr_node.get(&addr) {
                let e = hits.entry(node).or_insert(addr);
                *e = (*e).min(addr);
            } else if let Some(f) = self.function_containing(addr) {
                if f != self.xg.entry() {
                    sources.insert(f);
                }
            }
        }
        self.indirect_hits(&sources, &mut hits);
        hits
    }

    pub fn map_api_to_nodes(&self, api: &ImportedApi) -> BTreeSet<NodeId> {
        self.api_hits(api).into_keys().collect()
    }

    pub fn map_string_to_nodes(&self, s: &RankedString) -> BTreeSet<NodeId> {
        self.string_hits(s).into_keys().collect()
    }

    /// APIs mapped to each node, ordered by the address of the referencing
    /// instruction (import order breaks ties).
    pub fn api_map(&self) -> BTreeMap<NodeId, Vec<String>> {
        let mut per_node: BTreeMap<NodeId, Vec<(u64, usize)>> = BTreeMap::new();
        for (idx, api) in self.snapshot.imports.iter().enumerate() {
            for (node, addr) in self.api_hits(api) {
                per_node.entry(node).or_default().push((addr, idx));
            }
        }
        per_node
            .into_iter()
            .map(|(node, mut v)| {
                v.sort_unstable();
                let names = v
                    .into_iter()
                    .map(|(_, i)| self.snapshot.imports[i].name.clone())
                    .collect();
                (node, names)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::{BasicBlock, EntryFunction, FunctionRecord, Instruction};

    fn func(name: &str, addr: u64, calls: &[(u64, u64)]) -> FunctionRecord {
        FunctionRecord {
            name: name.into(),
            entry_addr: addr,
            size: None,
            call_sites: calls.to_vec(),
        }
    }

    #[test]
    fn no_functions_means_entry_only() {
        let s = DisassemblySnapshot::new(
            "x",
            vec![],
            vec![ImportedApi {
                name: "ExitProcess".into(),
                plt_addr: 0x9000,
            }],
            vec![],
            vec![],
            EntryFunction {
                name: "entry0".into(),
                addr: 0x100,
            },
            vec![],
            vec![],
        )
        .unwrap();
        let g = build_xref_graph(&s);
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node(0x100).unwrap().kind, XrefKind::Entry);
    }

    #[test]
    fn direct_api_call_maps_to_its_node() {
        let plt = 0x9000;
        let blocks: Vec<BasicBlock> = (0..6)
            .map(|i| {
                let a = 0x100 + 0x10 * i as u64;
                let ins = if i == 4 {
                    vec![Instruction::new(a, "push"), Instruction::call(a + 2, plt)]
                } else {
                    vec![Instruction::new(a, "mov")]
                };
                BasicBlock {
                    id: NodeId(i),
                    start_addr: a,
                    instructions: ins,
                }
            })
            .collect();
        let s = DisassemblySnapshot::new(
            "x",
            vec![],
            vec![ImportedApi {
                name: "WriteFile".into(),
                plt_addr: plt,
            }],
            vec![],
            vec![func("entry0", 0x100, &[(0x142, plt)])],
            EntryFunction {
                name: "entry0".into(),
                addr: 0x100,
            },
            blocks,
            vec![],
        )
        .unwrap();
        let cfg = crate::cfg::build_cfg(&s).unwrap();
        let xg = build_xref_graph(&s);
        let m = NodeMapper::new(&s, &cfg, &xg).unwrap();
        assert_eq!(
            m.map_api_to_nodes(&s.imports[0]),
            BTreeSet::from([NodeId(4)])
        );
        let hits = m.api_hits(&s.imports[0]);
        assert_eq!(hits[&NodeId(4)], 0x142);
    }

    #[test]
    fn unreachable_entry_yields_only_direct_refs() {
        // helper 0x500 references the string but is never called.
        let blocks = vec![BasicBlock {
            id: NodeId(0),
            start_addr: 0x100,
            instructions: vec![Instruction::new(0x100, "lea")],
        }];
        let s = DisassemblySnapshot::new(
            "x",
            vec![],
            vec![],
            vec![],
            vec![func("entry0", 0x100, &[]), func("helper", 0x500, &[])],
            EntryFunction {
                name: "entry0".into(),
                addr: 0x100,
            },
            blocks,
            vec![],
        )
        .unwrap();
        let cfg = crate::cfg::build_cfg(&s).unwrap();
        let xg = build_xref_graph(&s);
        let m = NodeMapper::new(&s, &cfg, &xg).unwrap();
        let rs = |addrs: Vec<u64>| RankedString {
            text: "s".into(),
            score: 5.0,
            ref_addrs: addrs,
        };
        assert!(m.map_string_to_nodes(&rs(vec![0x510])).is_empty());
        assert_eq!(
            m.map_string_to_nodes(&rs(vec![0x100, 0x510])),
            BTreeSet::from([NodeId(0)])
        );
        assert!(m.map_string_to_nodes(&rs(vec![])).is_empty());
    }

    #[test]
    fn function_limit_rejects_mapping() {
        let functions: Vec<_> = (0..=MAX_FUNCTIONS as u64)
            .map(|i| func(&format!("f{i}"), 0x1000 + i * 0x10, &[]))
            .collect();
        let s = DisassemblySnapshot::new(
            "x",
            vec![],
            vec![],
            vec![],
            functions,
            EntryFunction {
                name: "entry0".into(),
                addr: 0x1000,
            },
            vec![BasicBlock {
                id: NodeId(0),
                start_addr: 0x1000,
                instructions: vec![],
            }],
            vec![],
        )
        .unwrap();
        let cfg = crate::cfg::build_cfg(&s).unwrap();
        let xg = build_xref_graph(&s);
        assert!(matches!(
            NodeMapper::new(&s, &cfg, &xg),
            Err(Error::TooManyFunctions {
                count: 301,
                limit: 300
            })
        ));
    }

    #[test]
    fn recursion_does_not_loop() {
        // f calls itself and g; g calls f; entry calls g.
        let s = DisassemblySnapshot::new(
            "x",
            vec![],
            vec![],
            vec![],
            vec![
                func("entry0", 0x100, &[(0x104, 0x300)]),
                func("f", 0x200, &[(0x204, 0x200), (0x208, 0x300)]),
                func("g", 0x300, &[(0x304, 0x200)]),
            ],
            EntryFunction {
                name: "entry0".into(),
                addr: 0x100,
            },
            vec![],
            vec![],
        )
        .unwrap();
        let g = build_xref_graph(&s);
        let paths = g.paths_to_entry(0x200, usize::MAX);
        assert_eq!(paths, vec![vec![0x200, 0x300, 0x100]]);
        assert_eq!(g.entry_neighbors_on_paths(0x200), BTreeSet::from([0x300]));
    }
}
