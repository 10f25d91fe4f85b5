//! Disassembly snapshot interchange format (schema v1).
//!
//! A snapshot is the only input the pipeline reads for a binary. It carries
//! section headers, imports, referenced strings, the function list with its
//! call-site cross references, and the basic blocks and edges of the entry
//! function. See `docs/snapshot_schema.md` for the document layout.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Marker an exporter places in `warnings` when the binary exceeds the
/// function limit for cross-reference mapping.
pub const WARN_TOO_MANY_FUNCTIONS: &str = "too_many_functions";

/// Dense basic-block identifier, assigned in ascending start address order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub address: u64,
    pub mnemonic: String,
    #[serde(default)]
    pub is_call: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_target: Option<u64>,
}

impl Instruction {
    pub fn new(address: u64, mnemonic: impl Into<String>) -> Self {
        Instruction {
            address,
            mnemonic: mnemonic.into(),
            is_call: false,
            call_target: None,
        }
    }

    pub fn call(address: u64, target: u64) -> Self {
        Instruction {
            address,
            mnemonic: "call".into(),
            is_call: true,
            call_target: Some(target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: NodeId,
    pub start_addr: u64,
    #[serde(default)]
    pub instructions: Vec<Instruction>,
}

impl BasicBlock {
    /// Inclusive address span covered by the block's instructions.
    pub fn span(&self) -> (u64, u64) {
        let end = self
            .instructions
            .last()
            .map_or(self.start_addr, |i| i.address);
        (self.start_addr, end)
    }

    pub fn contains(&self, addr: u64) -> bool {
        let (lo, hi) = self.span();
        (lo..=hi).contains(&addr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub virtual_size: u64,
    pub physical_size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportedApi {
    pub name: String,
    pub plt_addr: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StringEntry {
    pub text: String,
    #[serde(default)]
    pub ref_addrs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub name: String,
    pub entry_addr: u64,
    /// Byte size of the function body, when the exporter knows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    /// `(caller_addr, callee_addr)` pairs for references made from this function.
    #[serde(default)]
    pub call_sites: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFunction {
    pub name: String,
    pub addr: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisassemblySnapshot {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub binary_id: String,
    pub sections: Vec<Section>,
    pub imports: Vec<ImportedApi>,
    pub strings: Vec<StringEntry>,
    pub functions: Vec<FunctionRecord>,
    pub entry_function: EntryFunction,
    #[serde(rename = "blocks")]
    pub entry_blocks: Vec<BasicBlock>,
    #[serde(rename = "edges")]
    pub entry_edges: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    entry_node: Option<NodeId>,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

/// Parses and validates a snapshot document.
pub fn parse_snapshot(raw: &[u8]) -> Result<DisassemblySnapshot> {
    let snapshot: DisassemblySnapshot = serde_json::from_slice(raw)?;
    snapshot.validated()
}

impl DisassemblySnapshot {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        binary_id: impl Into<String>,
        sections: Vec<Section>,
        imports: Vec<ImportedApi>,
        strings: Vec<StringEntry>,
        functions: Vec<FunctionRecord>,
        entry_function: EntryFunction,
        entry_blocks: Vec<BasicBlock>,
        entry_edges: Vec<(NodeId, NodeId)>,
    ) -> Result<Self> {
        DisassemblySnapshot {
            schema_version: SCHEMA_VERSION,
            binary_id: binary_id.into(),
            sections,
            imports,
            strings,
            functions,
            entry_function,
            entry_blocks,
            entry_edges,
            warnings: Vec::new(),
            entry_node: None,
        }
        .validated()
    }

    /// The block containing the entry function's entry address. `None` only
    /// when the snapshot has no blocks.
    pub fn entry_node(&self) -> Option<NodeId> {
        self.entry_node
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    /// Checks every schema invariant and resolves the entry node.
    pub fn validated(mut self) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }

        let mut ids = HashSet::new();
        for (pos, block) in self.entry_blocks.iter().enumerate() {
            if !ids.insert(block.id) {
                return Err(Error::schema(format!("duplicate block id {}", block.id)));
            }
            validate_block(block)?;
            if block.id.0 != pos {
                return Err(Error::schema(format!(
                    "block ids must be dense and in ascending start_addr order; found id {} at position {pos}",
                    block.id
                )));
            }
            if pos > 0 {
                let prev = &self.entry_blocks[pos - 1];
                if prev.span().1 >= block.start_addr {
                    return Err(Error::schema(format!(
                        "block {} overlaps or precedes block {}",
                        block.id, prev.id
                    )));
                }
            }
        }

        let mut seen_edges = BTreeSet::new();
        for &(from, to) in &self.entry_edges {
            for end in [from, to] {
                if !ids.contains(&end) {
                    return Err(Error::schema(format!(
                        "edge ({from}, {to}) references missing block {end}"
                    )));
                }
            }
            if !seen_edges.insert((from, to)) {
                return Err(Error::schema(format!("duplicate edge ({from}, {to})")));
            }
        }

        self.entry_node = None;
        if !self.entry_blocks.is_empty() {
            let addr = self.entry_function.addr;
            let mut hits = self.entry_blocks.iter().filter(|b| b.contains(addr));
            match (hits.next(), hits.next()) {
                (Some(b), None) => self.entry_node = Some(b.id),
                (None, _) => {
                    return Err(Error::schema(format!(
                        "no block contains entry address {addr:#x}"
                    )))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::schema(format!(
                        "several blocks contain entry address {addr:#x}"
                    )))
                }
            }
        }
        Ok(self)
    }

    /// Function record describing `entry()`, if the exporter listed one.
    pub fn entry_record(&self) -> Option<&FunctionRecord> {
        self.functions
            .iter()
            .find(|f| f.entry_addr == self.entry_function.addr)
    }

    pub fn has_warning(&self, marker: &str) -> bool {
        self.warnings.iter().any(|w| w == marker)
    }

    pub fn instruction_count(&self) -> usize {
        self.entry_blocks.iter().map(|b| b.instructions.len()).sum()
    }
}

fn validate_block(block: &BasicBlock) -> Result<()> {
    if let Some(first) = block.instructions.first() {
        if first.address != block.start_addr {
            return Err(Error::schema(format!(
                "block {} starts at {:#x} but its first instruction is at {:#x}",
                block.id, block.start_addr, first.address
            )));
        }
    }
    for pair in block.instructions.windows(2) {
        if pair[0].address >= pair[1].address {
            return Err(Error::schema(format!(
                "block {} instructions not strictly ascending at {:#x}",
                block.id, pair[1].address
            )));
        }
    }
    for ins in &block.instructions {
        let m = &ins.mnemonic;
        if m.is_empty() || m.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
            return Err(Error::schema(format!(
                "invalid mnemonic {m:?} at {:#x}",
                ins.address
            )));
        }
        if ins.call_target.is_some() && !ins.is_call {
            return Err(Error::schema(format!(
                "call_target without is_call at {:#x}",
                ins.address
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "binary_id": "00ff",
            "sections": [{"name": ".text", "virtual_size": 16, "physical_size": 16}],
            "imports": [],
            "strings": [],
            "functions": [{"name": "entry0", "entry_addr": 4096, "call_sites": []}],
            "entry_function": {"name": "entry0", "addr": 4096},
            "blocks": [{"id": 0, "start_addr": 4096,
                        "instructions": [{"address": 4096, "mnemonic": "ret"}]}],
            "edges": [],
            "producer": "ignored"
        }"#
    }

    #[test]
    fn minimal_document_parses() {
        let s = parse_snapshot(minimal().as_bytes()).unwrap();
        assert_eq!(s.entry_blocks.len(), 1);
        assert!(s.entry_edges.is_empty());
        assert_eq!(s.entry_node(), Some(NodeId(0)));
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let doc = minimal().replace(r#""edges": []"#, r#""edges": [[0, 7]]"#);
        assert!(matches!(
            parse_snapshot(doc.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn duplicate_block_id_is_rejected() {
        let doc = minimal().replace(
            r#"{"id": 0, "start_addr": 4096,"#,
            r#"{"id": 0, "start_addr": 4000, "instructions": []}, {"id": 0, "start_addr": 4096,"#,
        );
        let err = parse_snapshot(doc.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn malformed_json_is_decode_error() {
        assert!(matches!(
            parse_snapshot(b"{\"binary_id\": "),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn missing_field_is_reported() {
        let doc = minimal().replace(r#""imports": [],"#, "");
        assert!(parse_snapshot(doc.as_bytes()).is_err());
    }

    #[test]
    fn uppercase_mnemonic_is_rejected() {
        let doc = minimal().replace("\"ret\"", "\"RET\"");
        assert!(matches!(
            parse_snapshot(doc.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn call_target_requires_is_call() {
        let doc = minimal().replace(
            r#""mnemonic": "ret""#,
            r#""mnemonic": "jmp", "call_target": 5000"#,
        );
        assert!(matches!(
            parse_snapshot(doc.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn zero_blocks_parse_without_entry_node() {
        let doc = minimal().replace(
            r#"[{"id": 0, "start_addr": 4096,
                        "instructions": [{"address": 4096, "mnemonic": "ret"}]}]"#,
            "[]",
        );
        let s = parse_snapshot(doc.as_bytes()).unwrap();
        assert_eq!(s.entry_node(), None);
    }

    #[test]
    fn entry_address_must_fall_in_a_block() {
        let doc = minimal().replace(r#""addr": 4096"#, r#""addr": 9999"#);
        assert!(matches!(
            parse_snapshot(doc.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn serialization_round_trips() {
        let s = parse_snapshot(minimal().as_bytes()).unwrap();
        let again = parse_snapshot(s.to_json().as_bytes()).unwrap();
        assert_eq!(s, again);
    }
}
