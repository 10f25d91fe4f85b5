//! Advanced feature generation.
//!
//! Default vector layout (1422 values):
//!
//! | range         | content                                         |
//! |---------------|-------------------------------------------------|
//! | `0..100`      | hashed API tokens of all regions                |
//! | `100..200`    | hashed opcode tokens of all regions             |
//! | `200..1200`   | ten 100-slot region signatures, in seed order   |
//! | `1200..1400`  | signature of the completely preprocessed CFG    |
//! | `1400..1420`  | hashed top-15 opcode trigrams (TF-IDF weighted) |
//! | `1420`        | NOP count                                       |
//! | `1421`        | section ratio flag                              |

mod extract;
mod hashing;
mod signature;
mod trigram;

use std::ops::Range;

use serde::Serialize;

pub use extract::{analyze, analyze_bytes, extract_features, Analysis};
pub use hashing::{hash_tokens, hash_unit_tokens, slot, stable_hash};
pub use signature::{
    node_signature, signature_sequence, signature_vector, NodeSignature, MAX_CHILDREN, MAX_PARENTS,
};
pub use trigram::{top_trigrams, trigram_token, trigrams, IdfFile, IdfTable, DEFAULT_TOP_K};

use crate::cfg::Cfg;
use crate::config::FeatureConfig;
use crate::region::{RegionSelection, SelectionCase, Subgraph};
use crate::snapshot::{DisassemblySnapshot, NodeId, Section};
use std::collections::BTreeMap;

/// Which token stream to read off a subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Opcode,
    Api,
}

/// Tokens of the subgraph's nodes concatenated in BFS order.
pub fn sequence_tokens(
    sub: &Subgraph,
    cfg: &Cfg,
    kind: TokenKind,
    api_map: &BTreeMap<NodeId, Vec<String>>,
) -> Vec<String> {
    let mut out = Vec::new();
    for &n in &sub.bfs_order {
        match kind {
            TokenKind::Opcode => {
                if let Some(block) = cfg.node(n) {
                    out.extend(block.instructions.iter().map(|i| i.mnemonic.clone()));
                }
            }
            TokenKind::Api => {
                if let Some(apis) = api_map.get(&n) {
                    out.extend(apis.iter().cloned());
                }
            }
        }
    }
    out
}

/// Mnemonics of every block in address order.
pub fn opcode_stream(snapshot: &DisassemblySnapshot) -> Vec<&str> {
    snapshot
        .entry_blocks
        .iter()
        .flat_map(|b| b.instructions.iter().map(|i| i.mnemonic.as_str()))
        .collect()
}

pub fn nop_count(snapshot: &DisassemblySnapshot) -> usize {
    snapshot
        .entry_blocks
        .iter()
        .flat_map(|b| &b.instructions)
        .filter(|i| i.mnemonic == "nop")
        .count()
}

/// 1 when some section's virtual size exceeds `threshold` times its
/// physical size. A section with no physical bytes but a non-zero virtual
/// size always counts.
pub fn section_ratio_flag(sections: &[Section], threshold: f64) -> u8 {
    let flagged = sections.iter().any(|s| {
        if s.physical_size == 0 {
            s.virtual_size > 0
        } else {
            s.virtual_size as f64 / s.physical_size as f64 > threshold
        }
    });
    u8::from(flagged)
}

/// Index ranges of each block of the feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    pub api: Range<usize>,
    pub opcode: Range<usize>,
    pub signatures: Range<usize>,
    pub sig_dim: usize,
    pub whole_signature: Range<usize>,
    pub trigrams: Range<usize>,
    pub nop: usize,
    pub section_flag: usize,
    pub len: usize,
}

impl FeatureLayout {
    pub fn new(cfg: &FeatureConfig) -> Self {
        let api = 0..cfg.seq_dim;
        let opcode = api.end..api.end + cfg.seq_dim;
        let signatures = opcode.end..opcode.end + cfg.max_regions * cfg.sig_dim;
        let whole_signature = signatures.end..signatures.end + cfg.whole_sig_dim;
        let trigrams = whole_signature.end..whole_signature.end + cfg.trigram_dim;
        let nop = trigrams.end;
        FeatureLayout {
            api,
            opcode,
            signatures,
            sig_dim: cfg.sig_dim,
            whole_signature,
            trigrams,
            nop,
            section_flag: nop + 1,
            len: nop + 2,
        }
    }

    /// Slots of the `i`-th region signature.
    pub fn region(&self, i: usize) -> Range<usize> {
        let start = self.signatures.start + i * self.sig_dim;
        start..start + self.sig_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        FeatureVector {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Per-region readouts in BFS order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionFeatures {
    pub subgraph: Subgraph,
    pub opcodes: Vec<String>,
    pub apis: Vec<String>,
    pub signatures: Vec<NodeSignature>,
}

/// Everything [`assemble_vector`] needs besides the region readouts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WholeBinaryFeatures {
    pub signature: Vec<NodeSignature>,
    pub trigrams: Vec<(String, f64)>,
    pub nop_count: usize,
    pub section_flag: u8,
}

/// Lays the features out in the fixed order. Regions beyond
/// `max_regions` are ignored; missing regions leave their slots zero. A
/// failed selection yields the all-zero default vector.
pub fn assemble_vector(
    cfg: &FeatureConfig,
    selection: &RegionSelection,
    regions: &[RegionFeatures],
    whole: &WholeBinaryFeatures,
) -> FeatureVector {
    let layout = FeatureLayout::new(cfg);
    let mut v = FeatureVector::zeros(layout.len);
    if selection.case == SelectionCase::Failed {
        return v;
    }
    let regions = &regions[..regions.len().min(cfg.max_regions)];

    let apis: Vec<&str> = regions
        .iter()
        .flat_map(|r| r.apis.iter().map(String::as_str))
        .collect();
    let opcodes: Vec<&str> = regions
        .iter()
        .flat_map(|r| r.opcodes.iter().map(String::as_str))
        .collect();
    v.values[layout.api.clone()].copy_from_slice(&hash_unit_tokens(&apis, cfg.seq_dim));
    v.values[layout.opcode.clone()].copy_from_slice(&hash_unit_tokens(&opcodes, cfg.seq_dim));
    for (i, r) in regions.iter().enumerate() {
        v.values[layout.region(i)].copy_from_slice(&signature_vector(&r.signatures, cfg.sig_dim));
    }
    v.values[layout.whole_signature.clone()]
        .copy_from_slice(&signature_vector(&whole.signature, cfg.whole_sig_dim));
    v.values[layout.trigrams.clone()]
        .copy_from_slice(&hash_tokens(&whole.trigrams, cfg.trigram_dim));
    v.values[layout.nop] = whole.nop_count as f64;
    v.values[layout.section_flag] = f64::from(whole.section_flag);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::{BasicBlock, EntryFunction, Instruction};

    fn section(v: u64, p: u64) -> Section {
        Section {
            name: ".s".into(),
            virtual_size: v,
            physical_size: p,
        }
    }

    #[test]
    fn section_ratio_cases() {
        assert_eq!(section_ratio_flag(&[section(2000, 1000)], 1.5), 1);
        assert_eq!(section_ratio_flag(&[section(1000, 1000)], 1.5), 0);
        assert_eq!(section_ratio_flag(&[section(4096, 0)], 1.5), 1);
        assert_eq!(section_ratio_flag(&[section(0, 0)], 1.5), 0);
        assert_eq!(section_ratio_flag(&[section(1500, 1000)], 1.5), 0);
        assert_eq!(section_ratio_flag(&[], 1.5), 0);
    }

    fn snapshot_with(mnemonics: &[&[&str]]) -> DisassemblySnapshot {
        let mut addr = 0x1000;
        let blocks = mnemonics
            .iter()
            .enumerate()
            .map(|(i, ms)| {
                let start = addr;
                let instructions = ms
                    .iter()
                    .map(|m| {
                        addr += 1;
                        Instruction::new(addr - 1, *m)
                    })
                    .collect();
                addr += 0x10;
                BasicBlock {
                    id: NodeId(i),
                    start_addr: start,
                    instructions,
                }
            })
            .collect();
        DisassemblySnapshot::new(
            "n",
            vec![],
            vec![],
            vec![],
            vec![],
            EntryFunction {
                name: "entry0".into(),
                addr: 0x1000,
            },
            blocks,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn nop_counts() {
        assert_eq!(nop_count(&snapshot_with(&[&["mov", "ret"]])), 0);
        let s = snapshot_with(&[
            &["nop", "nop", "mov"],
            &["nop"],
            &["nop", "nop", "nop", "nop"],
        ]);
        assert_eq!(nop_count(&s), 7);
    }

    #[test]
    fn layout_offsets() {
        let l = FeatureLayout::new(&FeatureConfig::default());
        assert_eq!(l.api, 0..100);
        assert_eq!(l.opcode, 100..200);
        assert_eq!(l.signatures, 200..1200);
        assert_eq!(l.region(9), 1100..1200);
        assert_eq!(l.whole_signature, 1200..1400);
        assert_eq!(l.trigrams, 1400..1420);
        assert_eq!((l.nop, l.section_flag, l.len), (1420, 1421, 1422));
    }

    #[test]
    fn failed_selection_is_all_zero() {
        let whole = WholeBinaryFeatures {
            signature: vec![node_signature(1, 1)],
            trigrams: vec![("a|b|c".into(), 1.0)],
            nop_count: 4,
            section_flag: 1,
        };
        let v = assemble_vector(
            &FeatureConfig::default(),
            &RegionSelection::failed(),
            &[],
            &whole,
        );
        assert_eq!(v.len(), 1422);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }
}
