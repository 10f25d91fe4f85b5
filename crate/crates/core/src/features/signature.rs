use serde::Serialize;

use crate::cfg::Cfg;
use crate::snapshot::NodeId;

pub const MAX_CHILDREN: usize = 3;
pub const MAX_PARENTS: usize = 63;

/// One-byte structural code of a node: parent count in the high six bits,
/// child count in the low two bits. Both counts saturate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct NodeSignature {
    pub value: u8,
}

impl NodeSignature {
    pub fn parents(self) -> usize {
        usize::from(self.value >> 2)
    }

    pub fn children(self) -> usize {
        usize::from(self.value & 0b11)
    }
}

pub fn node_signature(parents: usize, children: usize) -> NodeSignature {
    let p = parents.min(MAX_PARENTS) as u8;
    let c = children.min(MAX_CHILDREN) as u8;
    NodeSignature {
        value: (p << 2) | c,
    }
}

/// Signatures of `order`'s nodes, with degrees taken from the whole `cfg`.
pub fn signature_sequence(cfg: &Cfg, order: &[NodeId]) -> Vec<NodeSignature> {
    order
        .iter()
        .map(|&n| node_signature(cfg.in_degree(n), cfg.out_degree(n)))
        .collect()
}

/// Writes the sequence into a fixed-width vector, truncating or zero-padding.
pub fn signature_vector(seq: &[NodeSignature], dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for (slot, sig) in v.iter_mut().zip(seq) {
        *slot = f64::from(sig.value);
    }
    v
}
