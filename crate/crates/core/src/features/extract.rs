//! Per-binary orchestration: snapshot in, feature vector out.

use serde::Serialize;

use super::{
    assemble_vector, nop_count, opcode_stream, section_ratio_flag, sequence_tokens,
    signature_sequence, top_trigrams, FeatureVector, IdfTable, RegionFeatures, TokenKind,
    WholeBinaryFeatures,
};
use crate::cfg::{build_cfg, Cfg};
use crate::config::FeatureConfig;
use crate::error::Result;
use crate::mapper::{build_xref_graph, NodeMapper};
use crate::preprocess::preprocess;
use crate::region::{extract_subgraph, select_seed_nodes, whole_graph_order, RegionSelection};
use crate::snapshot::{parse_snapshot, DisassemblySnapshot};
use crate::strings::{rank_strings, RankedString, ScoreOverrides};

/// Every intermediate result of one binary's feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub binary_id: String,
    pub ranked: Vec<RankedString>,
    pub selection: RegionSelection,
    /// Start address of each seed block, parallel to `selection.seeds`.
    pub seed_addrs: Vec<u64>,
    pub regions: Vec<RegionFeatures>,
    pub whole: WholeBinaryFeatures,
    pub vector: FeatureVector,
    /// Why the binary fell into the failed case.
    pub failure: Option<String>,
}

impl Analysis {
    fn failed(
        binary_id: String,
        ranked: Vec<RankedString>,
        config: &FeatureConfig,
        why: String,
    ) -> Self {
        let selection = RegionSelection::failed();
        let whole = WholeBinaryFeatures::default();
        let vector = assemble_vector(config, &selection, &[], &whole);
        Analysis {
            binary_id,
            ranked,
            selection,
            seed_addrs: Vec::new(),
            regions: Vec::new(),
            whole,
            vector,
            failure: Some(why),
        }
    }
}

/// Runs the whole pipeline on a parsed snapshot. Never fails: an empty CFG
/// or an unmappable binary yields the failed case and an all-zero vector.
pub fn analyze(
    snapshot: &DisassemblySnapshot,
    config: &FeatureConfig,
    idf: &IdfTable,
    overrides: Option<&ScoreOverrides>,
) -> Analysis {
    let ranked = rank_strings(&snapshot.strings, overrides);
    let id = snapshot.binary_id.clone();
    let raw = match build_cfg(snapshot) {
        Ok(cfg) => cfg,
        Err(e) => return Analysis::failed(id, ranked, config, e.to_string()),
    };
    let (partial, complete) = preprocess(&raw);
    let xg = build_xref_graph(snapshot);
    let mapper = match NodeMapper::new(snapshot, &partial, &xg) {
        Ok(m) => m,
        Err(e) => return Analysis::failed(id, ranked, config, e.to_string()),
    };

    let selection = select_seed_nodes(&partial, &ranked, &mapper, config.max_regions);
    let api_map = mapper.api_map();
    let regions: Vec<RegionFeatures> = selection
        .seeds
        .iter()
        .map(|&seed| {
            let subgraph = extract_subgraph(&partial, seed, config.levels);
            RegionFeatures {
                opcodes: sequence_tokens(&subgraph, &partial, TokenKind::Opcode, &api_map),
                apis: sequence_tokens(&subgraph, &partial, TokenKind::Api, &api_map),
                signatures: signature_sequence(&partial, &subgraph.bfs_order),
                subgraph,
            }
        })
        .collect();
    let seed_addrs = selection
        .seeds
        .iter()
        .map(|&s| start_addr(&partial, s))
        .collect();

    let whole = WholeBinaryFeatures {
        signature: signature_sequence(&complete, &whole_graph_order(&complete)),
        trigrams: top_trigrams(&opcode_stream(snapshot), idf, config.trigrams),
        nop_count: nop_count(snapshot),
        section_flag: section_ratio_flag(&snapshot.sections, config.ratio_threshold),
    };
    let vector = assemble_vector(config, &selection, &regions, &whole);
    Analysis {
        binary_id: id,
        ranked,
        selection,
        seed_addrs,
        regions,
        whole,
        vector,
        failure: None,
    }
}

fn start_addr(cfg: &Cfg, id: crate::snapshot::NodeId) -> u64 {
    cfg.node(id).map_or(0, |b| b.start_addr)
}

/// Like [`analyze`] but starting from raw JSON. A document that does not
/// parse is reported under `fallback_id` in the failed case.
pub fn analyze_bytes(
    raw: &[u8],
    fallback_id: &str,
    config: &FeatureConfig,
    idf: &IdfTable,
    overrides: Option<&ScoreOverrides>,
) -> Analysis {
    match parse_snapshot(raw) {
        Ok(s) => analyze(&s, config, idf, overrides),
        Err(e) => Analysis::failed(fallback_id.to_string(), Vec::new(), config, e.to_string()),
    }
}

/// Feature vector of one snapshot. Errors only on invalid settings.
pub fn extract_features(
    snapshot: &DisassemblySnapshot,
    config: &FeatureConfig,
    idf: &IdfTable,
    overrides: Option<&ScoreOverrides>,
) -> Result<FeatureVector> {
    config.validate()?;
    Ok(analyze(snapshot, config, idf, overrides).vector)
}
