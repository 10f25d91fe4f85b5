//! Parse a snapshot and walk the entry function's control-flow graph.
//!
//! cargo run --example build_cfg [snapshot.json]

use std::path::PathBuf;

use malregion::{build_cfg, parse_snapshot};

fn main() -> malregion::Result<()> {
    let path = std::env::args_os().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/cfg_loops.json"),
        PathBuf::from,
    );
    let raw = std::fs::read(&path).map_err(|e| malregion::Error::io(&path, e))?;
    let snapshot = parse_snapshot(&raw)?;
    let cfg = build_cfg(&snapshot)?;

    println!(
        "{}: {} blocks, {} edges, entry {}",
        snapshot.binary_id,
        cfg.node_count(),
        cfg.edge_count(),
        cfg.entry()
    );
    for block in cfg.blocks() {
        let succ: Vec<String> = cfg.successors(block.id).map(|s| s.to_string()).collect();
        println!(
            "  node {:>2} @ {:#x}  {} instructions  -> [{}]",
            block.id,
            block.start_addr,
            block.instructions.len(),
            succ.join(", ")
        );
    }
    println!("acyclic: {}", cfg.is_acyclic());
    Ok(())
}
