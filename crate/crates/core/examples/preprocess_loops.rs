//! Remove loops, then merge single-parent/single-child chains.

use std::path::PathBuf;

use malregion::preprocess::{back_edges, preprocess};
use malregion::{build_cfg, parse_snapshot};

fn main() -> malregion::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/cfg_loops.json");
    let raw = std::fs::read(&path).map_err(|e| malregion::Error::io(&path, e))?;
    let cfg = build_cfg(&parse_snapshot(&raw)?)?;

    for (from, to) in back_edges(&cfg) {
        println!("back edge {from} -> {to}");
    }
    let (partial, complete) = preprocess(&cfg);
    println!(
        "partial: {} nodes {} edges, acyclic {}",
        partial.node_count(),
        partial.edge_count(),
        partial.is_acyclic()
    );
    println!(
        "complete: {} nodes {} edges",
        complete.node_count(),
        complete.edge_count()
    );
    for id in complete.node_ids() {
        let members = complete.members(id);
        if members.len() > 1 {
            let m: Vec<String> = members.iter().map(ToString::to_string).collect();
            println!("  node {id} absorbed [{}]", m.join(", "));
        }
    }
    Ok(())
}
