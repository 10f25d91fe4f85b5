//! Pick seed nodes from ranked strings and read out each two-level region
//! in breadth-first order.

use std::path::PathBuf;

use malregion::features::{analyze, IdfTable};
use malregion::{parse_snapshot, FeatureConfig};

fn main() -> malregion::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/region_readout.json");
    let raw = std::fs::read(&path).map_err(|e| malregion::Error::io(&path, e))?;
    let snapshot = parse_snapshot(&raw)?;
    let a = analyze(
        &snapshot,
        &FeatureConfig::default(),
        &IdfTable::default(),
        None,
    );

    println!("{} regions, case {:?}", a.regions.len(), a.selection.case);
    for (r, addr) in a.regions.iter().zip(&a.seed_addrs) {
        let order: Vec<String> = r
            .subgraph
            .bfs_order
            .iter()
            .map(ToString::to_string)
            .collect();
        let sig: Vec<String> = r.signatures.iter().map(|s| s.value.to_string()).collect();
        println!("seed {} at {addr:#x}", r.subgraph.seed);
        println!("  bfs order  {}", order.join(" "));
        println!("  opcodes    {}", r.opcodes.join(" "));
        println!("  apis       {}", r.apis.join(" "));
        println!("  signature  {}", sig.join(" "));
    }
    Ok(())
}
