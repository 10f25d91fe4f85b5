//! Map strings and imported APIs back to entry-function CFG nodes through
//! the call cross-reference graph.

use std::path::PathBuf;

use malregion::mapper::{build_xref_graph, NodeMapper};
use malregion::preprocess::remove_loops;
use malregion::strings::rank_strings;
use malregion::{build_cfg, parse_snapshot};

fn main() -> malregion::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/xref_paths.json");
    let raw = std::fs::read(&path).map_err(|e| malregion::Error::io(&path, e))?;
    let snapshot = parse_snapshot(&raw)?;
    let partial = remove_loops(&build_cfg(&snapshot)?);
    let xg = build_xref_graph(&snapshot);
    println!(
        "xref graph: {} nodes, {} edges",
        xg.node_count(),
        xg.edge_count()
    );

    let name = |addr: u64| {
        snapshot
            .functions
            .iter()
            .find(|f| f.entry_addr == addr)
            .map_or_else(|| format!("{addr:#x}"), |f| f.name.clone())
    };
    let leaf = 0x500500;
    for p in xg.paths_to_entry(leaf, usize::MAX) {
        let hops: Vec<String> = p.iter().map(|&a| name(a)).collect();
        println!("  {}", hops.join(" <- "));
    }

    let mapper = NodeMapper::new(&snapshot, &partial, &xg)?;
    for s in rank_strings(&snapshot.strings, None) {
        println!(
            "string {:?} (score {:.2}) -> nodes {:?}",
            s.text,
            s.score,
            mapper.map_string_to_nodes(&s)
        );
    }
    for api in &snapshot.imports {
        println!(
            "api {} -> nodes {:?}",
            api.name,
            mapper.map_api_to_nodes(api)
        );
    }
    Ok(())
}
