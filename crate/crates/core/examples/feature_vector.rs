//! Assemble the fixed-width feature vector of one synthetic binary and show
//! where each block lands.

use malregion::features::{analyze, FeatureLayout, IdfTable};
use malregion::synth::synth_snapshot;
use malregion::FeatureConfig;

fn main() {
    let config = FeatureConfig::default();
    let layout = FeatureLayout::new(&config);
    let snapshot = synth_snapshot("sample", true, 7);
    let idf = IdfTable::from_documents([malregion::features::opcode_stream(&snapshot)]);
    let a = analyze(&snapshot, &config, &idf, None);
    let v = a.vector.as_slice();

    let nonzero = |r: std::ops::Range<usize>| v[r].iter().filter(|&&x| x != 0.0).count();
    println!("vector length {} (case {:?})", v.len(), a.selection.case);
    println!(
        "  api hash       {:?}  {} nonzero",
        layout.api,
        nonzero(layout.api.clone())
    );
    println!(
        "  opcode hash    {:?}  {} nonzero",
        layout.opcode,
        nonzero(layout.opcode.clone())
    );
    for i in 0..config.max_regions {
        println!(
            "  region {i} sig   {:?}  {} nonzero",
            layout.region(i),
            nonzero(layout.region(i))
        );
    }
    println!(
        "  whole cfg sig  {:?}  {} nonzero",
        layout.whole_signature,
        nonzero(layout.whole_signature.clone())
    );
    println!(
        "  trigrams       {:?}  {} nonzero",
        layout.trigrams,
        nonzero(layout.trigrams.clone())
    );
    println!("  nop count      [{}] = {}", layout.nop, v[layout.nop]);
    println!(
        "  section flag   [{}] = {}",
        layout.section_flag, v[layout.section_flag]
    );
    for (t, w) in a.whole.trigrams.iter().take(5) {
        println!("  top trigram {t} {w:.3}");
    }
}
