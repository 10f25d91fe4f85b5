//! Extract a synthetic corpus, train a small network and report held-out
//! metrics.
//!
//! cargo run --release --example train_synthetic

use std::collections::BTreeMap;

use malregion::pipeline::{extract_corpus, train_model, CorpusFile};
use malregion::synth::synth_corpus;
use malregion::Config;

fn main() -> malregion::Result<()> {
    let mut files = Vec::new();
    let mut labels = BTreeMap::new();
    for (s, label) in synth_corpus(200, 200, 11) {
        labels.insert(s.binary_id.clone(), label);
        files.push(CorpusFile {
            stem: s.binary_id.clone(),
            bytes: s.to_json().into_bytes(),
        });
    }

    let mut config = Config::default();
    config.train.widths = vec![64, 16, 1];
    config.train.learning_rate = 0.01;
    let out = extract_corpus(&files, &labels, &config.features, None)?;
    println!("{:?}", out.summary);

    let t = train_model(&out.rows, &config)?;
    for (epoch, loss) in t.report.epoch_losses.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", epoch + 1);
    }
    let m = &t.test_metrics;
    println!(
        "held-out {}: accuracy {:.4} precision {:.4} recall {:.4} fpr {:.4} auc {:.4}",
        t.n_test, m.accuracy, m.precision, m.recall, m.fpr, m.auc
    );
    println!("confusion {:?}", m.confusion);
    Ok(())
}
