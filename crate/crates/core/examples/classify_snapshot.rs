//! Train, save, reload and score fresh snapshots the way the `classify`
//! subcommand does.

use std::collections::BTreeMap;

use malregion::classifier::Model;
use malregion::features::IdfFile;
use malregion::pipeline::{classify_snapshot, extract_corpus, train_model, CorpusFile};
use malregion::synth::{synth_corpus, synth_snapshot};
use malregion::Config;

fn main() -> malregion::Result<()> {
    let corpus = synth_corpus(60, 60, 5);
    let labels: BTreeMap<String, u8> = corpus
        .iter()
        .map(|(s, l)| (s.binary_id.clone(), *l))
        .collect();
    let files: Vec<CorpusFile> = corpus
        .iter()
        .map(|(s, _)| CorpusFile {
            stem: s.binary_id.clone(),
            bytes: s.to_json().into_bytes(),
        })
        .collect();

    let mut config = Config::default();
    config.train.widths = vec![32, 1];
    config.train.epochs = 30;
    config.train.batch_size = 32;
    config.train.learning_rate = 0.01;
    let out = extract_corpus(&files, &labels, &config.features, None)?;
    let trained = train_model(&out.rows, &config)?;

    let dir = std::env::temp_dir();
    let model_path = dir.join("malregion-example-model.json");
    trained.model.save(&model_path)?;
    let model = Model::load(&model_path)?;
    let idf = IdfFile {
        table: out.idf,
        features: config.features,
    };

    for (id, malicious) in [("fresh_benign", false), ("fresh_dropper", true)] {
        let v = classify_snapshot(&synth_snapshot(id, malicious, 4242), &model, &idf, None)?;
        let verdict = if v.malware { "malware" } else { "benign" };
        println!("{} {verdict} {:.6} ({:?})", v.binary_id, v.score, v.case);
    }
    let _ = std::fs::remove_file(model_path);
    Ok(())
}
