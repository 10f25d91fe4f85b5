//! Corpus-level orchestration behind the command-line tool: two-pass
//! feature extraction, feature and label files, training, classification
//! and the region report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{
    fit_scaler, stratified_split, train, Metrics, Model, TrainReport, DECISION_THRESHOLD,
};
use crate::config::{Config, FeatureConfig};
use crate::error::{Error, Result};
use crate::features::{analyze, analyze_bytes, opcode_stream, Analysis, IdfFile, IdfTable};
use crate::region::SelectionCase;
use crate::snapshot::{parse_snapshot, DisassemblySnapshot};
use crate::strings::ScoreOverrides;

/// Label written for binaries missing from the label file.
pub const UNLABELED: i8 = -1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub binary_id: String,
    pub label: i8,
    pub values: Vec<f64>,
}

/// Per-case counts of one extraction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub total: usize,
    pub ten_or_more: usize,
    pub one_to_nine: usize,
    pub no_malicious: usize,
    pub failed: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone)]
pub struct ExtractOutput {
    pub rows: Vec<FeatureRow>,
    pub idf: IdfTable,
    pub summary: ExtractSummary,
    /// `(binary id, reason)` of every failed binary.
    pub failures: Vec<(String, String)>,
}

/// One corpus document: an id to fall back on and the raw JSON.
#[derive(Debug, Clone)]
pub struct CorpusFile {
    pub stem: String,
    pub bytes: Vec<u8>,
}

/// `*.json` files of `dir`, sorted by file name.
pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusFile>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(CorpusFile { stem, bytes })
        })
        .collect()
}

/// Reads `binary_id,label` records; a leading `binary_id,label` header is
/// optional. Labels must be 0 or 1.
pub fn parse_labels(raw: &[u8]) -> Result<BTreeMap<String, u8>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Labels(e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::Labels(format!(
                "line {}: expected 2 fields, got {}",
                i + 1,
                rec.len()
            )));
        }
        if i == 0 && &rec[0] == "binary_id" && &rec[1] == "label" {
            continue;
        }
        let label = match &rec[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Labels(format!(
                    "line {}: label {other:?} is not 0 or 1",
                    i + 1
                )))
            }
        };
        out.insert(rec[0].to_string(), label);
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&raw)
}

/// First pass: document frequencies of every parseable snapshot.
pub fn build_idf(corpus: &[CorpusFile]) -> IdfTable {
    corpus
        .par_iter()
        .fold(IdfTable::default, |mut t, f| {
            if let Ok(s) = parse_snapshot(&f.bytes) {
                t.add_document(&opcode_stream(&s));
            }
            t
        })
        .reduce(IdfTable::default, IdfTable::merge)
}

/// Runs both passes. Never drops a file: each yields exactly one row, in
/// corpus order.
pub fn extract_corpus(
    corpus: &[CorpusFile],
    labels: &BTreeMap<String, u8>,
    config: &FeatureConfig,
    overrides: Option<&ScoreOverrides>,
) -> Result<ExtractOutput> {
    config.validate()?;
    let idf = build_idf(corpus);
    let analyses: Vec<Analysis> = corpus
        .par_iter()
        .map(|f| analyze_bytes(&f.bytes, &f.stem, config, &idf, overrides))
        .collect();

    let mut summary = ExtractSummary::default();
    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(analyses.len());
    for (a, f) in analyses.into_iter().zip(corpus) {
        summary.total += 1;
        match a.selection.case {
            SelectionCase::TenOrMore => summary.ten_or_more += 1,
            SelectionCase::OneToNine => summary.one_to_nine += 1,
            SelectionCase::NoMalicious => summary.no_malicious += 1,
            SelectionCase::Failed => summary.failed += 1,
        }
        if let Some(why) = &a.failure {
            log::warn!("{}: {why}; using default features", a.binary_id);
            failures.push((a.binary_id.clone(), why.clone()));
        }
        let label = labels
            .get(&a.binary_id)
            .or_else(|| labels.get(&f.stem))
            .map_or(UNLABELED, |&l| l as i8);
        if label == UNLABELED {
            log::warn!("{}: no label", a.binary_id);
            summary.unlabeled += 1;
        }
        rows.push(FeatureRow {
            binary_id: a.binary_id,
            label,
            values: a.vector.values,
        });
    }
    Ok(ExtractOutput {
        rows,
        idf,
        summary,
        failures,
    })
}

/// Serializes rows as header-less CSV, `binary_id,label,v0,...`. Values use
/// the shortest text that parses back to the same float.
pub fn write_features(rows: &[FeatureRow]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in rows {
        let mut rec = Vec::with_capacity(r.values.len() + 2);
        rec.push(r.binary_id.clone());
        rec.push(r.label.to_string());
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn parse_features(raw: &[u8], path: &Path) -> Result<Vec<FeatureRow>> {
    let bad = |reason: String| Error::FeatureFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(raw);
    let mut rows: Vec<FeatureRow> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() < 3 {
            return Err(bad(format!("line {}: too few fields", i + 1)));
        }
        let label: i8 = rec[1]
            .parse()
            .map_err(|_| bad(format!("line {}: bad label {:?}", i + 1, &rec[1])))?;
        if ![UNLABELED, 0, 1].contains(&label) {
            return Err(bad(format!("line {}: label {label} out of range", i + 1)));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        if let Some(first) = rows.first() {
            if first.values.len() != values.len() {
                return Err(bad(format!(
                    "line {}: {} values, earlier rows have {}",
                    i + 1,
                    values.len(),
                    first.values.len()
                )));
            }
        }
        rows.push(FeatureRow {
            binary_id: rec[0].to_string(),
            label,
            values,
        });
    }
    Ok(rows)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_features(&raw, path)
}

/// Where the IDF table of a feature file lives.
pub fn idf_path_for(features: &Path) -> PathBuf {
    let mut s = features.as_os_str().to_owned();
    s.push(".idf.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub report: TrainReport,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
    pub n_train: usize,
    pub n_test: usize,
}

fn matrix(rows: &[&FeatureRow]) -> (Array2<f64>, Vec<f64>) {
    let width = rows.first().map_or(0, |r| r.values.len());
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.values.iter().copied()).collect();
    let x = Array2::from_shape_vec((rows.len(), width), flat).expect("rows share one width");
    let y = rows.iter().map(|r| f64::from(r.label)).collect();
    (x, y)
}

/// Seeded stratified split, scaler fitted on the training rows, network
/// trained on the scaled training rows, metrics on both splits. Unlabeled
/// rows are skipped.
pub fn train_model(rows: &[FeatureRow], config: &Config) -> Result<TrainOutcome> {
    config.features.validate()?;
    config.train.validate()?;
    let labeled: Vec<&FeatureRow> = rows.iter().filter(|r| r.label != UNLABELED).collect();
    for class in [0, 1] {
        let n = labeled.iter().filter(|r| r.label == class).count();
        if n < 2 {
            return Err(Error::Labels(format!(
                "class {class} has {n} samples, need at least 2"
            )));
        }
    }
    let labels: Vec<f64> = labeled.iter().map(|r| f64::from(r.label)).collect();
    let (tr, te) = stratified_split(&labels, config.train.split, config.train.seed)?;
    let pick = |idx: &[usize]| -> Vec<&FeatureRow> { idx.iter().map(|&i| labeled[i]).collect() };
    let (x_tr, y_tr) = matrix(&pick(&tr));
    let (x_te, y_te) = matrix(&pick(&te));

    let scaler = fit_scaler(x_tr.view())?;
    let scaled = scaler.transform(x_tr.view())?;
    let (network, report) = train(
        scaled.view(),
        Array1::from(y_tr.clone()).view(),
        &config.train,
    )?;
    let model = Model::new(network, scaler, config.clone())?;
    let train_metrics = model.evaluate(x_tr.view(), &y_tr)?;
    let test_metrics = model.evaluate(x_te.view(), &y_te)?;
    Ok(TrainOutcome {
        model,
        report,
        train_metrics,
        test_metrics,
        n_train: tr.len(),
        n_test: te.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub binary_id: String,
    pub score: f64,
    pub malware: bool,
    pub case: SelectionCase,
}

/// Scores one snapshot with a trained model and the IDF table it was
/// trained against.
pub fn classify_snapshot(
    snapshot: &DisassemblySnapshot,
    model: &Model,
    idf: &IdfFile,
    overrides: Option<&ScoreOverrides>,
) -> Result<Verdict> {
    let width = idf.features.vector_len();
    if width != model.input_width() {
        return Err(Error::shape(format!(
            "feature settings give {width} values but the model expects {}",
            model.input_width()
        )));
    }
    let a = analyze(snapshot, &idf.features, &idf.table, overrides);
    let score = model.score(ArrayView1::from(&a.vector.values))?;
    Ok(Verdict {
        binary_id: a.binary_id,
        score,
        malware: score >= DECISION_THRESHOLD,
        case: a.selection.case,
    })
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Human-readable account of what was found in one binary.
pub fn render_report(a: &Analysis) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "binary: {}", a.binary_id);
    let _ = writeln!(out, "case: {:?}", a.selection.case);
    if let Some(why) = &a.failure {
        let _ = writeln!(out, "failure: {why}");
    }
    let _ = writeln!(out, "ranked strings: {}", a.ranked.len());
    for s in &a.ranked {
        let refs = join(s.ref_addrs.iter().map(|r| format!("{r:#x}")));
        let _ = writeln!(out, "  {:5.2}  {:?}  refs [{refs}]", s.score, s.text);
    }
    let _ = writeln!(out, "seeds: {}", a.selection.seeds.len());
    for (i, ((seed, addr), why)) in a
        .selection
        .seeds
        .iter()
        .zip(&a.seed_addrs)
        .zip(&a.selection.seed_strings)
        .enumerate()
    {
        let origin = why
            .as_deref()
            .map_or("entry node".to_string(), |t| format!("{t:?}"));
        let _ = writeln!(out, "  region {i}: node {seed} at {addr:#x} from {origin}");
    }
    for (i, r) in a.regions.iter().enumerate() {
        let _ = writeln!(
            out,
            "region {i} (seed node {}, {} nodes)",
            r.subgraph.seed,
            r.subgraph.nodes.len()
        );
        let _ = writeln!(out, "  bfs order: {}", join(&r.subgraph.bfs_order));
        let _ = writeln!(out, "  opcodes: {}", join(&r.opcodes));
        let _ = writeln!(out, "  apis: {}", join(&r.apis));
        let _ = writeln!(
            out,
            "  signature: {}",
            join(r.signatures.iter().map(|s| s.value))
        );
    }
    if a.selection.case != SelectionCase::Failed {
        let _ = writeln!(
            out,
            "whole cfg signature: {}",
            join(a.whole.signature.iter().map(|s| s.value))
        );
        let _ = writeln!(out, "top trigrams:");
        for (t, w) in &a.whole.trigrams {
            let _ = writeln!(out, "  {w:.6}  {t}");
        }
        let _ = writeln!(out, "nop count: {}", a.whole.nop_count);
        let _ = writeln!(out, "section ratio flag: {}", a.whole.section_flag);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_with_and_without_header() {
        let a = parse_labels(b"binary_id,label\nx,1\ny,0\n").unwrap();
        let b = parse_labels(b"x,1\ny,0\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a["x"], 1);
    }

    #[test]
    fn malformed_labels() {
        assert!(matches!(parse_labels(b"x,2\n"), Err(Error::Labels(_))));
        assert!(parse_labels(b"x\n").is_err());
        assert!(parse_labels(b"x,1,3\n").is_err());
    }

    #[test]
    fn feature_file_round_trip() {
        let rows = vec![
            FeatureRow {
                binary_id: "a,b".into(),
                label: 1,
                values: vec![0.1, -3.0e-12, 1.0 / 3.0, 0.0],
            },
            FeatureRow {
                binary_id: "c".into(),
                label: UNLABELED,
                values: vec![f64::MAX, f64::MIN_POSITIVE, 7.0, -0.0],
            },
        ];
        let raw = write_features(&rows);
        let back = parse_features(&raw, Path::new("f")).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn ragged_feature_file() {
        assert!(parse_features(b"a,1,0.5,0.5\nb,0,0.5\n", Path::new("f")).is_err());
        assert!(parse_features(b"a,4,0.5\n", Path::new("f")).is_err());
    }

    #[test]
    fn idf_path_appends_suffix() {
        assert_eq!(
            idf_path_for(Path::new("out/f.csv")),
            PathBuf::from("out/f.csv.idf.json")
        );
    }
}
