//! Opcode trigrams weighted by TF-IDF.
//!
//! `tf(t) = count(t) / total trigrams in the stream`
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, with `df = 0` for unseen trigrams.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 15;

/// Joins three mnemonics into a trigram token.
pub fn trigram_token(a: &str, b: &str, c: &str) -> String {
    format!("{a}|{b}|{c}")
}

pub fn trigrams<S: AsRef<str>>(stream: &[S]) -> Vec<String> {
    stream
        .windows(3)
        .map(|w| trigram_token(w[0].as_ref(), w[1].as_ref(), w[2].as_ref()))
        .collect()
}

/// Corpus document frequencies of opcode trigrams.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub doc_count: usize,
    pub df: BTreeMap<String, usize>,
}

impl IdfTable {
    pub fn from_documents<I, D, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut t = IdfTable::default();
        for d in docs {
            t.add_document(d.as_ref());
        }
        t
    }

    pub fn add_document<S: AsRef<str>>(&mut self, stream: &[S]) {
        self.doc_count += 1;
        let distinct: BTreeSet<String> = trigrams(stream).into_iter().collect();
        for t in distinct {
            *self.df.entry(t).or_default() += 1;
        }
    }

    /// Combines counts gathered over disjoint document sets.
    pub fn merge(mut self, other: IdfTable) -> Self {
        self.doc_count += other.doc_count;
        for (t, n) in other.df {
            *self.df.entry(t).or_default() += n;
        }
        self
    }

    pub fn idf(&self, trigram: &str) -> f64 {
        let df = self.df.get(trigram).copied().unwrap_or(0) as f64;
        ((1.0 + self.doc_count as f64) / (1.0 + df)).ln() + 1.0
    }

    pub fn validate(&self) -> Result<()> {
        for (t, &n) in &self.df {
            if n == 0 || n > self.doc_count {
                return Err(Error::Config(format!(
                    "document frequency {n} of {t:?} outside 1..={}",
                    self.doc_count
                )));
            }
        }
        Ok(())
    }
}

/// Top `k` trigrams of the stream by TF-IDF weight, ties broken by
/// ascending trigram text.
pub fn top_trigrams<S: AsRef<str>>(stream: &[S], idf: &IdfTable, k: usize) -> Vec<(String, f64)> {
    let grams = trigrams(stream);
    if grams.is_empty() {
        return Vec::new();
    }
    let total = grams.len() as f64;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for g in grams {
        *counts.entry(g).or_default() += 1;
    }
    let mut weighted: Vec<(String, f64)> = counts
        .into_iter()
        .map(|(t, n)| {
            let w = (n as f64 / total) * idf.idf(&t);
            (t, w)
        })
        .collect();
    weighted.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    weighted.truncate(k);
    weighted
}

/// Persisted next to a feature file: IDF counts plus the feature settings
/// they were extracted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfFile {
    #[serde(flatten)]
    pub table: IdfTable,
    pub features: crate::config::FeatureConfig,
}

impl IdfFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let f: IdfFile = serde_json::from_slice(&raw)?;
        f.table.validate()?;
        f.features.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("idf file serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
