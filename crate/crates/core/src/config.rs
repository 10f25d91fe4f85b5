//! Pipeline settings. Every knob has a default and can be overridden from a
//! flat JSON object, e.g. `{"levels": 3, "epochs": 20}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output widths of the thirteen-layer default network.
pub const DEFAULT_WIDTHS: [usize; 13] = [
    5608, 5096, 4584, 4072, 3560, 3048, 2536, 2024, 1012, 512, 256, 128, 1,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Predecessor/successor depth of each region.
    pub levels: usize,
    pub max_regions: usize,
    /// Number of top TF-IDF trigrams kept.
    pub trigrams: usize,
    pub trigram_dim: usize,
    /// Width of each hashed API / opcode block.
    pub seq_dim: usize,
    /// Width of each region's signature block.
    pub sig_dim: usize,
    pub whole_sig_dim: usize,
    pub ratio_threshold: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            levels: 2,
            max_regions: 10,
            trigrams: 15,
            trigram_dim: 20,
            seq_dim: 100,
            sig_dim: 100,
            whole_sig_dim: 200,
            ratio_threshold: 1.5,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_regions", self.max_regions),
            ("trigram_dim", self.trigram_dim),
            ("seq_dim", self.seq_dim),
            ("sig_dim", self.sig_dim),
            ("whole_sig_dim", self.whole_sig_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.ratio_threshold.is_finite() || self.ratio_threshold < 0.0 {
            return Err(Error::Config(
                "ratio_threshold must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    /// Length of the feature vector these settings produce.
    pub fn vector_len(&self) -> usize {
        2 * self.seq_dim
            + self.max_regions * self.sig_dim
            + self.whole_sig_dim
            + self.trigram_dim
            + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Batch-averaged gradient descent, `W -= lr * sum(dW) / m`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(rename = "batch")]
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Output width of every layer; the last must be 1.
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub batch_norm: bool,
    /// Fraction of samples used for training.
    pub split: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 12,
            batch_size: 200,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 42,
            widths: DEFAULT_WIDTHS.to_vec(),
            dropout: 0.2,
            batch_norm: true,
            split: 0.7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.last() != Some(&1) {
            return Err(Error::Config("the last layer width must be 1".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config("split must lie in (0, 1)".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(
                "learning_rate must be a non-negative number".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Config {
    #[serde(flatten)]
    pub features: FeatureConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Config {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let cfg: Config = serde_json::from_slice(raw).map_err(|e| Error::Config(e.to_string()))?;
        cfg.features.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }
}
