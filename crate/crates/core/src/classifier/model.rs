use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use super::network::Network;
use super::scaler::ScalerParams;
use crate::config::Config;
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Everything needed to score a raw feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: u32,
    pub widths: Vec<usize>,
    pub network: Network,
    pub scaler: ScalerParams,
    pub config: Config,
}

impl Model {
    pub fn new(network: Network, scaler: ScalerParams, config: Config) -> Result<Self> {
        network.check_shapes()?;
        if scaler.width() != network.input {
            return Err(Error::shape(format!(
                "scaler width {} differs from network input {}",
                scaler.width(),
                network.input
            )));
        }
        Ok(Model {
            version: MODEL_VERSION,
            widths: network.widths(),
            network,
            scaler,
            config,
        })
    }

    pub fn input_width(&self) -> usize {
        self.network.input
    }

    /// Malware probability of one unscaled feature row.
    pub fn score(&self, row: ArrayView1<'_, f64>) -> Result<f64> {
        let x = self.scaler.transform_row(row)?;
        self.network.predict_one(ArrayView1::from(&x))
    }

    pub fn score_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let scaled: Array2<f64> = self.scaler.transform(x)?;
        Ok(self.network.predict(scaled.view())?.to_vec())
    }

    pub fn evaluate(&self, x: ArrayView2<'_, f64>, labels: &[f64]) -> Result<Metrics> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset("nothing to evaluate".into()));
        }
        let scores = self.score_rows(x)?;
        Ok(compute_metrics(&scores, labels, DECISION_THRESHOLD))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let m: Model = serde_json::from_slice(raw)?;
        if m.version != MODEL_VERSION {
            return Err(Error::shape(format!(
                "unsupported model version {}",
                m.version
            )));
        }
        if m.widths != m.network.widths() {
            return Err(Error::shape(
                "declared widths differ from the stored layers",
            ));
        }
        m.network.check_shapes()?;
        if m.scaler.width() != m.network.input || m.scaler.std.len() != m.scaler.mean.len() {
            return Err(Error::shape("scaler does not match the network input"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }
}
