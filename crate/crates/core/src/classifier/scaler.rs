use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column standardization, `x' = (x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub std: Vec<f64>,
}

pub fn fit_scaler(x: ArrayView2<'_, f64>) -> Result<ScalerParams> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset(
            "cannot fit a scaler on zero rows".into(),
        ));
    }
    let n = x.nrows() as f64;
    let mut mean = Vec::with_capacity(x.ncols());
    let mut std = Vec::with_capacity(x.ncols());
    for col in x.axis_iter(Axis(1)) {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            mean.push(first);
            std.push(1.0);
            continue;
        }
        let m = col.sum() / n;
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
    }
    Ok(ScalerParams { mean, std })
}

impl ScalerParams {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| (v - self.mean[j]) / self.std[j])
            .collect())
    }

    fn check(&self, width: usize) -> Result<()> {
        if width != self.width() {
            return Err(Error::shape(format!(
                "scaler expects {} features, got {width}",
                self.width()
            )));
        }
        Ok(())
    }
}
