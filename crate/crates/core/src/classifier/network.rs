//! Feedforward network: every hidden layer is affine, batch-norm, ReLU,
//! dropout; the output layer is affine then sigmoid. Rows are samples.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
/// Predictions are clamped to `[LOSS_EPS, 1 - LOSS_EPS]` before logs.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    /// Hidden layers only, when enabled.
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input: usize,
    pub layers: Vec<Layer>,
    pub dropout: f64,
}

/// Intermediate values of one layer kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-activations and `1 / sqrt(var + eps)` per unit.
    xhat: Option<(Array2<f64>, Array1<f64>)>,
    /// Value fed to the activation.
    pre: Array2<f64>,
    dropout_mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    caches: Vec<LayerCache>,
    /// Batch mean and variance of every batch-normalized layer.
    batch_stats: Vec<Option<(Array1<f64>, Array1<f64>)>>,
    pub output: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

pub type Gradients = Vec<LayerGrad>;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if predictions.is_empty() {
        return 0.0;
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&a, &y)| {
            let a = a.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            y * a.ln() + (1.0 - y) * (1.0 - a).ln()
        })
        .sum();
    -sum / predictions.len() as f64
}

impl Network {
    /// He-uniform weights, biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng>(
        input: usize,
        widths: &[usize],
        dropout: f64,
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for (i, &out) in widths.iter().enumerate() {
            let limit = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((out, fan_in), |_| rng.gen_range(-limit..=limit));
            let bl = 1.0 / (fan_in as f64).sqrt();
            let b = Array1::from_shape_fn(out, |_| rng.gen_range(-bl..=bl));
            let hidden = i + 1 < widths.len();
            layers.push(Layer {
                w,
                b,
                bn: (hidden && batch_norm).then(|| BatchNorm::new(out)),
            });
            fan_in = out;
        }
        Network {
            input,
            layers,
            dropout,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.w.nrows()).collect()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let mut fan_in = self.input;
        for (i, l) in self.layers.iter().enumerate() {
            let out = l.w.nrows();
            if l.w.ncols() != fan_in || l.b.len() != out {
                return Err(Error::shape(format!(
                    "layer {i} does not chain from width {fan_in}"
                )));
            }
            if let Some(bn) = &l.bn {
                let ok = [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                    .iter()
                    .all(|v| v.len() == out);
                if !ok {
                    return Err(Error::shape(format!("batch-norm width of layer {i}")));
                }
            }
            fan_in = out;
        }
        if fan_in != 1 {
            return Err(Error::shape("the output layer must have width 1"));
        }
        Ok(())
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {width}",
                self.input
            )));
        }
        Ok(())
    }

    pub fn forward<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut batch_stats = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.w.t()) + &layer.b;
            if i == last {
                let out = z.mapv(sigmoid);
                caches.push(LayerCache {
                    input: a,
                    xhat: None,
                    pre: z,
                    dropout_mask: None,
                });
                batch_stats.push(None);
                a = out;
                break;
            }
            let (pre, xhat, stats) = match &layer.bn {
                None => (z, None, None),
                Some(bn) => {
                    let (mean, var) = match mode {
                        Mode::Train => {
                            let m = z.mean_axis(Axis(0)).expect("non-empty batch");
                            let v = (&z - &m)
                                .mapv(|d| d * d)
                                .mean_axis(Axis(0))
                                .expect("non-empty batch");
                            (m, v)
                        }
                        Mode::Infer => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xh = (&z - &mean) * &inv_std;
                    let pre = &xh * &bn.gamma + &bn.beta;
                    let stats = (mode == Mode::Train).then_some((mean, var));
                    (pre, Some((xh, inv_std)), stats)
                }
            };
            let mut act = pre.mapv(|v| v.max(0.0));
            let dropout_mask = if mode == Mode::Train && self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                let mask = Array2::from_shape_fn(act.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                act *= &mask;
                Some(mask)
            } else {
                None
            };
            caches.push(LayerCache {
                input: a,
                xhat,
                pre,
                dropout_mask,
            });
            batch_stats.push(stats);
            a = act;
        }
        Ok(ForwardPass {
            caches,
            batch_stats,
            output: a.column(0).to_owned(),
        })
    }

    /// Inference-mode scores of every row.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        Ok(self.forward(x, Mode::Infer, &mut unused)?.output)
    }

    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let row = x.insert_axis(Axis(0));
        Ok(self.predict(row)?[0])
    }

    /// Gradients of the mean BCE loss with respect to every trainable
    /// parameter. The output delta is the exact sigmoid/BCE derivative
    /// `a - y`.
    pub fn backward(&self, pass: &ForwardPass, labels: ArrayView1<'_, f64>) -> Gradients {
        let m = labels.len() as f64;
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut delta = ((&pass.output - &labels) / m).insert_axis(Axis(1));
        for (i, (layer, cache)) in self.layers.iter().zip(&pass.caches).enumerate().rev() {
            let last = i + 1 == self.layers.len();
            let mut gamma = None;
            let mut beta = None;
            let dz = if last {
                delta
            } else {
                let mut d = delta;
                if let Some(mask) = &cache.dropout_mask {
                    d *= mask;
                }
                d.zip_mut_with(&cache.pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                });
                match (&layer.bn, &cache.xhat) {
                    (Some(bn), Some((xh, inv_std))) => {
                        gamma = Some((&d * xh).sum_axis(Axis(0)));
                        beta = Some(d.sum_axis(Axis(0)));
                        let dxh = &d * &bn.gamma;
                        let n = dxh.nrows() as f64;
                        let sum_dxh = dxh.sum_axis(Axis(0));
                        let sum_dxh_xh = (&dxh * xh).sum_axis(Axis(0));
                        (&dxh * n - &sum_dxh - xh * &sum_dxh_xh) * &(inv_std / n)
                    }
                    _ => d,
                }
            };
            let gw = dz.t().dot(&cache.input);
            let gb = dz.sum_axis(Axis(0));
            delta = dz.dot(&layer.w);
            grads.push(LayerGrad {
                w: gw,
                b: gb,
                gamma,
                beta,
            });
        }
        grads.reverse();
        grads
    }

    /// Folds a training pass's batch statistics into the running ones.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        for (layer, stats) in self.layers.iter_mut().zip(&pass.batch_stats) {
            if let (Some(bn), Some((mean, var))) = (&mut layer.bn, stats) {
                bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + mean * BN_MOMENTUM;
                bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + var * BN_MOMENTUM;
            }
        }
    }

    /// Mean BCE of the network on `(x, y)` in the given mode.
    pub fn loss<R: Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<f64> {
        let out = self.forward(x, mode, rng)?.output;
        Ok(bce_loss(
            out.as_slice().expect("contiguous"),
            y.as_slice().expect("contiguous"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let mut net = Network::new(3, &[4, 1], 0.0, false, &mut rng());
        for l in &mut net.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let p = net.predict(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(p[0], 0.5);
    }

    #[test]
    fn bias_only_logistic() {
        let mut net = Network::new(2, &[1], 0.0, false, &mut rng());
        net.layers[0].w.fill(0.0);
        net.layers[0].b[0] = 3.0f64.ln();
        let p = net.predict_one(array![5.0, 5.0].view()).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bce_analytic() {
        assert!((bce_loss(&[0.5], &[1.0]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]) < 1e-11);
        // clamped, so finite
        assert!(bce_loss(&[0.0], &[1.0]).is_finite());
    }

    #[test]
    fn wrong_width_is_shape_error() {
        let net = Network::new(3, &[2, 1], 0.0, false, &mut rng());
        assert!(matches!(
            net.predict_one(array![1.0, 2.0].view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn train_equals_infer_without_dropout_or_bn() {
        let net = Network::new(4, &[5, 3, 1], 0.0, false, &mut rng());
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let t = net
            .forward(x.view(), Mode::Train, &mut rng())
            .unwrap()
            .output;
        assert_eq!(t, net.predict(x.view()).unwrap());
    }

    #[test]
    fn shapes_chain() {
        let net = Network::new(6, &[4, 2, 1], 0.2, true, &mut rng());
        assert!(net.check_shapes().is_ok());
        assert_eq!(net.widths(), vec![4, 2, 1]);
        assert!(net.layers[2].bn.is_none());
    }
}
