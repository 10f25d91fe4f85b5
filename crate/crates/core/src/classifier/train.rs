use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Gradients, Mode, Network};
use crate::config::{Optimizer, TrainConfig};
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Loss history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Inference-mode loss on the whole training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Parameter update rule state.
enum Stepper {
    Sgd,
    Adam {
        t: i32,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

/// Mutable views of every trainable tensor, in a fixed order shared with
/// [`grad_slices`].
fn param_slices(net: &mut Network) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for l in &mut net.layers {
        out.push(l.w.as_slice_mut().expect("standard layout"));
        out.push(l.b.as_slice_mut().expect("standard layout"));
        if let Some(bn) = &mut l.bn {
            out.push(bn.gamma.as_slice_mut().expect("standard layout"));
            out.push(bn.beta.as_slice_mut().expect("standard layout"));
        }
    }
    out
}

fn grad_slices(grads: &Gradients) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for g in grads {
        out.push(g.w.as_slice().expect("standard layout"));
        out.push(g.b.as_slice().expect("standard layout"));
        if let (Some(gm), Some(bt)) = (&g.gamma, &g.beta) {
            out.push(gm.as_slice().expect("standard layout"));
            out.push(bt.as_slice().expect("standard layout"));
        }
    }
    out
}

impl Stepper {
    fn new(kind: Optimizer, net: &mut Network) -> Self {
        match kind {
            Optimizer::Sgd => Stepper::Sgd,
            Optimizer::Adam => {
                let zeros: Vec<Vec<f64>> = param_slices(net)
                    .iter()
                    .map(|p| vec![0.0; p.len()])
                    .collect();
                Stepper::Adam {
                    t: 0,
                    m: zeros.clone(),
                    v: zeros,
                }
            }
        }
    }

    fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) {
        let gs = grad_slices(grads);
        let ps = param_slices(net);
        match self {
            Stepper::Sgd => {
                for (p, g) in ps.into_iter().zip(gs) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= lr * gi;
                    }
                }
            }
            Stepper::Adam { t, m, v } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for (k, (p, g)) in ps.into_iter().zip(gs).enumerate() {
                    for (j, (pi, &gi)) in p.iter_mut().zip(g).enumerate() {
                        let mk = &mut m[k][j];
                        let vk = &mut v[k][j];
                        *mk = ADAM_BETA1 * *mk + (1.0 - ADAM_BETA1) * gi;
                        *vk = ADAM_BETA2 * *vk + (1.0 - ADAM_BETA2) * gi * gi;
                        *pi -= lr * (*mk / c1) / ((*vk / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

fn check_data(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::shape(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Labels(format!("label {bad} is neither 0 nor 1")));
    }
    Ok(())
}

/// Trains a fresh network. Deterministic in `(x, y, config)`.
pub fn train(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    config.validate()?;
    check_data(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = Network::new(
        x.ncols(),
        &config.widths,
        config.dropout,
        config.batch_norm,
        &mut rng,
    );
    train_from(net, x, y, config, &mut rng)
}

/// Continues training `net` with the given generator.
pub fn train_from(
    mut net: Network,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Network, TrainReport)> {
    check_data(x, y)?;
    net.check_shapes()?;
    if x.ncols() != net.input {
        return Err(Error::shape(format!(
            "network expects {} inputs, got {}",
            net.input,
            x.ncols()
        )));
    }
    let mut stepper = Stepper::new(config.optimizer, &mut net);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size) {
            let xb: Array2<f64> = x.select(Axis(0), batch);
            let yb: Array1<f64> = y.select(Axis(0), batch);
            let pass = net.forward(xb.view(), Mode::Train, rng)?;
            let grads = net.backward(&pass, yb.view());
            net.update_running_stats(&pass);
            stepper.step(&mut net, &grads, config.learning_rate);
        }
        epoch_losses.push(net.loss(x, y, Mode::Infer, rng)?);
    }
    Ok((net, TrainReport { epoch_losses }))
}

/// Seeded, stratified split of sample indices. Each class contributes
/// `floor(split * n_class)` training rows; the rows still needed to reach
/// `round(split * n)` go to the classes with the largest fractional parts,
/// class 0 first on ties.
pub fn stratified_split(labels: &[f64], split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0.0 {
            by_class[0].push(i);
        } else if l == 1.0 {
            by_class[1].push(i);
        } else {
            return Err(Error::Labels(format!("label {l} is neither 0 nor 1")));
        }
    }
    if by_class.iter().any(Vec::is_empty) {
        return Err(Error::Labels("both classes must be present".into()));
    }
    let total = (split * labels.len() as f64).round() as usize;
    let exact: Vec<f64> = by_class.iter().map(|c| split * c.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total.saturating_sub(take.iter().sum());
    let mut by_frac = [0usize, 1];
    by_frac.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for c in by_frac {
        if rest > 0 && take[c] < by_class[c].len() {
            take[c] += 1;
            rest -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        tr.extend_from_slice(&idx[..take[c]]);
        te.extend_from_slice(&idx[take[c]..]);
    }
    tr.sort_unstable();
    te.sort_unstable();
    Ok((tr, te))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_config(opt: Optimizer) -> TrainConfig {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 0.5,
            optimizer: opt,
            seed: 1,
            widths: vec![1],
            dropout: 0.0,
            batch_norm: false,
            split: 0.7,
        }
    }

    fn separable() -> (Array2<f64>, Array1<f64>) {
        let x = array![
            [2.0, 1.0],
            [1.5, 2.0],
            [3.0, 0.5],
            [2.5, 2.5],
            [-2.0, -1.0],
            [-1.0, -2.5],
            [-3.0, 0.0],
            [-0.5, -1.5]
        ];
        let y = array![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        (x, y)
    }

    #[test]
    fn separable_set_is_learned() {
        let (x, y) = separable();
        let (net, _) = train(x.view(), y.view(), &tiny_config(Optimizer::Sgd)).unwrap();
        let p = net.predict(x.view()).unwrap();
        for (pi, yi) in p.iter().zip(&y) {
            assert_eq!(f64::from(u8::from(*pi >= 0.5)), *yi);
        }
    }

    #[test]
    fn logistic_loss_never_increases() {
        let (x, y) = separable();
        let mut cfg = tiny_config(Optimizer::Sgd);
        cfg.batch_size = 8;
        cfg.learning_rate = 0.05;
        let (_, report) = train(x.view(), y.view(), &cfg).unwrap();
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (x, y) = separable();
        for opt in [Optimizer::Sgd, Optimizer::Adam] {
            let mut cfg = tiny_config(opt);
            cfg.widths = vec![3, 1];
            cfg.learning_rate = 0.0;
            cfg.epochs = 5;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let init = Network::new(2, &cfg.widths, 0.0, false, &mut rng);
            let (trained, _) = train(x.view(), y.view(), &cfg).unwrap();
            assert_eq!(trained, init);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let (x, y) = separable();
        let mut cfg = tiny_config(Optimizer::Adam);
        cfg.widths = vec![4, 3, 1];
        cfg.dropout = 0.2;
        cfg.batch_norm = true;
        cfg.learning_rate = 0.01;
        let a = train(x.view(), y.view(), &cfg).unwrap().0;
        let b = train(x.view(), y.view(), &cfg).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn bad_labels_rejected() {
        let (x, _) = separable();
        let y = Array1::from_elem(8, 0.5);
        assert!(matches!(
            train(x.view(), y.view(), &tiny_config(Optimizer::Adam)),
            Err(Error::Labels(_))
        ));
    }

    #[test]
    fn split_of_ten() {
        let labels = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let (tr, te) = stratified_split(&labels, 0.7, 9).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(stratified_split(&labels, 0.7, 9).unwrap(), (tr, te));
    }

    #[test]
    fn split_needs_both_classes() {
        assert!(stratified_split(&[1.0, 1.0, 1.0], 0.7, 0).is_err());
    }
}
