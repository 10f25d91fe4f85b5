#![allow(clippy::needless_range_loop)]

mod common;

use malregion::classifier::{bce_loss, roc_auc, train_from, Mode, Network};
use malregion::config::{Optimizer, TrainConfig};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inference pass written with nested loops over plain vectors.
fn straight_line(net: &Network, x: &[f64]) -> f64 {
    let mut a: Vec<f64> = x.to_vec();
    let last = net.layers.len() - 1;
    for (i, layer) in net.layers.iter().enumerate() {
        let (rows, cols) = layer.w.dim();
        let mut z = vec![0.0; rows];
        for r in 0..rows {
            let mut s = layer.b[r];
            for c in 0..cols {
                s += layer.w[[r, c]] * a[c];
            }
            z[r] = s;
        }
        if i == last {
            return 1.0 / (1.0 + (-z[0]).exp());
        }
        if let Some(bn) = &layer.bn {
            for r in 0..rows {
                let xh = (z[r] - bn.running_mean[r]) / (bn.running_var[r] + 1e-5).sqrt();
                z[r] = bn.gamma[r] * xh + bn.beta[r];
            }
        }
        a = z
            .into_iter()
            .map(|v| if v > 0.0 { v } else { 0.0 })
            .collect();
    }
    unreachable!("network has an output layer")
}

fn random_net(rng: &mut ChaCha8Rng, input: usize, widths: &[usize], bn: bool) -> Network {
    let mut net = Network::new(input, widths, 0.0, bn, rng);
    for l in &mut net.layers {
        if let Some(b) = &mut l.bn {
            b.gamma.mapv_inplace(|_| rng.gen_range(0.5..1.5));
            b.beta.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
            b.running_mean.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
            b.running_var.mapv_inplace(|_| rng.gen_range(0.5..2.0));
        }
    }
    net
}

#[test]
fn forward_matches_straight_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for bn in [false, true] {
        let net = random_net(&mut rng, 7, &[6, 5, 3, 1], bn);
        let x = Array2::from_shape_fn((15, 7), |_| rng.gen_range(-2.0..2.0));
        let got = net.predict(x.view()).unwrap();
        for (row, &g) in x.rows().into_iter().zip(&got) {
            let want = straight_line(&net, row.as_slice().unwrap());
            assert!((g - want).abs() < 1e-12, "{g} vs {want}");
        }
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    // gradients below 1e-6 in magnitude are compared on an absolute scale
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference
/// gradients over every weight, bias and batch-norm parameter.
fn max_gradient_error(net: &Network, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = net.forward(x.view(), Mode::Train, &mut rng).unwrap();
    let grads = net.backward(&pass, y.view());
    let loss = |n: &Network| {
        n.loss(
            x.view(),
            y.view(),
            Mode::Train,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap()
    };
    let mut worst: f64 = 0.0;
    for (li, g) in grads.iter().enumerate() {
        for ((r, c), &analytic) in g.w.indexed_iter() {
            let mut p = net.clone();
            p.layers[li].w[[r, c]] += h;
            let mut m = net.clone();
            m.layers[li].w[[r, c]] -= h;
            worst = worst.max(rel_err(analytic, (loss(&p) - loss(&m)) / (2.0 * h)));
        }
        for (r, &analytic) in g.b.indexed_iter() {
            let mut p = net.clone();
            p.layers[li].b[r] += h;
            let mut m = net.clone();
            m.layers[li].b[r] -= h;
            worst = worst.max(rel_err(analytic, (loss(&p) - loss(&m)) / (2.0 * h)));
        }
        if let (Some(gg), Some(gb)) = (&g.gamma, &g.beta) {
            for r in 0..gg.len() {
                let mut p = net.clone();
                p.layers[li].bn.as_mut().unwrap().gamma[r] += h;
                let mut m = net.clone();
                m.layers[li].bn.as_mut().unwrap().gamma[r] -= h;
                worst = worst.max(rel_err(gg[r], (loss(&p) - loss(&m)) / (2.0 * h)));
                let mut p = net.clone();
                p.layers[li].bn.as_mut().unwrap().beta[r] += h;
                let mut m = net.clone();
                m.layers[li].bn.as_mut().unwrap().beta[r] -= h;
                worst = worst.max(rel_err(gb[r], (loss(&p) - loss(&m)) / (2.0 * h)));
            }
        }
    }
    worst
}

fn sample_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Array2<f64>, Array1<f64>) {
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
    let y = Array1::from_shape_fn(n, |_| f64::from(u8::from(rng.gen_bool(0.5))));
    (x, y)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Network::new(10, &[8, 4, 1], 0.0, false, &mut rng);
    let (x, y) = sample_batch(&mut rng, 20, 10);
    let err = max_gradient_error(&net, &x, &y);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = random_net(&mut rng, 6, &[8, 4, 1], true);
    let (x, y) = sample_batch(&mut rng, 20, 6);
    let err = max_gradient_error(&net, &x, &y);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn one_step_moves_against_the_mean_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let net = Network::new(5, &[4, 1], 0.0, false, &mut rng);
    let (x, y) = sample_batch(&mut rng, 12, 5);
    let lr = 0.1;
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 12,
        learning_rate: lr,
        optimizer: Optimizer::Sgd,
        seed: 0,
        widths: vec![4, 1],
        dropout: 0.0,
        batch_norm: false,
        split: 0.7,
    };
    let (after, _) = train_from(
        net.clone(),
        x.view(),
        y.view(),
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    let h = 1e-5;
    let loss = |n: &Network| {
        n.loss(
            x.view(),
            y.view(),
            Mode::Infer,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap()
    };
    for li in 0..net.layers.len() {
        for ((r, c), &w0) in net.layers[li].w.indexed_iter() {
            let mut p = net.clone();
            p.layers[li].w[[r, c]] += h;
            let mut m = net.clone();
            m.layers[li].w[[r, c]] -= h;
            let numeric = (loss(&p) - loss(&m)) / (2.0 * h);
            let step = (w0 - after.layers[li].w[[r, c]]) / lr;
            assert!(
                rel_err(step, numeric) < 1e-4,
                "layer {li} w[{r},{c}]: {step} vs {numeric}"
            );
        }
    }
}

proptest! {
    #[test]
    fn bce_equals_formula(pairs in proptest::collection::vec((0.001f64..0.999, any::<bool>()), 1..40)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
        let direct = -a.iter().zip(&y).map(|(a, y)| y * a.ln() + (1.0 - y) * (1.0 - a).ln()).sum::<f64>()
            / a.len() as f64;
        prop_assert!((bce_loss(&a, &y) - direct).abs() < 1e-12);
    }

    #[test]
    fn auc_equals_pairwise_concordance(
        pairs in proptest::collection::vec((0u8..20, any::<bool>()), 2..60),
    ) {
        // coarse scores force ties
        let s: Vec<f64> = pairs.iter().map(|p| f64::from(p.0) / 20.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
        prop_assert!((roc_auc(&s, &y) - common::pairwise_auc(&s, &y)).abs() < 1e-9);
    }
}
