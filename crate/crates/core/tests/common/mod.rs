//! Gradient checks shared by the gradient and acceptance test targets:
//! every backward pass against central finite differences.
//!
//! Each layer runs 100 randomized small-shape trials. A scalar loss
//! `sum(output * upstream)` with a random upstream array turns each layer
//! into a function whose gradient is exactly what its backward pass returns.
//! Trials where a ReLU input or a max-pool runner-up sits within 1e-3 of a
//! kink are redrawn, since finite differences are meaningless there.

#![allow(dead_code)]

use frostnet::gradcheck::{finite_difference_gradient, Tolerance};
use frostnet::loss::{csbl_logit_grad, csbl_loss, positive_column, CostWeights};
use frostnet::model::{build_model, ArchitectureConfig};
use frostnet::ops::{self, Mode};
use frostnet::NumericArray;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 100;
const H: f64 = 1e-5;
const KINK: f64 = 1e-3;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> NumericArray {
    let n = shape.iter().product();
    NumericArray::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn weighted_sum(out: &NumericArray, upstream: &NumericArray) -> f64 {
    out.dot(upstream).unwrap()
}

fn check(what: &str, trial: usize, analytic: &NumericArray, numeric: &NumericArray) -> Result<(), String> {
    match Tolerance::default().first_violation(analytic, numeric) {
        Some((i, a, n)) => Err(format!(
            "{what}, trial {trial}: coordinate {i} analytic {a:e} vs numeric {n:e}"
        )),
        None => Ok(()),
    }
}

pub fn conv1d() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..TRIALS {
        let c_in = rng.gen_range(1..=3);
        let c_out = rng.gen_range(1..=3);
        let len = rng.gen_range(3..=12);
        let k = rng.gen_range(1..=len.min(5));
        let x = random(&mut rng, &[c_in, len]);
        let w = random(&mut rng, &[c_out, c_in, k]);
        let b = random(&mut rng, &[c_out]);
        let up = random(&mut rng, &[c_out, len - k + 1]);

        let g = ops::conv1d_backward(&x, &w, &up).unwrap();
        let nx = finite_difference_gradient(|v| weighted_sum(&ops::conv1d(v, &w, &b).unwrap(), &up), &x, H);
        let nw = finite_difference_gradient(|v| weighted_sum(&ops::conv1d(&x, v, &b).unwrap(), &up), &w, H);
        let nb = finite_difference_gradient(|v| weighted_sum(&ops::conv1d(&x, &w, v).unwrap(), &up), &b, H);
        check("conv1d input", trial, &g.d_input, &nx)?;
        check("conv1d kernels", trial, g.param("kernels").unwrap(), &nw)?;
        check("conv1d bias", trial, g.param("bias").unwrap(), &nb)?;
    }
    Ok(())
}

fn min_window_gap(x: &NumericArray, window: usize) -> f64 {
    let len = *x.shape().last().unwrap();
    let mut gap = f64::INFINITY;
    for row in x.data().chunks(len) {
        for w in row[..len / window * window].chunks(window) {
            let mut v = w.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            if v.len() > 1 {
                gap = gap.min(v[0] - v[1]);
            }
        }
    }
    gap
}

pub fn maxpool1d() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trial = 0;
    while trial < TRIALS {
        let c = rng.gen_range(1..=3);
        let len = rng.gen_range(2..=13);
        let window = rng.gen_range(1..=len.min(4));
        let x = random(&mut rng, &[c, len]);
        if min_window_gap(&x, window) < KINK {
            continue;
        }
        let (out, idx) = ops::maxpool1d(&x, window).unwrap();
        let up = random(&mut rng, out.shape());
        let dx = ops::maxpool1d_backward(&idx, &up).unwrap();
        let nx = finite_difference_gradient(|v| weighted_sum(&ops::maxpool1d(v, window).unwrap().0, &up), &x, H);
        check("maxpool1d input", trial, &dx, &nx)?;
        trial += 1;
    }
    Ok(())
}

pub fn batchnorm1d() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..TRIALS {
        let n = rng.gen_range(1..=4);
        let c = rng.gen_range(1..=3);
        let l = rng.gen_range(if n == 1 { 2 } else { 1 }..=6);
        let x = random(&mut rng, &[n, c, l]);
        let gamma = random(&mut rng, &[c]);
        let beta = random(&mut rng, &[c]);
        let up = random(&mut rng, &[n, c, l]);
        let bn = |x: &NumericArray, g: &NumericArray, b: &NumericArray| {
            let (out, _) = ops::batchnorm1d(x, g, b, None, Mode::Train).unwrap();
            weighted_sum(&out, &up)
        };

        let (_, cache) = ops::batchnorm1d(&x, &gamma, &beta, None, Mode::Train).unwrap();
        let g = ops::batchnorm1d_backward(&cache.unwrap(), &gamma, &up).unwrap();
        let nx = finite_difference_gradient(|v| bn(v, &gamma, &beta), &x, H);
        let ng = finite_difference_gradient(|v| bn(&x, v, &beta), &gamma, H);
        let nb = finite_difference_gradient(|v| bn(&x, &gamma, v), &beta, H);
        check("batchnorm1d input", trial, &g.d_input, &nx)?;
        check("batchnorm1d gamma", trial, g.param("gamma").unwrap(), &ng)?;
        check("batchnorm1d beta", trial, g.param("beta").unwrap(), &nb)?;
    }
    Ok(())
}

pub fn relu() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut trial = 0;
    while trial < TRIALS {
        let shape = [rng.gen_range(1..=3), rng.gen_range(1..=8)];
        let x = random(&mut rng, &shape);
        if x.data().iter().any(|v| v.abs() < KINK) {
            continue;
        }
        let up = random(&mut rng, &shape);
        let dx = ops::relu_backward(&x, &up).unwrap();
        let nx = finite_difference_gradient(|v| weighted_sum(&ops::relu(v), &up), &x, H);
        check("relu input", trial, &dx, &nx)?;
        trial += 1;
    }
    Ok(())
}

pub fn dense() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..TRIALS {
        let n = rng.gen_range(1..=4);
        let f = rng.gen_range(1..=6);
        let o = rng.gen_range(1..=4);
        let x = random(&mut rng, &[n, f]);
        let w = random(&mut rng, &[f, o]);
        let b = random(&mut rng, &[o]);
        let up = random(&mut rng, &[n, o]);

        let g = ops::dense_backward(&x, &w, &up).unwrap();
        let nx = finite_difference_gradient(|v| weighted_sum(&ops::dense(v, &w, &b).unwrap(), &up), &x, H);
        let nw = finite_difference_gradient(|v| weighted_sum(&ops::dense(&x, v, &b).unwrap(), &up), &w, H);
        let nb = finite_difference_gradient(|v| weighted_sum(&ops::dense(&x, &w, v).unwrap(), &up), &b, H);
        check("dense input", trial, &g.d_input, &nx)?;
        check("dense weights", trial, g.param("weights").unwrap(), &nw)?;
        check("dense bias", trial, g.param("bias").unwrap(), &nb)?;
    }
    Ok(())
}

fn random_weights(rng: &mut ChaCha8Rng) -> CostWeights {
    let alpha = [rng.gen_range(0.3..2.0), rng.gen_range(0.5..10.0)];
    CostWeights::new(alpha, rng.gen_range(0.0..=1.0), 2.0).unwrap()
}

pub fn softmax_weighted_loss() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..TRIALS {
        let n = rng.gen_range(1..=8);
        let logits = random(&mut rng, &[n, 2]);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let weights = random_weights(&mut rng);
        let loss = |z: &NumericArray| {
            let p = ops::softmax(z).unwrap();
            csbl_loss(&positive_column(&p), &labels, &weights).unwrap().loss
        };
        let probs = ops::softmax(&logits).unwrap();
        let analytic = csbl_logit_grad(&probs, &labels, &weights).unwrap();
        let numeric = finite_difference_gradient(loss, &logits, H);
        check("softmax + weighted loss", trial, &analytic, &numeric)?;
    }
    Ok(())
}

pub fn whole_network() -> Result<(), String> {
    let config = ArchitectureConfig {
        input_length: 32,
        conv_filters: vec![2, 2, 2],
        conv_kernel: 3,
        pool_windows: vec![2, 2, 2],
        num_classes: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut trial = 0;
    while trial < TRIALS {
        let mut model = build_model(&config, rng.gen()).unwrap();
        // move BN affine parameters off their initial values
        for b in &mut model.blocks {
            b.gamma = random(&mut rng, b.gamma.shape()).map(|v| 1.0 + 0.3 * v);
            b.beta = random(&mut rng, b.beta.shape()).map(|v| 0.3 * v);
        }
        let n = rng.gen_range(2..=4);
        let batch = random(&mut rng, &[n, 32]);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let weights = random_weights(&mut rng);

        let mut probe = model.clone();
        let (probs, cache) = probe.forward_train(&batch).unwrap();
        if cache.min_relu_margin() < KINK || cache.min_pool_margin() < KINK {
            continue;
        }
        let d_logits = csbl_logit_grad(&probs, &labels, &weights).unwrap();
        let grads = model.backward(&cache, &d_logits).unwrap();

        let names = model.learnable_names();
        for (p, analytic) in grads.arrays().into_iter().enumerate() {
            let loss = |v: &NumericArray| {
                let mut m = model.clone();
                *m.learnable_mut()[p] = v.clone();
                let (probs, _) = m.forward_train(&batch).unwrap();
                csbl_loss(&positive_column(&probs), &labels, &weights).unwrap().loss
            };
            let numeric = finite_difference_gradient(loss, model.learnable()[p], H);
            check(&names[p], trial, analytic, &numeric)?;
        }
        trial += 1;
    }
    Ok(())
}

/// Every check with its name, in layer order.
pub const GRADIENT_CHECKS: [(&str, fn() -> Result<(), String>); 7] = [
    ("conv1d", conv1d),
    ("maxpool1d", maxpool1d),
    ("batchnorm1d", batchnorm1d),
    ("relu", relu),
    ("dense", dense),
    ("softmax + weighted loss", softmax_weighted_loss),
    ("whole network", whole_network),
];
