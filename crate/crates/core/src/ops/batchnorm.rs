//! Per-channel batch normalization over `[N, C, L]` inputs.
//!
//! Statistics are taken over the batch and length axes together. In train
//! mode the biased batch variance normalizes the input and the running
//! statistics move toward the batch statistics with momentum 0.1 (the
//! running variance uses the unbiased estimate). Eval mode normalizes with
//! the running statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{LayerGradients, NumericArray};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    /// Mean 0, variance 1 for each channel.
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Intermediates kept by a train-mode pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    shape: [usize; 3],
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNormCache {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }
}

fn dims(input: &NumericArray, gamma: &NumericArray, beta: &NumericArray) -> Result<[usize; 3]> {
    if input.rank() != 3 {
        return Err(Error::shape(
            "batchnorm1d",
            format!("input must be [N, C, L], got {:?}", input.shape()),
        ));
    }
    let c = input.dim(1);
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "batchnorm1d",
            format!("gamma {:?} / beta {:?} must be [{c}]", gamma.shape(), beta.shape()),
        ));
    }
    Ok([input.dim(0), c, input.dim(2)])
}

/// Normalizes `input`. In train mode returns the cache needed by
/// [`batchnorm1d_backward`] and, when `running` is given, updates it.
/// Eval mode requires `running`.
pub fn batchnorm1d(
    input: &NumericArray,
    gamma: &NumericArray,
    beta: &NumericArray,
    running: Option<&mut RunningStats>,
    mode: Mode,
) -> Result<(NumericArray, Option<BatchNormCache>)> {
    let [n, c, l] = dims(input, gamma, beta)?;
    if let Some(rs) = running.as_deref() {
        if rs.channels() != c {
            return Err(Error::shape(
                "batchnorm1d",
                format!("running stats have {} channels, input {c}", rs.channels()),
            ));
        }
    }
    match mode {
        Mode::Eval => {
            let rs = running.ok_or(Error::MissingRunningStats)?;
            Ok((normalize_with_running(input, gamma, beta, rs)?, None))
        }
        Mode::Train => {
            let m = n * l;
            if m < 2 {
                return Err(Error::shape(
                    "batchnorm1d",
                    format!("train mode needs N*L >= 2 values per channel, got {m}"),
                ));
            }
            let x = input.data();
            let (g, b) = (gamma.data(), beta.data());
            let mut out = vec![0.0; x.len()];
            let mut x_hat = vec![0.0; x.len()];
            let mut means = vec![0.0; c];
            let mut vars = vec![0.0; c];
            let mut inv_std = vec![0.0; c];
            for ch in 0..c {
                let mut sum = 0.0;
                for s in 0..n {
                    let off = (s * c + ch) * l;
                    sum += x[off..off + l].iter().sum::<f64>();
                }
                let mean = sum / m as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    let off = (s * c + ch) * l;
                    sq += x[off..off + l].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = sq / m as f64;
                let inv = 1.0 / (var + BN_EPS).sqrt();
                for s in 0..n {
                    let off = (s * c + ch) * l;
                    for i in off..off + l {
                        let xh = (x[i] - mean) * inv;
                        x_hat[i] = xh;
                        out[i] = g[ch] * xh + b[ch];
                    }
                }
                means[ch] = mean;
                vars[ch] = var;
                inv_std[ch] = inv;
            }
            if let Some(rs) = running {
                let unbias = m as f64 / (m - 1) as f64;
                for ch in 0..c {
                    rs.mean[ch] = (1.0 - BN_MOMENTUM) * rs.mean[ch] + BN_MOMENTUM * means[ch];
                    rs.var[ch] = (1.0 - BN_MOMENTUM) * rs.var[ch] + BN_MOMENTUM * vars[ch] * unbias;
                }
            }
            let out = NumericArray::from_parts(input.shape().to_vec(), out);
            out.ensure_finite("batchnorm1d")?;
            Ok((
                out,
                Some(BatchNormCache {
                    shape: [n, c, l],
                    x_hat,
                    inv_std,
                }),
            ))
        }
    }
}

/// Eval-mode normalization with the given running statistics.
pub(crate) fn normalize_with_running(
    input: &NumericArray,
    gamma: &NumericArray,
    beta: &NumericArray,
    rs: &RunningStats,
) -> Result<NumericArray> {
    let [n, c, l] = dims(input, gamma, beta)?;
    if rs.channels() != c {
        return Err(Error::shape(
            "batchnorm1d",
            format!("running stats have {} channels, input {c}", rs.channels()),
        ));
    }
    let (x, g, b) = (input.data(), gamma.data(), beta.data());
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let inv = 1.0 / (rs.var[ch] + BN_EPS).sqrt();
        let (scale, shift) = (g[ch] * inv, b[ch] - g[ch] * inv * rs.mean[ch]);
        for s in 0..n {
            let off = (s * c + ch) * l;
            for (o, &v) in out[off..off + l].iter_mut().zip(&x[off..off + l]) {
                *o = scale * v + shift;
            }
        }
    }
    let out = NumericArray::from_parts(input.shape().to_vec(), out);
    out.ensure_finite("batchnorm1d")?;
    Ok(out)
}

/// Gradients of a train-mode [`batchnorm1d`]. `d_params` holds `"gamma"` and `"beta"`.
pub fn batchnorm1d_backward(
    cache: &BatchNormCache,
    gamma: &NumericArray,
    d_output: &NumericArray,
) -> Result<LayerGradients> {
    let [n, c, l] = cache.shape;
    if d_output.shape() != cache.shape || gamma.shape() != [c] {
        return Err(Error::shape(
            "batchnorm1d_backward",
            format!(
                "d_output {:?} / gamma {:?} do not match cached [{n}, {c}, {l}]",
                d_output.shape(),
                gamma.shape()
            ),
        ));
    }
    let dy = d_output.data();
    let m = (n * l) as f64;
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for s in 0..n {
            let off = (s * c + ch) * l;
            for i in off..off + l {
                sum_dy += dy[i];
                sum_dy_xh += dy[i] * cache.x_hat[i];
            }
        }
        dbeta[ch] = sum_dy;
        dgamma[ch] = sum_dy_xh;
        let k = gamma.data()[ch] * cache.inv_std[ch] / m;
        for s in 0..n {
            let off = (s * c + ch) * l;
            for i in off..off + l {
                dx[i] = k * (m * dy[i] - sum_dy - cache.x_hat[i] * sum_dy_xh);
            }
        }
    }
    let mut d_params = BTreeMap::new();
    d_params.insert("gamma".to_owned(), NumericArray::from_parts(vec![c], dgamma));
    d_params.insert("beta".to_owned(), NumericArray::from_parts(vec![c], dbeta));
    let grads = LayerGradients {
        d_input: NumericArray::from_parts(cache.shape.to_vec(), dx),
        d_params,
    };
    grads.d_input.ensure_finite("batchnorm1d_backward")?;
    Ok(grads)
}
