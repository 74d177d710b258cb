//! Cost-sensitive binary loss.
//!
//! The loss is class-weighted binary cross-entropy where the weight of each
//! sample is chosen by its true label:
//!
//! ```text
//! L_w = -(1/N) * sum_i W[y_i] * (y_i ln p_i + (1 - y_i) ln(1 - p_i))
//! W[c] = alpha[c] * exp(R[c])
//! alpha[c] = (sum_j N_j) / (c * N_c)
//! R[0] = 0,  R[1] = N_10 / (N_11 + N_10)
//! ```
//!
//! `alpha` is fixed by the class counts. `R[1]` starts at 1 and is refreshed
//! from the training-set confusion matrix once per epoch, so samples of the
//! positive class cost more while many of them are still misclassified.
//!
//! Probabilities are clamped to `[1e-12, 1 - 1e-12]` before taking logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::tensor::NumericArray;

pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_C: f64 = 2.0;
/// Value of `R[1]` before the first update: every positive assumed missed.
pub const INITIAL_R1: f64 = 1.0;

/// `C_ij` is the cost of classifying true class `i` as class `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    c00: f64,
    c01: f64,
    c10: f64,
    c11: f64,
}

impl CostMatrix {
    /// Zero diagonal, with `c10 >= c01 >= 0`.
    pub fn new(c01: f64, c10: f64) -> Result<Self> {
        Self::from_entries(0.0, c01, c10, 0.0)
    }

    pub fn from_entries(c00: f64, c01: f64, c10: f64, c11: f64) -> Result<Self> {
        if c00 != 0.0 || c11 != 0.0 {
            return Err(Error::invalid(format!(
                "correct classifications must cost 0, got c00={c00} c11={c11}"
            )));
        }
        if !(c01.is_finite() && c10.is_finite()) || c01 < 0.0 || c10 < c01 {
            return Err(Error::invalid(format!(
                "costs must satisfy 0 <= c01 <= c10, got c01={c01} c10={c10}"
            )));
        }
        Ok(Self { c00, c01, c10, c11 })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.c00,
            (0, 1) => self.c01,
            (1, 0) => self.c10,
            (1, 1) => self.c11,
            _ => panic!("CostMatrix index ({i}, {j}) out of range"),
        }
    }
}

/// Expected cost of assigning a sample to `assigned`: the posterior mass of
/// every other class `j` times `C[assigned][j]`. Reporting only; training
/// never calls this.
pub fn expected_cost(posterior: &[f64], cm: &CostMatrix, assigned: usize) -> Result<f64> {
    if posterior.len() != 2 || assigned > 1 {
        return Err(Error::invalid(format!(
            "binary posterior and class expected, got {} classes and class {assigned}",
            posterior.len()
        )));
    }
    let total: f64 = posterior.iter().sum();
    if (total - 1.0).abs() > 1e-9 || posterior.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid(format!(
            "posterior {posterior:?} is not a probability vector"
        )));
    }
    Ok((0..2)
        .filter(|&j| j != assigned)
        .map(|j| posterior[j] * cm.get(assigned, j))
        .sum())
}

/// `alpha_i = (sum_j N_j) / (c * N_i)`.
pub fn compute_alpha(class_counts: &[usize], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("c must be positive, got {c}")));
    }
    if let Some(i) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {i} has no samples")));
    }
    let total: usize = class_counts.iter().sum();
    Ok(class_counts.iter().map(|&n| total as f64 / (c * n as f64)).collect())
}

/// Adjustment factors after an evaluation: `[0, N_10 / (N_11 + N_10)]`.
///
/// With no positive samples in `cm`, `R[1]` keeps `previous_r1`.
pub fn update_r(cm: &ConfusionMatrix, previous_r1: f64) -> [f64; 2] {
    let positives = cm.n11 + cm.n10;
    let r1 = if positives == 0 {
        previous_r1
    } else {
        cm.n10 as f64 / positives as f64
    };
    [0.0, r1]
}

/// `W_i = alpha_i * exp(R_i)`.
pub fn cost_weights(alpha: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != r.len() {
        return Err(Error::invalid(format!(
            "{} alpha values for {} adjustment factors",
            alpha.len(),
            r.len()
        )));
    }
    if let Some(bad) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("adjustment factor {bad} outside [0, 1]")));
    }
    Ok(alpha.iter().zip(r).map(|(a, r)| a * r.exp()).collect())
}

/// Per-class weights used by [`csbl_loss`] for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha: [f64; 2],
    pub r: [f64; 2],
    pub w: [f64; 2],
    pub c: f64,
}

impl CostWeights {
    pub fn new(alpha: [f64; 2], r1: f64, c: f64) -> Result<Self> {
        if alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!("alpha {alpha:?} must be positive")));
        }
        let r = [0.0, r1];
        let w = cost_weights(&alpha, &r)?;
        Ok(Self {
            alpha,
            r,
            w: [w[0], w[1]],
            c,
        })
    }

    /// `alpha = 1`, `R = 0`: plain cross-entropy.
    pub fn unit() -> Self {
        Self {
            alpha: [1.0, 1.0],
            r: [0.0, 0.0],
            w: [1.0, 1.0],
            c: DEFAULT_C,
        }
    }

    /// Same `alpha`, new `R[1]`.
    pub fn with_r1(&self, r1: f64) -> Result<Self> {
        Self::new(self.alpha, r1, self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `d loss / d p_i` for each sample's positive-class probability.
    pub d_probs: Vec<f64>,
}

fn check_batch(probs: &[f64], labels: &[u8]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("loss of an empty batch"));
    }
    if probs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::invalid(format!("label {} at {i} is not binary", labels[i])));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("loss"));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Log-likelihood of one label under positive-class probability `p`.
fn log_likelihood(p: f64, y: u8) -> f64 {
    let p = clamp(p);
    let y = f64::from(y);
    y * p.ln() + (1.0 - y) * (1.0 - p).ln()
}

/// Mean binary cross-entropy; `probs[i]` is the probability of class 1.
pub fn cross_entropy(probs: &[f64], labels: &[u8]) -> Result<f64> {
    check_batch(probs, labels)?;
    let sum: f64 = probs.iter().zip(labels).map(|(&p, &y)| log_likelihood(p, y)).sum();
    Ok(-sum / probs.len() as f64)
}

/// Cost-weighted cross-entropy and its gradient with respect to each probability.
pub fn csbl_loss(probs: &[f64], labels: &[u8], weights: &CostWeights) -> Result<LossOutput> {
    check_batch(probs, labels)?;
    let n = probs.len() as f64;
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| weights.w[usize::from(y)] * log_likelihood(p, y))
        .sum();
    let d_probs = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp(p);
            weights.w[usize::from(y)] * (p - f64::from(y)) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok(LossOutput {
        loss: -sum / n,
        d_probs,
    })
}

fn logit_grad(probs: &NumericArray, labels: &[u8], w: impl Fn(u8) -> f64) -> Result<NumericArray> {
    if probs.rank() != 2 || probs.dim(1) != 2 {
        return Err(Error::shape(
            "logit_grad",
            format!("expected [N, 2] probabilities, got {:?}", probs.shape()),
        ));
    }
    if probs.dim(0) != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} labels",
            probs.dim(0),
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::invalid(format!("label {} at {i} is not binary", labels[i])));
    }
    let n = labels.len() as f64;
    let mut out = Vec::with_capacity(probs.len());
    for (row, &y) in probs.data().chunks_exact(2).zip(labels) {
        for (class, &p) in row.iter().enumerate() {
            let target = if usize::from(y) == class { 1.0 } else { 0.0 };
            out.push(w(y) * (p - target) / n);
        }
    }
    Ok(NumericArray::from_parts(probs.shape().to_vec(), out))
}

/// Gradient of [`csbl_loss`] through the softmax, with respect to the
/// logits: `W[y] * (p - onehot(y)) / N`.
pub fn csbl_logit_grad(probs: &NumericArray, labels: &[u8], weights: &CostWeights) -> Result<NumericArray> {
    logit_grad(probs, labels, |y| weights.w[usize::from(y)])
}

/// Gradient of [`cross_entropy`] through the softmax: `(p - onehot(y)) / N`.
pub fn cross_entropy_logit_grad(probs: &NumericArray, labels: &[u8]) -> Result<NumericArray> {
    logit_grad(probs, labels, |_| 1.0)
}

/// Positive-class column of `[N, 2]` probabilities.
pub fn positive_column(probs: &NumericArray) -> Vec<f64> {
    probs.data().chunks_exact(2).map(|r| r[1]).collect()
}
