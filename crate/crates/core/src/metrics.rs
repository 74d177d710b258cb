//! Binary confusion matrix and the derived scores.
//!
//! Class 1 (frosted) is the positive class. Any 0/0 ratio is reported as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::NumericArray;

/// `n_ij` counts samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl ConfusionMatrix {
    pub fn new(n00: u64, n01: u64, n10: u64, n11: u64) -> Self {
        Self { n00, n01, n10, n11 }
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    pub fn positives(&self) -> u64 {
        self.n10 + self.n11
    }

    fn record(&mut self, actual: u8, predicted: u8) {
        match (actual, predicted) {
            (0, 0) => self.n00 += 1,
            (0, _) => self.n01 += 1,
            (_, 0) => self.n10 += 1,
            _ => self.n11 += 1,
        }
    }
}

fn check_labels(labels: &[u8], what: &str) -> Result<()> {
    match labels.iter().position(|&l| l > 1) {
        Some(i) => Err(Error::invalid(format!(
            "{what}[{i}] = {} is not a binary label",
            labels[i]
        ))),
        None => Ok(()),
    }
}

pub fn confusion(predicted: &[u8], actual: &[u8]) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("confusion of an empty set"));
    }
    check_labels(predicted, "predicted")?;
    check_labels(actual, "actual")?;
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        cm.record(a, p);
    }
    Ok(cm)
}

/// Argmax over `[N, 2]` class probabilities; exact ties go to class 0.
pub fn predict_labels(probs: &NumericArray) -> Result<Vec<u8>> {
    if probs.rank() != 2 || probs.dim(1) != 2 {
        return Err(Error::shape(
            "predict_labels",
            format!("expected [N, 2] probabilities, got {:?}", probs.shape()),
        ));
    }
    Ok(probs.data().chunks_exact(2).map(|p| u8::from(p[1] > p[0])).collect())
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("accuracy of an empty confusion matrix"));
    }
    Ok((cm.n00 + cm.n11) as f64 / total as f64)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> PrecisionRecallF1 {
    let precision = ratio(cm.n11, cm.n11 + cm.n01);
    let recall = ratio(cm.n11, cm.n11 + cm.n10);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecallF1 { precision, recall, f1 }
}

/// Everything reported for one evaluated set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSummary {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let prf = precision_recall_f1(&cm);
        Ok(Self {
            confusion: cm,
            accuracy: accuracy(&cm)?,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
        })
    }
}
