//! Brute-force k-nearest-neighbour classifier, the non-deep baseline.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::NumericArray;

/// Stores the training set verbatim; prediction scans it in full.
#[derive(Debug, Clone)]
pub struct KnnModel {
    train: Dataset,
    k: usize,
}

pub const DEFAULT_K: usize = 5;

/// `k` must be odd and no larger than the training set.
pub fn knn_fit(train: &Dataset, k: usize) -> Result<KnnModel> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::invalid(format!("k must be a positive odd number, got {k}")));
    }
    if k > train.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} training samples",
            train.len()
        )));
    }
    Ok(KnnModel {
        train: train.clone(),
        k,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    fn nearest(&self, query: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = (0..self.train.len())
            .map(|i| {
                let d2 = self
                    .train
                    .row(i)
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, i)
            })
            .collect();
        // distance ties go to the lower training index
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        dist.select_nth_unstable_by(self.k - 1, by_distance);
        dist.truncate(self.k);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority vote among the `k` nearest training rows (Euclidean).
    pub fn predict(&self, query: &NumericArray) -> Result<Vec<u8>> {
        if query.rank() != 2 || query.dim(1) != self.train.dim() {
            return Err(Error::shape(
                "knn_predict",
                format!(
                    "queries {:?} do not have the training dimension {}",
                    query.shape(),
                    self.train.dim()
                ),
            ));
        }
        Ok((0..query.dim(0))
            .map(|q| {
                let ones = self
                    .nearest(query.outer(q))
                    .into_iter()
                    .filter(|&i| self.train.labels()[i] == 1)
                    .count();
                u8::from(2 * ones > self.k)
            })
            .collect())
    }
}

pub fn knn_predict(model: &KnnModel, query: &NumericArray) -> Result<Vec<u8>> {
    model.predict(query)
}
