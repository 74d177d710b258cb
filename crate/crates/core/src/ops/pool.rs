//! Non-overlapping 1-D max pooling.
//!
//! Pools along the last axis with stride equal to the window. Any trailing
//! remainder shorter than the window is dropped. Leading axes are treated as
//! independent rows, so both `[C, L]` and `[N, C, L]` inputs are accepted.

use crate::error::{Error, Result};
use crate::tensor::NumericArray;

/// Where each pooled value came from, for routing gradients back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    /// Flat input index of the winner of each output cell.
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn pooled_len(len: usize, window: usize) -> usize {
    len / window
}

pub fn maxpool1d(input: &NumericArray, window: usize) -> Result<(NumericArray, PoolIndices)> {
    if input.rank() < 2 {
        return Err(Error::shape(
            "maxpool1d",
            format!("input must be at least [C, L], got {:?}", input.shape()),
        ));
    }
    let len = *input.shape().last().unwrap();
    if window == 0 || window > len {
        return Err(Error::shape(
            "maxpool1d",
            format!("window W={window} must be in 1..=L={len}"),
        ));
    }
    let out_len = pooled_len(len, window);
    let rows = input.len() / len;
    let mut out = Vec::with_capacity(rows * out_len);
    let mut argmax = Vec::with_capacity(rows * out_len);
    let x = input.data();
    for r in 0..rows {
        let base = r * len;
        for j in 0..out_len {
            let start = base + j * window;
            let mut best = start;
            for i in start + 1..start + window {
                // strict comparison keeps the first occurrence on ties
                if x[i] > x[best] {
                    best = i;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = out_len;
    Ok((
        NumericArray::from_parts(shape, out),
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the argmax position of its window.
pub fn maxpool1d_backward(indices: &PoolIndices, d_output: &NumericArray) -> Result<NumericArray> {
    if d_output.len() != indices.argmax.len() {
        return Err(Error::shape(
            "maxpool1d_backward",
            format!(
                "d_output has {} values, pooling produced {}",
                d_output.len(),
                indices.argmax.len()
            ),
        ));
    }
    let mut dx = vec![0.0; indices.input_shape.iter().product()];
    for (&src, &g) in indices.argmax.iter().zip(d_output.data()) {
        dx[src] += g;
    }
    Ok(NumericArray::from_parts(indices.input_shape.clone(), dx))
}
