//! Dense, shape-checked arrays of `f64`.
//!
//! Data is stored flat in row-major order. Every dimension is strictly
//! positive and every value is finite; constructors reject anything else.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NumericArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(
                "NumericArray::new",
                format!("dimensions must be positive, got {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "NumericArray::new",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("NumericArray::new"));
        }
        Ok(Self { shape, data })
    }

    /// Builds an array whose values are known to be finite and whose length
    /// matches `shape`. Only used on results of internal arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "zeros: dimensions must be positive, got {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut a = Self::zeros(shape);
        a.data.fill(value);
        a
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Stacks equally long rows into a rank-2 array.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::shape("NumericArray::from_rows", "no rows"));
        };
        let width = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != width {
                return Err(Error::shape(
                    "NumericArray::from_rows",
                    format!("row {i} has {} values, expected {width}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || expected != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Self { shape, data: self.data })
    }

    /// Number of elements in one slice along the first axis.
    pub fn outer_stride(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// The `i`-th slice along the first axis (a row of a matrix).
    pub fn outer(&self, i: usize) -> &[f64] {
        let s = self.outer_stride();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn outer_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.outer_stride();
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NumericArray) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn check_same_shape(&self, other: &NumericArray, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Sum of elementwise products; shapes must agree.
    pub fn dot(&self, other: &NumericArray) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Copies the given outer slices into a new array (row gather).
    pub fn select_outer(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::shape("select_outer", "no indices"));
        }
        let s = self.outer_stride();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(Error::shape(
                    "select_outer",
                    format!("index {i} out of range for {} rows", self.shape[0]),
                ));
            }
            data.extend_from_slice(self.outer(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Self { shape, data })
    }
}

/// Gradients returned by a layer's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub d_input: NumericArray,
    pub d_params: BTreeMap<String, NumericArray>,
}

impl LayerGradients {
    pub fn input_only(d_input: NumericArray) -> Self {
        Self {
            d_input,
            d_params: BTreeMap::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&NumericArray> {
        self.d_params.get(name)
    }
}
