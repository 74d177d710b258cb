//! Central finite differences, used as an independent oracle for the
//! hand-written backward passes.

use crate::tensor::NumericArray;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_difference_gradient<F>(mut f: F, x: &NumericArray, h: f64) -> NumericArray
where
    F: FnMut(&NumericArray) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    NumericArray::from_parts(x.shape().to_vec(), grad)
}

/// Agreement rule for gradient checks: relative error within `rel`, or
/// absolute error within `abs` for coordinates near zero.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-4, abs: 1e-7 }
    }
}

impl Tolerance {
    pub fn accepts(&self, analytic: f64, numeric: f64) -> bool {
        let diff = (analytic - numeric).abs();
        diff <= self.abs || diff / analytic.abs().max(numeric.abs()) <= self.rel
    }

    /// First coordinate that violates the tolerance, as `(index, analytic, numeric)`.
    pub fn first_violation(&self, analytic: &NumericArray, numeric: &NumericArray) -> Option<(usize, f64, f64)> {
        assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
        analytic
            .data()
            .iter()
            .zip(numeric.data())
            .enumerate()
            .find(|(_, (&a, &n))| !self.accepts(a, n))
            .map(|(i, (&a, &n))| (i, a, n))
    }
}
