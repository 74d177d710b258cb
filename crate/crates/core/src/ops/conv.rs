//! Valid (unpadded), stride-1 1-D convolution.
//!
//! Implemented as cross-correlation, without flipping the kernel:
//!
//! `out[o][t] = bias[o] + sum_{c,k} input[c][t + k] * kernels[o][c][k]`
//!
//! Layout: input `[C_in, L]`, kernels `[C_out, C_in, K]`, bias `[C_out]`,
//! output `[C_out, L - K + 1]`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{LayerGradients, NumericArray};

/// Geometry of one convolution, shared by the forward and backward kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub k: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len - self.k + 1
    }
}

fn check_dims(input: &NumericArray, kernels: &NumericArray, bias: &NumericArray) -> Result<ConvDims> {
    if input.rank() != 2 {
        return Err(Error::shape(
            "conv1d",
            format!("input must be [C_in, L], got {:?}", input.shape()),
        ));
    }
    if kernels.rank() != 3 {
        return Err(Error::shape(
            "conv1d",
            format!("kernels must be [C_out, C_in, K], got {:?}", kernels.shape()),
        ));
    }
    let (c_in, len) = (input.dim(0), input.dim(1));
    let (c_out, kc, k) = (kernels.dim(0), kernels.dim(1), kernels.dim(2));
    if kc != c_in {
        return Err(Error::shape(
            "conv1d",
            format!("kernel channels {kc} != input channels {c_in}"),
        ));
    }
    if len < k {
        return Err(Error::shape(
            "conv1d",
            format!("input length L={len} is shorter than kernel K={k}"),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape(
            "conv1d",
            format!("bias shape {:?} != [{c_out}]", bias.shape()),
        ));
    }
    Ok(ConvDims { c_in, c_out, len, k })
}

/// Forward kernel on raw slices. `out` has `c_out * out_len` entries and is overwritten.
pub(crate) fn forward_into(d: ConvDims, x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let ol = d.out_len();
    for o in 0..d.c_out {
        let row = &mut out[o * ol..(o + 1) * ol];
        row.fill(b[o]);
        for c in 0..d.c_in {
            let xc = &x[c * d.len..(c + 1) * d.len];
            let wk = &w[(o * d.c_in + c) * d.k..(o * d.c_in + c + 1) * d.k];
            for (k, &wv) in wk.iter().enumerate() {
                for (r, &xv) in row.iter_mut().zip(&xc[k..k + ol]) {
                    *r += wv * xv;
                }
            }
        }
    }
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Backward kernel on raw slices. Accumulates (`+=`) into `dw` and `db`;
/// when `dx` is given it is accumulated into as well.
pub(crate) fn backward_accumulate(
    d: ConvDims,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let ol = d.out_len();
    for o in 0..d.c_out {
        let g = &dout[o * ol..(o + 1) * ol];
        db[o] += g.iter().sum::<f64>();
        for c in 0..d.c_in {
            let xc = &x[c * d.len..(c + 1) * d.len];
            let base = (o * d.c_in + c) * d.k;
            for k in 0..d.k {
                dw[base + k] += dot(g, &xc[k..k + ol]);
            }
        }
    }
    if let Some(dx) = dx {
        for o in 0..d.c_out {
            let g = &dout[o * ol..(o + 1) * ol];
            for c in 0..d.c_in {
                let dxc = &mut dx[c * d.len..(c + 1) * d.len];
                let wk = &w[(o * d.c_in + c) * d.k..(o * d.c_in + c + 1) * d.k];
                for (k, &wv) in wk.iter().enumerate() {
                    for (dst, &gv) in dxc[k..k + ol].iter_mut().zip(g) {
                        *dst += wv * gv;
                    }
                }
            }
        }
    }
}

pub fn conv1d(input: &NumericArray, kernels: &NumericArray, bias: &NumericArray) -> Result<NumericArray> {
    let d = check_dims(input, kernels, bias)?;
    let mut out = vec![0.0; d.c_out * d.out_len()];
    forward_into(d, input.data(), kernels.data(), bias.data(), &mut out);
    let out = NumericArray::from_parts(vec![d.c_out, d.out_len()], out);
    out.ensure_finite("conv1d")?;
    Ok(out)
}

/// Gradients of `conv1d` given the upstream gradient `d_output`.
///
/// `d_params` holds `"kernels"` and `"bias"`.
pub fn conv1d_backward(
    input: &NumericArray,
    kernels: &NumericArray,
    d_output: &NumericArray,
) -> Result<LayerGradients> {
    let bias = NumericArray::zeros(&[kernels.dim(0)]);
    let d = check_dims(input, kernels, &bias)?;
    if d_output.shape() != [d.c_out, d.out_len()] {
        return Err(Error::shape(
            "conv1d_backward",
            format!("d_output {:?} != [{}, {}]", d_output.shape(), d.c_out, d.out_len()),
        ));
    }
    let mut dx = vec![0.0; input.len()];
    let mut dw = vec![0.0; kernels.len()];
    let mut db = vec![0.0; d.c_out];
    backward_accumulate(
        d,
        input.data(),
        kernels.data(),
        d_output.data(),
        Some(&mut dx),
        &mut dw,
        &mut db,
    );
    let mut d_params = BTreeMap::new();
    d_params.insert(
        "kernels".to_owned(),
        NumericArray::from_parts(kernels.shape().to_vec(), dw),
    );
    d_params.insert("bias".to_owned(), NumericArray::from_parts(vec![d.c_out], db));
    let grads = LayerGradients {
        d_input: NumericArray::from_parts(input.shape().to_vec(), dx),
        d_params,
    };
    grads.d_input.ensure_finite("conv1d_backward")?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], data: &[f64]) -> NumericArray {
        NumericArray::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sliding_dot_product() {
        let x = arr(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let w = arr(&[1, 1, 3], &[1.0, 0.0, -1.0]);
        let b = arr(&[1], &[0.0]);
        let y = conv1d(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert_eq!(y.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let x = arr(&[2, 5], &[1.0, -2.0, 3.0, 0.5, 9.0, 4.0, 4.0, 1.0, 7.0, -3.0]);
        let w = NumericArray::zeros(&[3, 2, 2]);
        let b = NumericArray::zeros(&[3]);
        let y = conv1d(&x, &w, &b).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_band_length() {
        let x = NumericArray::filled(&[1, 2151], 0.5);
        let w = NumericArray::filled(&[2, 1, 7], 0.1);
        let y = conv1d(&x, &w, &NumericArray::zeros(&[2])).unwrap();
        assert_eq!(y.shape(), &[2, 2145]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = NumericArray::zeros(&[2, 4]);
        let short = conv1d(&x, &NumericArray::zeros(&[1, 2, 5]), &NumericArray::zeros(&[1]));
        let msg = short.unwrap_err().to_string();
        assert!(msg.contains("L=4") && msg.contains("K=5"), "{msg}");
        let chans = conv1d(&x, &NumericArray::zeros(&[1, 3, 2]), &NumericArray::zeros(&[1]));
        assert!(chans.unwrap_err().to_string().contains("channels"));
        let bias = conv1d(&x, &NumericArray::zeros(&[1, 2, 2]), &NumericArray::zeros(&[2]));
        assert!(bias.is_err());
    }

    #[test]
    fn backward_by_hand() {
        // y[t] = x[t] - x[t+2]; with upstream [1, 1]: dx = [1, 1, -1, -1].
        let x = arr(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let w = arr(&[1, 1, 3], &[1.0, 0.0, -1.0]);
        let g = conv1d_backward(&x, &w, &arr(&[1, 2], &[1.0, 1.0])).unwrap();
        assert_eq!(g.d_input.data(), &[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(g.param("kernels").unwrap().data(), &[3.0, 5.0, 7.0]);
        assert_eq!(g.param("bias").unwrap().data(), &[2.0]);
    }
}
