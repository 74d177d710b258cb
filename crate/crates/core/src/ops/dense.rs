//! Fully connected layer: `input [N, F] x weights [F, O] + bias [O]`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{LayerGradients, NumericArray};

fn check(input: &NumericArray, weights: &NumericArray, bias: &NumericArray) -> Result<(usize, usize, usize)> {
    if input.rank() != 2 || weights.rank() != 2 {
        return Err(Error::shape(
            "dense",
            format!(
                "expected input [N, F] and weights [F, O], got {:?} and {:?}",
                input.shape(),
                weights.shape()
            ),
        ));
    }
    let (n, f) = (input.dim(0), input.dim(1));
    if weights.dim(0) != f {
        return Err(Error::shape(
            "dense",
            format!("input features {f} != weight rows {}", weights.dim(0)),
        ));
    }
    let o = weights.dim(1);
    if bias.shape() != [o] {
        return Err(Error::shape("dense", format!("bias {:?} != [{o}]", bias.shape())));
    }
    Ok((n, f, o))
}

pub fn dense(input: &NumericArray, weights: &NumericArray, bias: &NumericArray) -> Result<NumericArray> {
    let (n, _, o) = check(input, weights, bias)?;
    let w = weights.data();
    let mut out = Vec::with_capacity(n * o);
    for s in 0..n {
        let mut row = bias.data().to_vec();
        for (i, &xv) in input.outer(s).iter().enumerate() {
            for (r, &wv) in row.iter_mut().zip(&w[i * o..(i + 1) * o]) {
                *r += xv * wv;
            }
        }
        out.extend_from_slice(&row);
    }
    let out = NumericArray::from_parts(vec![n, o], out);
    out.ensure_finite("dense")?;
    Ok(out)
}

/// `d_params` holds `"weights"` and `"bias"`.
pub fn dense_backward(input: &NumericArray, weights: &NumericArray, d_output: &NumericArray) -> Result<LayerGradients> {
    let (n, f, o) = check(input, weights, &NumericArray::zeros(&[weights.dim(1)]))?;
    if d_output.shape() != [n, o] {
        return Err(Error::shape(
            "dense_backward",
            format!("d_output {:?} != [{n}, {o}]", d_output.shape()),
        ));
    }
    let w = weights.data();
    let mut dx = vec![0.0; n * f];
    let mut dw = vec![0.0; f * o];
    let mut db = vec![0.0; o];
    for s in 0..n {
        let g = d_output.outer(s);
        let x = input.outer(s);
        for (d, &gv) in db.iter_mut().zip(g) {
            *d += gv;
        }
        for i in 0..f {
            let wrow = &w[i * o..(i + 1) * o];
            dx[s * f + i] = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
            for (d, &gv) in dw[i * o..(i + 1) * o].iter_mut().zip(g) {
                *d += x[i] * gv;
            }
        }
    }
    let mut d_params = BTreeMap::new();
    d_params.insert("weights".to_owned(), NumericArray::from_parts(vec![f, o], dw));
    d_params.insert("bias".to_owned(), NumericArray::from_parts(vec![o], db));
    Ok(LayerGradients {
        d_input: NumericArray::from_parts(vec![n, f], dx),
        d_params,
    })
}
