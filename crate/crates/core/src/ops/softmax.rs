use crate::error::{Error, Result};
use crate::tensor::NumericArray;

/// Row-wise softmax of `[N, C]` logits, `C >= 2`, with max subtraction.
///
/// The backward pass is fused with the loss; see [`crate::loss::csbl_logit_grad`].
pub fn softmax(logits: &NumericArray) -> Result<NumericArray> {
    if logits.rank() != 2 || logits.dim(1) < 2 {
        return Err(Error::shape(
            "softmax",
            format!("logits must be [N, C] with C >= 2, got {:?}", logits.shape()),
        ));
    }
    logits.ensure_finite("softmax")?;
    let c = logits.dim(1);
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - max).exp()));
        let total: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= total);
    }
    Ok(NumericArray::from_parts(logits.shape().to_vec(), out))
}
