use crate::error::{Error, Result};
use crate::tensor::NumericArray;

pub fn relu(input: &NumericArray) -> NumericArray {
    input.map(|v| v.max(0.0))
}

/// Passes the upstream gradient where `input > 0`; zero elsewhere, including at 0.
pub fn relu_backward(input: &NumericArray, d_output: &NumericArray) -> Result<NumericArray> {
    if input.shape() != d_output.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?} vs {:?}", input.shape(), d_output.shape()),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(d_output.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(NumericArray::from_parts(input.shape().to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_and_mask() {
        let x = NumericArray::from_vec(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = NumericArray::from_vec(vec![-3.0, -0.1]).unwrap();
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);

        let x = NumericArray::from_vec(vec![-1.0, 2.0]).unwrap();
        let up = NumericArray::from_vec(vec![5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 5.0]);
        let at_zero = NumericArray::from_vec(vec![0.0]).unwrap();
        let g = relu_backward(&at_zero, &NumericArray::from_vec(vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }
}
