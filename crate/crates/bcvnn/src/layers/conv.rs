use super::{linear_backward, linear_forward, ComplexWeights, ConvGeometry, LinearGrads};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

/// Valid-padding complex convolution over an NCHW batch.
///
/// `out.real = W_R*A_R - W_I*A_I + b_R`, `out.imag = W_R*A_I + W_I*A_R + b_I`.
pub fn complex_conv2d<T: Scalar>(
    input: &ComplexTensor<T>,
    weights: &ComplexWeights<T>,
    stride: usize,
) -> Result<ComplexTensor<T>> {
    let geom = ConvGeometry::new(input.shape(), weights.kernel.shape(), stride)?;
    linear_forward(&geom, input, weights)
}

pub(crate) fn complex_conv2d_backward<T: Scalar>(
    input: &ComplexTensor<T>,
    weights: &ComplexWeights<T>,
    stride: usize,
    grad_out: &ComplexTensor<T>,
    need_input: bool,
) -> Result<LinearGrads<T>> {
    let geom = ConvGeometry::new(input.shape(), weights.kernel.shape(), stride)?;
    linear_backward(&geom, input, weights, grad_out, need_input)
}
