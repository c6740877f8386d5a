use super::{linear_backward, linear_forward, ComplexWeights, ConvGeometry, LinearGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

/// Views a dense layer as a 1x1 convolution over a `(batch, features, 1, 1)` map.
fn geometry(input_shape: &[usize], kernel_shape: &[usize]) -> Result<(ConvGeometry, bool)> {
    let (batch, features, unbatched) = match input_shape {
        [f] => (1, *f, true),
        [n, rest @ ..] => (*n, rest.iter().product(), false),
        [] => return Err(Error::Shape("dense input has rank 0".into())),
    };
    let [out, fan_in] = match *kernel_shape {
        [o, i] => [o, i],
        _ => {
            return Err(Error::Shape(format!(
                "dense kernel must be (out, in), got {kernel_shape:?}"
            )))
        }
    };
    if fan_in != features {
        return Err(Error::Shape(format!(
            "dense layer expects {fan_in} inputs, got {features}"
        )));
    }
    let geom = ConvGeometry::new(&[batch, features, 1, 1], &[out, fan_in, 1, 1], 1)?;
    Ok((geom, unbatched))
}

/// Complex matrix-vector product for each sample.
///
/// A rank-1 input is a single sample; otherwise axis 0 is the batch and the
/// remaining axes are flattened into the feature vector.
pub fn complex_dense<T: Scalar>(
    input: &ComplexTensor<T>,
    weights: &ComplexWeights<T>,
) -> Result<ComplexTensor<T>> {
    let (geom, unbatched) = geometry(input.shape(), weights.kernel.shape())?;
    let view = input.clone().reshape(&[geom.batch, geom.in_c, 1, 1])?;
    let out = linear_forward(&geom, &view, weights)?;
    if unbatched {
        out.reshape(&[geom.out_c])
    } else {
        out.reshape(&[geom.batch, geom.out_c])
    }
}

pub(crate) fn complex_dense_backward<T: Scalar>(
    input: &ComplexTensor<T>,
    weights: &ComplexWeights<T>,
    grad_out: &ComplexTensor<T>,
    need_input: bool,
) -> Result<LinearGrads<T>> {
    let (geom, _) = geometry(input.shape(), weights.kernel.shape())?;
    let view = input.clone().reshape(&[geom.batch, geom.in_c, 1, 1])?;
    let g = grad_out.clone().reshape(&[geom.batch, geom.out_c, 1, 1])?;
    let mut grads = linear_backward(&geom, &view, weights, &g, need_input)?;
    grads.input = grads.input.reshape(input.shape())?;
    Ok(grads)
}
