use super::PoolReduction;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

struct PoolDims {
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
}

impl PoolDims {
    fn new(shape: &[usize], window: usize) -> Result<(Self, Vec<usize>)> {
        let [n, c, h, w] = match *shape {
            [n, c, h, w] => [n, c, h, w],
            _ => return Err(Error::Shape(format!("pool input must be NCHW, got {shape:?}"))),
        };
        if window == 0 {
            return Err(Error::InvalidArgument("pool window must be >= 1".into()));
        }
        if h % window != 0 || w % window != 0 {
            return Err(Error::Shape(format!(
                "pool window {window} does not divide {h}x{w}"
            )));
        }
        let dims = PoolDims { planes: n * c, h, w, window };
        Ok((dims, vec![n, c, h / window, w / window]))
    }

    /// Calls `f(out_index, input_indices_of_window)` for every output element.
    fn for_each_window(&self, mut f: impl FnMut(usize, &mut dyn Iterator<Item = usize>)) {
        let (oh, ow, win) = (self.h / self.window, self.w / self.window, self.window);
        for p in 0..self.planes {
            for y in 0..oh {
                for x in 0..ow {
                    let out_idx = (p * oh + y) * ow + x;
                    let base = p * self.h * self.w;
                    let w = self.w;
                    let mut it = (0..win).flat_map(move |i| {
                        (0..win).map(move |j| base + (y * win + i) * w + x * win + j)
                    });
                    f(out_idx, &mut it);
                }
            }
        }
    }
}

fn reduce_part<T: Scalar>(dims: &PoolDims, src: &[T], dst: &mut [T], reduction: PoolReduction) {
    let area = T::from_usize(dims.window * dims.window).unwrap();
    dims.for_each_window(|o, idx| {
        dst[o] = match reduction {
            PoolReduction::Avg => idx.map(|k| src[k]).sum::<T>() / area,
            PoolReduction::Max => idx.map(|k| src[k]).fold(T::neg_infinity(), T::max),
        };
    });
}

/// Non-overlapping pooling applied to the real and imaginary parts independently.
pub fn complex_pool<T: Scalar>(
    input: &ComplexTensor<T>,
    window: usize,
    reduction: PoolReduction,
) -> Result<ComplexTensor<T>> {
    let (dims, out_shape) = PoolDims::new(input.shape(), window)?;
    let mut out = ComplexTensor::zeros(&out_shape)?;
    let (or, oi) = out.parts_mut();
    reduce_part(&dims, input.real(), or, reduction);
    reduce_part(&dims, input.imag(), oi, reduction);
    Ok(out)
}

fn backward_part<T: Scalar>(dims: &PoolDims, src: &[T], grad_out: &[T], grad_in: &mut [T], reduction: PoolReduction) {
    let area = T::from_usize(dims.window * dims.window).unwrap();
    dims.for_each_window(|o, idx| match reduction {
        PoolReduction::Avg => idx.for_each(|k| grad_in[k] += grad_out[o] / area),
        PoolReduction::Max => {
            // first maximal element takes the gradient
            let mut best: Option<usize> = None;
            for k in idx {
                if best.is_none_or(|b| src[k] > src[b]) {
                    best = Some(k);
                }
            }
            grad_in[best.unwrap()] += grad_out[o];
        }
    });
}

pub(crate) fn complex_pool_backward<T: Scalar>(
    input: &ComplexTensor<T>,
    window: usize,
    reduction: PoolReduction,
    grad_out: &ComplexTensor<T>,
) -> Result<ComplexTensor<T>> {
    let (dims, _) = PoolDims::new(input.shape(), window)?;
    let mut grad = ComplexTensor::zeros(input.shape())?;
    let (gr, gi) = grad.parts_mut();
    backward_part(&dims, input.real(), grad_out.real(), gr, reduction);
    backward_part(&dims, input.imag(), grad_out.imag(), gi, reduction);
    Ok(grad)
}
