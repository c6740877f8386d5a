use super::Activation;
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

/// Applies the activation to the real and imaginary parts separately.
pub fn complex_activation<T: Scalar>(input: &ComplexTensor<T>, kind: Activation) -> ComplexTensor<T> {
    match kind {
        Activation::CRelu => {
            let mut out = input.clone();
            let (r, i) = out.parts_mut();
            r.iter_mut().chain(i.iter_mut()).for_each(|v| *v = v.max(T::zero()));
            out
        }
    }
}

pub(crate) fn complex_activation_backward<T: Scalar>(
    input: &ComplexTensor<T>,
    kind: Activation,
    grad_out: &ComplexTensor<T>,
) -> ComplexTensor<T> {
    match kind {
        Activation::CRelu => {
            let mut g = grad_out.clone();
            let gate = |g: &mut [T], x: &[T]| {
                g.iter_mut().zip(x).for_each(|(g, &x)| {
                    if x <= T::zero() {
                        *g = T::zero();
                    }
                })
            };
            let (gr, gi) = g.parts_mut();
            gate(gr, input.real());
            gate(gi, input.imag());
            g
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crelu_examples() {
        let x = ComplexTensor::from_parts(vec![-1.0, 3.0], vec![2.0, -4.0], &[2]).unwrap();
        let y = complex_activation(&x, Activation::CRelu);
        assert_eq!(y.get(0), (0.0, 2.0));
        assert_eq!(y.get(1), (3.0, 0.0));
        let pos = ComplexTensor::from_parts(vec![0.0, 1.5], vec![2.0, 0.25], &[2]).unwrap();
        assert_eq!(complex_activation(&pos, Activation::CRelu), pos);
    }
}
