//! Dense complex tensors stored as two real arrays.
//!
//! A [`ComplexTensor`] keeps its real and imaginary parts in separate row-major
//! buffers of identical shape. Every complex operation in the crate is written
//! in terms of real operations on those two buffers, which is also what makes
//! part-wise dropout a simple slice operation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor rank must be at least 1".into()));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::Shape(format!("extent {pos} of {shape:?} is zero")));
    }
    Ok(shape.iter().product())
}

/// Real-valued dense tensor, used for magnitudes and probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor<T> {
    data: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Scalar> RealTensor<T> {
    pub fn new(data: Vec<T>, shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if data.len() != n {
            return Err(Error::Shape(format!(
                "{} elements do not fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

/// Complex tensor with split real/imaginary storage and row-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    real: Vec<T>,
    imag: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Scalar> ComplexTensor<T> {
    /// All-zero tensor. Every extent must be at least one.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            real: vec![T::zero(); n],
            imag: vec![T::zero(); n],
            shape: shape.to_vec(),
        })
    }

    pub fn from_parts(real: Vec<T>, imag: Vec<T>, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if real.len() != n || imag.len() != n {
            return Err(Error::Shape(format!(
                "parts of length {}/{} do not fill shape {shape:?}",
                real.len(),
                imag.len()
            )));
        }
        Ok(Self {
            real,
            imag,
            shape: shape.to_vec(),
        })
    }

    /// Tensor with the given real part and a zero imaginary part.
    pub fn from_real(real: Vec<T>, shape: &[usize]) -> Result<Self> {
        let imag = vec![T::zero(); real.len()];
        Self::from_parts(real, imag, shape)
    }

    /// Single complex value with shape `[1]`.
    pub fn scalar(re: T, im: T) -> Self {
        Self {
            real: vec![re],
            imag: vec![im],
            shape: vec![1],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }

    pub fn real(&self) -> &[T] {
        &self.real
    }

    pub fn imag(&self) -> &[T] {
        &self.imag
    }

    pub fn real_mut(&mut self) -> &mut [T] {
        &mut self.real
    }

    pub fn imag_mut(&mut self) -> &mut [T] {
        &mut self.imag
    }

    pub fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.real, &mut self.imag)
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>, Vec<usize>) {
        (self.real, self.imag, self.shape)
    }

    /// `(re, im)` at flat row-major index `k`.
    pub fn get(&self, k: usize) -> (T, T) {
        (self.real[k], self.imag[k])
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&ComplexTensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let mut real = Vec::with_capacity(first.len() * items.len());
        let mut imag = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    first.shape, t.shape
                )));
            }
            real.extend_from_slice(&t.real);
            imag.extend_from_slice(&t.imag);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::from_parts(real, imag, &shape)
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(T, T, T, T) -> (T, T)) -> Result<Self> {
        self.check_same_shape(other, op)?;
        let mut real = Vec::with_capacity(self.len());
        let mut imag = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let (re, im) = f(self.real[k], self.imag[k], other.real[k], other.imag[k]);
            real.push(re);
            imag.push(im);
        }
        Ok(Self {
            real,
            imag,
            shape: self.shape.clone(),
        })
    }

    /// Elementwise complex product `(ac - bd) + (ad + bc)i`.
    pub fn cmul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "cmul", |a, b, c, d| (a * c - b * d, a * d + b * c))
    }

    pub fn cadd(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "cadd", |a, b, c, d| (a + c, b + d))
    }

    pub fn csub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "csub", |a, b, c, d| (a - c, b - d))
    }

    /// Multiply both parts by a real factor.
    pub fn scale(&self, s: T) -> Self {
        Self {
            real: self.real.iter().map(|&v| v * s).collect(),
            imag: self.imag.iter().map(|&v| v * s).collect(),
            shape: self.shape.clone(),
        }
    }

    /// Elementwise modulus `sqrt(re^2 + im^2)`.
    pub fn magnitude(&self) -> RealTensor<T> {
        let data = self
            .real
            .iter()
            .zip(&self.imag)
            .map(|(&re, &im)| re.hypot(im))
            .collect();
        RealTensor {
            data,
            shape: self.shape.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.real.iter().chain(&self.imag).all(|v| v.is_finite())
    }

    /// Sum of squared moduli over all elements.
    pub fn energy(&self) -> T {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(&re, &im)| re * re + im * im)
            .sum()
    }

    /// Convert element type.
    pub fn cast<U: Scalar>(&self) -> ComplexTensor<U> {
        ComplexTensor {
            real: self.real.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            imag: self.imag.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            shape: self.shape.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type T64 = ComplexTensor<f64>;

    #[test]
    fn zeros_has_requested_shape() {
        let z = T64::zeros(&[2, 2]).unwrap();
        assert_eq!(z.real(), &[0.0; 4]);
        assert_eq!(z.imag(), &[0.0; 4]);
        assert_eq!(T64::zeros(&[1]).unwrap().len(), 1);
        let z = T64::zeros(&[3, 1, 2, 2]).unwrap();
        assert_eq!(z.len(), 12);
        assert!(z.real().iter().chain(z.imag()).all(|&v| v == 0.0));
    }

    #[test]
    fn zeros_rejects_bad_extents() {
        assert!(T64::zeros(&[]).is_err());
        assert!(T64::zeros(&[2, 0]).is_err());
    }

    #[test]
    fn scalar_product() {
        let p = T64::scalar(1.0, 2.0).cmul(&T64::scalar(3.0, 4.0)).unwrap();
        assert_eq!(p.get(0), (-5.0, 10.0));
        let p = T64::scalar(2.5, 0.0).cmul(&T64::scalar(-3.0, 0.0)).unwrap();
        assert_eq!(p.get(0), (-7.5, 0.0));
    }

    #[test]
    fn cmul_matches_per_element_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut draw = || (0..8).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        let (a, b, c, d) = (draw(), draw(), draw(), draw());
        let x = T64::from_parts(a.clone(), b.clone(), &[8]).unwrap();
        let y = T64::from_parts(c.clone(), d.clone(), &[8]).unwrap();
        let p = x.cmul(&y).unwrap();
        for k in 0..8 {
            assert_eq!(p.real()[k], a[k] * c[k] - b[k] * d[k]);
            assert_eq!(p.imag()[k], a[k] * d[k] + b[k] * c[k]);
        }
    }

    #[test]
    fn add_sub_scale() {
        let x = T64::from_parts(vec![1.0, -2.0], vec![0.5, 3.0], &[2]).unwrap();
        let z = T64::zeros(&[2]).unwrap();
        assert_eq!(x.cadd(&z).unwrap(), x);
        assert_eq!(x.csub(&x).unwrap(), z);
        assert_eq!(T64::scalar(1.0, 1.0).scale(2.0).get(0), (2.0, 2.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = T64::zeros(&[2]).unwrap();
        let b = T64::zeros(&[3]).unwrap();
        assert!(matches!(a.cmul(&b), Err(Error::Shape(_))));
        assert!(a.cadd(&b).is_err());
        assert!(a.csub(&b).is_err());
    }

    #[test]
    fn magnitude_examples() {
        let x = T64::from_parts(vec![3.0, 0.0, -1.0], vec![4.0, 0.0, 0.0], &[3]).unwrap();
        assert_eq!(x.magnitude().data(), &[5.0, 0.0, 1.0]);
    }

    #[test]
    fn stack_and_reshape() {
        let a = T64::scalar(1.0, 2.0);
        let b = T64::scalar(3.0, 4.0);
        let s = T64::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 1]);
        assert_eq!(s.real(), &[1.0, 3.0]);
        assert!(s.clone().reshape(&[3]).is_err());
        assert_eq!(s.reshape(&[2]).unwrap().shape(), &[2]);
    }

    fn tensor(n: usize) -> impl Strategy<Value = T64> {
        (
            proptest::collection::vec(-10.0f64..10.0, n),
            proptest::collection::vec(-10.0f64..10.0, n),
        )
            .prop_map(move |(r, i)| T64::from_parts(r, i, &[n]).unwrap())
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    fn all_close(x: &T64, y: &T64, rel: f64) -> bool {
        x.real().iter().zip(y.real()).all(|(&a, &b)| close(a, b, rel))
            && x.imag().iter().zip(y.imag()).all(|(&a, &b)| close(a, b, rel))
    }

    proptest! {
        #[test]
        fn cmul_commutes_and_associates((a, b, c) in (tensor(6), tensor(6), tensor(6))) {
            prop_assert!(all_close(&a.cmul(&b).unwrap(), &b.cmul(&a).unwrap(), 1e-6));
            let left = a.cmul(&b).unwrap().cmul(&c).unwrap();
            let right = a.cmul(&b.cmul(&c).unwrap()).unwrap();
            prop_assert!(all_close(&left, &right, 1e-6));
        }

        #[test]
        fn cmul_distributes((a, b, c) in (tensor(5), tensor(5), tensor(5))) {
            let left = a.cmul(&b.cadd(&c).unwrap()).unwrap();
            let right = a.cmul(&b).unwrap().cadd(&a.cmul(&c).unwrap()).unwrap();
            prop_assert!(all_close(&left, &right, 1e-6));
        }

        #[test]
        fn magnitude_is_multiplicative((a, b) in (tensor(7), tensor(7))) {
            let lhs = a.cmul(&b).unwrap().magnitude();
            let (ma, mb) = (a.magnitude(), b.magnitude());
            for k in 0..7 {
                prop_assert!(close(lhs.data()[k], ma.data()[k] * mb.data()[k], 1e-5));
            }
        }
    }
}
