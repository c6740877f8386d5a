//! Complex-valued layer kinds and their forward/backward kernels.
//!
//! Layers fall into three operational groups: linear layers (convolution and
//! dense), which need the four real sub-products `W_R*A_R`, `W_R*A_I`,
//! `W_I*A_R`, `W_I*A_I`; elementwise layers (pooling and activation), which
//! apply a real function to each part separately; and Bayesian dropout layers.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod pool;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

pub use activation::complex_activation;
pub use conv::complex_conv2d;
pub use dense::complex_dense;
pub use dropout::{bernoulli_channel_dropout, channel_layout, DropoutMask};
pub use pool::complex_pool;

/// Which part(s) of a complex activation a Bayesian layer masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartMode {
    #[serde(rename = "R")]
    Real,
    #[serde(rename = "I")]
    Imag,
    #[serde(rename = "B")]
    Both,
}

impl PartMode {
    pub const ALL: [PartMode; 3] = [PartMode::Real, PartMode::Imag, PartMode::Both];

    pub fn masks_real(self) -> bool {
        matches!(self, PartMode::Real | PartMode::Both)
    }

    pub fn masks_imag(self) -> bool {
        matches!(self, PartMode::Imag | PartMode::Both)
    }

    /// Number of masks instantiated by a layer in this mode.
    pub fn mask_count(self) -> usize {
        match self {
            PartMode::Both => 2,
            _ => 1,
        }
    }

    pub fn letter(self) -> char {
        match self {
            PartMode::Real => 'R',
            PartMode::Imag => 'I',
            PartMode::Both => 'B',
        }
    }
}

impl fmt::Display for PartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for PartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(PartMode::Real),
            "I" | "i" => Ok(PartMode::Imag),
            "B" | "b" => Ok(PartMode::Both),
            _ => Err(Error::InvalidArgument(format!("unknown part mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolReduction {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// ReLU applied to the real and imaginary parts independently.
    #[default]
    #[serde(rename = "crelu")]
    CRelu,
}

/// One layer of a network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    #[serde(rename = "conv2d")]
    ComplexConv2D {
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default = "one")]
        stride: usize,
    },
    #[serde(rename = "dense")]
    ComplexDense { out_features: usize },
    #[serde(rename = "pool")]
    ComplexPool {
        window: usize,
        reduction: PoolReduction,
    },
    #[serde(rename = "activation")]
    ComplexActivation {
        #[serde(default)]
        activation: Activation,
    },
    #[serde(rename = "dropout")]
    BernoulliDropout { keep_rate: f64, part_mode: PartMode },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn is_dropout(&self) -> bool {
        matches!(self, LayerSpec::BernoulliDropout { .. })
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, LayerSpec::ComplexConv2D { .. } | LayerSpec::ComplexDense { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::ComplexConv2D { .. } => "conv2d",
            LayerSpec::ComplexDense { .. } => "dense",
            LayerSpec::ComplexPool { .. } => "pool",
            LayerSpec::ComplexActivation { .. } => "activation",
            LayerSpec::BernoulliDropout { .. } => "dropout",
        }
    }

    /// Parameter-level validity independent of the input shape.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(msg));
        match *self {
            LayerSpec::ComplexConv2D { out_channels, kernel, stride } => {
                if out_channels == 0 || kernel.contains(&0) || stride == 0 {
                    return bad(format!(
                        "conv2d needs positive out_channels, kernel and stride (got {out_channels}, {kernel:?}, {stride})"
                    ));
                }
            }
            LayerSpec::ComplexDense { out_features } => {
                if out_features == 0 {
                    return bad("dense needs out_features >= 1".into());
                }
            }
            LayerSpec::ComplexPool { window, .. } => {
                if window == 0 {
                    return bad("pool window must be >= 1".into());
                }
            }
            LayerSpec::ComplexActivation { .. } => {}
            LayerSpec::BernoulliDropout { keep_rate, .. } => check_keep_rate(keep_rate)?,
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape (no batch axis).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        match *self {
            LayerSpec::ComplexConv2D { out_channels, kernel, stride } => {
                let [_, h, w] = spatial(input, "conv2d")?;
                if h < kernel[0] || w < kernel[1] {
                    return Err(Error::Shape(format!(
                        "conv2d kernel {kernel:?} larger than input {input:?}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel[0]) / stride + 1,
                    (w - kernel[1]) / stride + 1,
                ])
            }
            LayerSpec::ComplexDense { out_features } => Ok(vec![out_features]),
            LayerSpec::ComplexPool { window, .. } => {
                let [c, h, w] = spatial(input, "pool")?;
                if h % window != 0 || w % window != 0 {
                    return Err(Error::Shape(format!(
                        "pool window {window} does not divide {h}x{w}"
                    )));
                }
                Ok(vec![c, h / window, w / window])
            }
            LayerSpec::ComplexActivation { .. } | LayerSpec::BernoulliDropout { .. } => {
                Ok(input.to_vec())
            }
        }
    }

    /// Kernel and bias shapes for weighted layers given the per-sample input shape.
    pub fn weight_shapes(&self, input: &[usize]) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
        match *self {
            LayerSpec::ComplexConv2D { out_channels, kernel, .. } => {
                let [c, _, _] = spatial(input, "conv2d")?;
                Ok(Some((vec![out_channels, c, kernel[0], kernel[1]], vec![out_channels])))
            }
            LayerSpec::ComplexDense { out_features } => {
                let fan_in = input.iter().product();
                Ok(Some((vec![out_features, fan_in], vec![out_features])))
            }
            _ => Ok(None),
        }
    }
}

pub(crate) fn check_keep_rate(keep_rate: f64) -> Result<()> {
    if !(keep_rate > 0.0 && keep_rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep_rate must lie in (0, 1], got {keep_rate}"
        )));
    }
    Ok(())
}

fn spatial(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Shape(format!(
            "{what} expects a (C, H, W) feature map, got {shape:?}"
        ))),
    }
}

/// Trained parameters of one linear layer: `M_real + j M_imag` plus an optional bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexWeights<T> {
    pub kernel: ComplexTensor<T>,
    pub bias: Option<ComplexTensor<T>>,
}

impl<T: Scalar> ComplexWeights<T> {
    pub fn new(kernel: ComplexTensor<T>, bias: Option<ComplexTensor<T>>) -> Result<Self> {
        if let Some(b) = &bias {
            let out = kernel.shape()[0];
            if b.len() != out {
                return Err(Error::Shape(format!(
                    "bias of length {} for {out} output channels",
                    b.len()
                )));
            }
        }
        Ok(Self { kernel, bias })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kernel: ComplexTensor::zeros(self.kernel.shape()).unwrap(),
            bias: self.bias.as_ref().map(|b| ComplexTensor::zeros(b.shape()).unwrap()),
        }
    }

    /// `||M_real||^2 + ||M_imag||^2` of the kernel.
    pub fn kernel_energy(&self) -> T {
        self.kernel.energy()
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    /// Every real parameter slice, kernel parts first.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut v = vec![self.kernel.real(), self.kernel.imag()];
        if let Some(b) = &self.bias {
            v.push(b.real());
            v.push(b.imag());
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let (kr, ki) = self.kernel.parts_mut();
        let mut v = vec![kr, ki];
        if let Some(b) = &mut self.bias {
            let (br, bi) = b.parts_mut();
            v.push(br);
            v.push(bi);
        }
        v
    }
}

/// Geometry of a valid-padding convolution over a batch.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize) -> Result<Self> {
        let [batch, in_c, in_h, in_w] = match *input {
            [n, c, h, w] => [n, c, h, w],
            _ => {
                return Err(Error::Shape(format!(
                    "convolution input must be NCHW, got {input:?}"
                )))
            }
        };
        let [out_c, k_c, k_h, k_w] = match *kernel {
            [o, c, h, w] => [o, c, h, w],
            _ => return Err(Error::Shape(format!("kernel must be OCHW, got {kernel:?}"))),
        };
        if k_c != in_c {
            return Err(Error::Shape(format!(
                "kernel expects {k_c} input channels, input has {in_c}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        if in_h < k_h || in_w < k_w {
            return Err(Error::Shape(format!(
                "kernel {k_h}x{k_w} larger than input {in_h}x{in_w}"
            )));
        }
        Ok(Self {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            k_h,
            k_w,
            stride,
            out_h: (in_h - k_h) / stride + 1,
            out_w: (in_w - k_w) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.batch, self.out_c, self.out_h, self.out_w]
    }

    /// 1x1 kernel over 1x1 planes: a plain matrix product.
    fn is_dense(&self) -> bool {
        self.in_h == 1 && self.in_w == 1 && self.k_h == 1 && self.k_w == 1
    }

    /// `out += sign * conv(kernel, input)`.
    pub fn forward_acc<T: Scalar>(&self, out: &mut [T], input: &[T], kernel: &[T], sign: T) {
        if self.is_dense() {
            for (x, y) in input.chunks(self.in_c).zip(out.chunks_mut(self.out_c)) {
                for (d, k) in y.iter_mut().zip(kernel.chunks(self.in_c)) {
                    *d += sign * k.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
                }
            }
            return;
        }
        let (ohw, ihw, khw) = (self.out_h * self.out_w, self.in_h * self.in_w, self.k_h * self.k_w);
        for n in 0..self.batch {
            for o in 0..self.out_c {
                let out_plane = &mut out[(n * self.out_c + o) * ohw..][..ohw];
                for c in 0..self.in_c {
                    let in_plane = &input[(n * self.in_c + c) * ihw..][..ihw];
                    let k = &kernel[(o * self.in_c + c) * khw..][..khw];
                    for i in 0..self.k_h {
                        for j in 0..self.k_w {
                            let kv = sign * k[i * self.k_w + j];
                            if kv == T::zero() {
                                continue;
                            }
                            for y in 0..self.out_h {
                                let row = &in_plane[(y * self.stride + i) * self.in_w + j..];
                                let dst = &mut out_plane[y * self.out_w..][..self.out_w];
                                if self.stride == 1 {
                                    dst.iter_mut().zip(row).for_each(|(d, &v)| *d += kv * v);
                                } else {
                                    for (x, d) in dst.iter_mut().enumerate() {
                                        *d += kv * row[x * self.stride];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `grad_kernel += sign * d(conv)/d(kernel)` contracted with `grad_out`.
    pub fn kernel_grad_acc<T: Scalar>(&self, grad_kernel: &mut [T], input: &[T], grad_out: &[T], sign: T) {
        if self.is_dense() {
            for (x, g) in input.chunks(self.in_c).zip(grad_out.chunks(self.out_c)) {
                for (gk, &gv) in grad_kernel.chunks_mut(self.in_c).zip(g) {
                    let s = sign * gv;
                    gk.iter_mut().zip(x).for_each(|(d, &v)| *d += s * v);
                }
            }
            return;
        }
        let (ohw, ihw, khw) = (self.out_h * self.out_w, self.in_h * self.in_w, self.k_h * self.k_w);
        for n in 0..self.batch {
            for o in 0..self.out_c {
                let g_plane = &grad_out[(n * self.out_c + o) * ohw..][..ohw];
                for c in 0..self.in_c {
                    let in_plane = &input[(n * self.in_c + c) * ihw..][..ihw];
                    let gk = &mut grad_kernel[(o * self.in_c + c) * khw..][..khw];
                    for i in 0..self.k_h {
                        for j in 0..self.k_w {
                            let mut acc = T::zero();
                            for y in 0..self.out_h {
                                let row = &in_plane[(y * self.stride + i) * self.in_w + j..];
                                let g = &g_plane[y * self.out_w..][..self.out_w];
                                if self.stride == 1 {
                                    acc += g.iter().zip(row).map(|(&gv, &v)| gv * v).sum::<T>();
                                } else {
                                    for (x, &gv) in g.iter().enumerate() {
                                        acc += gv * row[x * self.stride];
                                    }
                                }
                            }
                            gk[i * self.k_w + j] += sign * acc;
                        }
                    }
                }
            }
        }
    }

    /// `grad_input += sign * conv^T(kernel, grad_out)`.
    pub fn input_grad_acc<T: Scalar>(&self, grad_input: &mut [T], kernel: &[T], grad_out: &[T], sign: T) {
        if self.is_dense() {
            for (gi, g) in grad_input.chunks_mut(self.in_c).zip(grad_out.chunks(self.out_c)) {
                for (k, &gv) in kernel.chunks(self.in_c).zip(g) {
                    let s = sign * gv;
                    gi.iter_mut().zip(k).for_each(|(d, &w)| *d += s * w);
                }
            }
            return;
        }
        let (ohw, ihw, khw) = (self.out_h * self.out_w, self.in_h * self.in_w, self.k_h * self.k_w);
        for n in 0..self.batch {
            for o in 0..self.out_c {
                let g_plane = &grad_out[(n * self.out_c + o) * ohw..][..ohw];
                for c in 0..self.in_c {
                    let gi_plane = &mut grad_input[(n * self.in_c + c) * ihw..][..ihw];
                    let k = &kernel[(o * self.in_c + c) * khw..][..khw];
                    for i in 0..self.k_h {
                        for j in 0..self.k_w {
                            let kv = sign * k[i * self.k_w + j];
                            for y in 0..self.out_h {
                                let base = (y * self.stride + i) * self.in_w + j;
                                let g = &g_plane[y * self.out_w..][..self.out_w];
                                if self.stride == 1 {
                                    let dst = &mut gi_plane[base..][..self.out_w];
                                    dst.iter_mut().zip(g).for_each(|(d, &gv)| *d += kv * gv);
                                } else {
                                    for (x, &gv) in g.iter().enumerate() {
                                        gi_plane[base + x * self.stride] += kv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of a linear complex layer.
pub(crate) struct LinearGrads<T> {
    pub input: ComplexTensor<T>,
    pub weights: ComplexWeights<T>,
}

/// Shared four-sub-operation forward used by convolution and dense layers.
pub(crate) fn linear_forward<T: Scalar>(
    geom: &ConvGeometry,
    input: &ComplexTensor<T>,
    w: &ComplexWeights<T>,
) -> Result<ComplexTensor<T>> {
    let mut out = ComplexTensor::zeros(&geom.out_shape())?;
    let (wr, wi) = (w.kernel.real(), w.kernel.imag());
    let (ar, ai) = (input.real(), input.imag());
    let one = T::one();
    {
        let (or, oi) = out.parts_mut();
        geom.forward_acc(or, ar, wr, one);
        geom.forward_acc(or, ai, wi, -one);
        geom.forward_acc(oi, ai, wr, one);
        geom.forward_acc(oi, ar, wi, one);
    }
    if let Some(b) = &w.bias {
        add_channel_bias(&mut out, geom, b);
    }
    Ok(out)
}

fn add_channel_bias<T: Scalar>(out: &mut ComplexTensor<T>, geom: &ConvGeometry, bias: &ComplexTensor<T>) {
    let plane = geom.out_h * geom.out_w;
    let (br, bi) = (bias.real().to_vec(), bias.imag().to_vec());
    let (or, oi) = out.parts_mut();
    for (idx, (r, i)) in or.chunks_mut(plane).zip(oi.chunks_mut(plane)).enumerate() {
        let o = idx % geom.out_c;
        r.iter_mut().for_each(|v| *v += br[o]);
        i.iter_mut().for_each(|v| *v += bi[o]);
    }
}

/// With `need_input = false` the input gradient is left at zero.
pub(crate) fn linear_backward<T: Scalar>(
    geom: &ConvGeometry,
    input: &ComplexTensor<T>,
    w: &ComplexWeights<T>,
    grad_out: &ComplexTensor<T>,
    need_input: bool,
) -> Result<LinearGrads<T>> {
    let one = T::one();
    let (ar, ai) = (input.real(), input.imag());
    let (wr, wi) = (w.kernel.real(), w.kernel.imag());
    let (gr, gi) = (grad_out.real(), grad_out.imag());

    let mut gw = w.zeros_like();
    {
        let (gwr, gwi) = gw.kernel.parts_mut();
        geom.kernel_grad_acc(gwr, ar, gr, one);
        geom.kernel_grad_acc(gwr, ai, gi, one);
        geom.kernel_grad_acc(gwi, ai, gr, -one);
        geom.kernel_grad_acc(gwi, ar, gi, one);
    }
    if let Some(gb) = &mut gw.bias {
        let plane = geom.out_h * geom.out_w;
        let (gbr, gbi) = gb.parts_mut();
        for (idx, (r, i)) in gr.chunks(plane).zip(gi.chunks(plane)).enumerate() {
            let o = idx % geom.out_c;
            gbr[o] += r.iter().copied().sum::<T>();
            gbi[o] += i.iter().copied().sum::<T>();
        }
    }

    let mut ga = ComplexTensor::zeros(input.shape())?;
    if need_input {
        let (gar, gai) = ga.parts_mut();
        geom.input_grad_acc(gar, wr, gr, one);
        geom.input_grad_acc(gar, wi, gi, one);
        geom.input_grad_acc(gai, wi, gr, -one);
        geom.input_grad_acc(gai, wr, gi, one);
    }
    Ok(LinearGrads { input: ga, weights: gw })
}

/// Forward pass of a single layer.
///
/// `mask` is only consulted by dropout layers; `None` makes them the identity.
pub fn layer_forward<T: Scalar>(
    layer: &LayerSpec,
    weights: Option<&ComplexWeights<T>>,
    input: &ComplexTensor<T>,
    mask: Option<&DropoutMask>,
) -> Result<ComplexTensor<T>> {
    let missing = || Error::Shape(format!("{} layer has no weights", layer.name()));
    match *layer {
        LayerSpec::ComplexConv2D { stride, .. } => {
            complex_conv2d(input, weights.ok_or_else(missing)?, stride)
        }
        LayerSpec::ComplexDense { .. } => complex_dense(input, weights.ok_or_else(missing)?),
        LayerSpec::ComplexPool { window, reduction } => complex_pool(input, window, reduction),
        LayerSpec::ComplexActivation { activation } => Ok(complex_activation(input, activation)),
        LayerSpec::BernoulliDropout { .. } => match mask {
            Some(m) => m.apply(input),
            None => Ok(input.clone()),
        },
    }
}

/// Backward pass of a single layer given the gradient of a real objective
/// with respect to its output (real and imaginary parts separately).
///
/// Returns the input gradient and, for layers with weights, the parameter
/// gradients.
pub fn layer_backward<T: Scalar>(
    layer: &LayerSpec,
    weights: Option<&ComplexWeights<T>>,
    input: &ComplexTensor<T>,
    mask: Option<&DropoutMask>,
    grad_out: &ComplexTensor<T>,
) -> Result<(ComplexTensor<T>, Option<ComplexWeights<T>>)> {
    layer_backward_with(layer, weights, input, mask, grad_out, true)
}

/// [`layer_backward`] that may skip the input gradient of linear layers.
pub(crate) fn layer_backward_with<T: Scalar>(
    layer: &LayerSpec,
    weights: Option<&ComplexWeights<T>>,
    input: &ComplexTensor<T>,
    mask: Option<&DropoutMask>,
    grad_out: &ComplexTensor<T>,
    need_input: bool,
) -> Result<(ComplexTensor<T>, Option<ComplexWeights<T>>)> {
    let missing = || Error::Shape(format!("{} layer has no weights", layer.name()));
    Ok(match *layer {
        LayerSpec::ComplexConv2D { stride, .. } => {
            let lg = conv::complex_conv2d_backward(input, weights.ok_or_else(missing)?, stride, grad_out, need_input)?;
            (lg.input, Some(lg.weights))
        }
        LayerSpec::ComplexDense { .. } => {
            let lg = dense::complex_dense_backward(input, weights.ok_or_else(missing)?, grad_out, need_input)?;
            (lg.input, Some(lg.weights))
        }
        LayerSpec::ComplexPool { window, reduction } => {
            (pool::complex_pool_backward(input, window, reduction, grad_out)?, None)
        }
        LayerSpec::ComplexActivation { activation } => {
            (activation::complex_activation_backward(input, activation, grad_out), None)
        }
        LayerSpec::BernoulliDropout { .. } => match mask {
            Some(m) => (m.apply(grad_out)?, None),
            None => (grad_out.clone(), None),
        },
    })
}
