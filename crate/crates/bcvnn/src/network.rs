//! Network descriptions, parameter stores and the forward pass.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::dropout::channel_layout;
use crate::layers::{layer_forward, ComplexWeights, DropoutMask, LayerSpec, PartMode};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

pub const NETWORK_SCHEMA_VERSION: u32 = 1;

#[derive(Deserialize)]
struct RawNetworkSpec {
    schema_version: u32,
    input_shape: Vec<usize>,
    classes: usize,
    layers: Vec<LayerSpec>,
}

impl TryFrom<RawNetworkSpec> for NetworkSpec {
    type Error = Error;

    fn try_from(raw: RawNetworkSpec) -> Result<Self> {
        if raw.schema_version != NETWORK_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported network schema_version {} (expected {NETWORK_SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        NetworkSpec::new(raw.input_shape, raw.classes, raw.layers)
    }
}

/// Validated layer sequence with its per-sample input shape and class count.
///
/// Serialized as TOML:
///
/// ```toml
/// schema_version = 1
/// input_shape = [1, 28, 28]
/// classes = 10
///
/// [[layers]]
/// kind = "conv2d"
/// out_channels = 4
/// kernel = [5, 5]
/// stride = 1
///
/// [[layers]]
/// kind = "dropout"
/// keep_rate = 0.9
/// part_mode = "B"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetworkSpec")]
pub struct NetworkSpec {
    schema_version: u32,
    input_shape: Vec<usize>,
    classes: usize,
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self {
            schema_version: NETWORK_SCHEMA_VERSION,
            input_shape,
            classes,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidNetwork(m));
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return invalid(format!("bad input shape {:?}", self.input_shape));
        }
        if self.classes < 1 {
            return invalid("classes must be >= 1".into());
        }
        if !self.layers.iter().any(|l| !l.is_dropout()) {
            return invalid("network needs at least one non-dropout layer".into());
        }
        if self.layers.first().is_some_and(LayerSpec::is_dropout)
            || self.layers.last().is_some_and(LayerSpec::is_dropout)
        {
            return invalid("dropout layers may only appear between other layers".into());
        }
        let shapes = self.layer_shapes()?;
        let out = shapes.last().unwrap();
        if out != &[self.classes] {
            return invalid(format!(
                "network output shape {out:?} does not match {} classes",
                self.classes
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("network spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml_string())?)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Per-sample input shape of every layer, followed by the network output shape.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::InvalidNetwork(format!("layer {i} ({}): {e}", layer.name())))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Number of Bayesian (dropout) layers.
    pub fn bayesian_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_dropout()).count()
    }

    /// Current part modes of the dropout layers, in order.
    pub fn part_modes(&self) -> Vec<PartMode> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::BernoulliDropout { part_mode, .. } => Some(*part_mode),
                _ => None,
            })
            .collect()
    }

    /// Copy with the dropout layers reassigned to `modes`, in order.
    pub fn with_part_modes(&self, modes: &[PartMode]) -> Result<Self> {
        let n = self.bayesian_layer_count();
        if modes.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} part modes for {n} Bayesian layers",
                modes.len()
            )));
        }
        let mut spec = self.clone();
        let mut it = modes.iter();
        for layer in &mut spec.layers {
            if let LayerSpec::BernoulliDropout { part_mode, .. } = layer {
                *part_mode = *it.next().unwrap();
            }
        }
        Ok(spec)
    }

    /// Copy with every dropout layer using `keep_rate`.
    pub fn with_keep_rate(&self, keep_rate: f64) -> Result<Self> {
        crate::layers::check_keep_rate(keep_rate)?;
        let mut spec = self.clone();
        for layer in &mut spec.layers {
            if let LayerSpec::BernoulliDropout { keep_rate: k, .. } = layer {
                *k = keep_rate;
            }
        }
        Ok(spec)
    }
}

/// Parameters of every layer; `None` for layers without weights.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights<T> {
    pub layers: Vec<Option<ComplexWeights<T>>>,
}

impl<T: Scalar> NetworkWeights<T> {
    /// Gaussian initialization with per-part standard deviation `1/sqrt(fan_in)`
    /// and zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = spec.layer_shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, in_shape) in spec.layers.iter().zip(&shapes) {
            let Some((kshape, bshape)) = layer.weight_shapes(in_shape)? else {
                layers.push(None);
                continue;
            };
            let fan_in: usize = kshape[1..].iter().product();
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            let n: usize = kshape.iter().product();
            let real = (0..n).map(|_| T::from_f64_lossy(normal.sample(&mut rng))).collect();
            let imag = (0..n).map(|_| T::from_f64_lossy(normal.sample(&mut rng))).collect();
            layers.push(Some(ComplexWeights::new(
                ComplexTensor::from_parts(real, imag, &kshape)?,
                Some(ComplexTensor::zeros(&bshape)?),
            )?));
        }
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.as_ref().map(ComplexWeights::zeros_like)).collect(),
        }
    }

    /// Checks that the stored shapes match what `spec` expects.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "{} weight entries for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, ((layer, in_shape), w)) in spec
            .layers
            .iter()
            .zip(spec.layer_shapes()?)
            .zip(&self.layers)
            .enumerate()
        {
            match (layer.weight_shapes(&in_shape)?, w) {
                (None, None) => {}
                (Some((k, b)), Some(w)) => {
                    let bias_ok = w.bias.as_ref().is_none_or(|bias| bias.shape() == b.as_slice());
                    if w.kernel.shape() != k.as_slice() || !bias_ok {
                        return Err(Error::Shape(format!(
                            "layer {i}: kernel {:?} does not match expected {k:?}",
                            w.kernel.shape()
                        )));
                    }
                }
                _ => return Err(Error::Shape(format!("layer {i}: weight presence mismatch"))),
            }
        }
        Ok(())
    }

    /// `sum over layers of ||M_real||^2 + ||M_imag||^2` (kernels only).
    pub fn kernel_energy(&self) -> T {
        self.layers.iter().flatten().map(ComplexWeights::kernel_energy).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flatten().map(ComplexWeights::parameter_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|w| w.slices().iter().all(|s| s.iter().all(|v| v.is_finite())))
    }
}

/// Intermediate values kept by a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    /// Input of each layer.
    pub inputs: Vec<ComplexTensor<T>>,
    /// Mask used by each dropout layer (`None` for other layers).
    pub masks: Vec<Option<DropoutMask>>,
    pub output: ComplexTensor<T>,
}

fn check_input<T: Scalar>(spec: &NetworkSpec, input: &ComplexTensor<T>) -> Result<()> {
    let shape = input.shape();
    if shape.len() != spec.input_shape.len() + 1 || shape[1..] != spec.input_shape[..] {
        return Err(Error::Shape(format!(
            "input {shape:?} does not match batch x {:?}",
            spec.input_shape
        )));
    }
    Ok(())
}

/// Forward pass that records layer inputs and dropout masks.
///
/// With `rng = None` dropout layers are the identity; otherwise every dropout
/// layer draws a fresh mask per (sample, channel) from `rng`.
pub fn forward_traced<T: Scalar>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    input: &ComplexTensor<T>,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<ForwardTrace<T>> {
    check_input(spec, input)?;
    weights.check(spec)?;
    let mut inputs = Vec::with_capacity(spec.layers.len());
    let mut masks = Vec::with_capacity(spec.layers.len());
    let mut x = input.clone();
    for (layer, w) in spec.layers.iter().zip(&weights.layers) {
        let mask = match (layer, rng.as_deref_mut()) {
            (LayerSpec::BernoulliDropout { keep_rate, part_mode }, Some(r)) => {
                let (n, c, _) = channel_layout(x.shape())?;
                Some(DropoutMask::sample(n, c, *keep_rate, *part_mode, r)?)
            }
            _ => None,
        };
        let y = layer_forward(layer, w.as_ref(), &x, mask.as_ref())?;
        inputs.push(x);
        masks.push(mask);
        x = y;
    }
    Ok(ForwardTrace { inputs, masks, output: x })
}

/// Complex logits of shape `(batch, classes)`.
///
/// When `stochastic` is false the dropout layers pass values through and `rng`
/// is not touched.
pub fn forward<T: Scalar, R: RngCore>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    input: &ComplexTensor<T>,
    stochastic: bool,
    rng: &mut R,
) -> Result<ComplexTensor<T>> {
    check_input(spec, input)?;
    let mut x = input.clone();
    for (layer, w) in spec.layers.iter().zip(&weights.layers) {
        x = match *layer {
            LayerSpec::BernoulliDropout { keep_rate, part_mode } if stochastic => {
                crate::layers::bernoulli_channel_dropout(&x, keep_rate, part_mode, rng)?
            }
            _ => layer_forward(layer, w.as_ref(), &x, None)?,
        };
    }
    Ok(x)
}
