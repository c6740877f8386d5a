//! Training with split real/imaginary backpropagation.
//!
//! The objective per batch is the mean negative log-likelihood of
//! `softmax(|logits|)` plus `weight_decay * sum(||M_real||^2 + ||M_imag||^2)`
//! over every kernel. Dropout stays active while training, with one mask per
//! (sample, channel) drawn for each batch and reused by the backward pass.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::layer_backward_with;
use crate::network::{forward_traced, ForwardTrace, NetworkSpec, NetworkWeights};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { momentum: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            optimizer: Optimizer::Momentum { momentum: 0.9 },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        if let Optimizer::Momentum { momentum } = self.optimizer {
            if !(0.0..1.0).contains(&momentum) {
                return Err(Error::InvalidArgument(format!("momentum {momentum} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Labelled samples; every input has the same per-sample shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    inputs: Vec<ComplexTensor<T>>,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<ComplexTensor<T>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{classes}")));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.shape() != first.shape()) {
                return Err(Error::Shape("dataset inputs have differing shapes".into()));
            }
        }
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &[ComplexTensor<T>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Stacks the selected samples into one `(batch, ...)` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(ComplexTensor<T>, Vec<usize>)> {
        let items: Vec<_> = indices.iter().map(|&i| &self.inputs[i]).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((ComplexTensor::stack(&items)?, labels))
    }

    /// First `n` samples and the rest.
    pub fn split(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head = Self {
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        };
        let tail = Self {
            inputs: self.inputs[n..].to_vec(),
            labels: self.labels[n..].to_vec(),
            classes: self.classes,
        };
        (head, tail)
    }
}

/// `softmax(|z|)` for one row of complex logits.
pub fn magnitude_softmax<T: Scalar>(real: &[T], imag: &[T]) -> Vec<T> {
    let mags: Vec<T> = real.iter().zip(imag).map(|(&r, &i)| r.hypot(i)).collect();
    let max = mags.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = mags.iter().map(|&m| (m - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Negative log-likelihood of `label` under `softmax(|logits|)`.
pub fn nll_loss<T: Scalar>(logits: &ComplexTensor<T>, label: usize) -> Result<T> {
    let c = logits.len();
    if label >= c {
        return Err(Error::InvalidArgument(format!("label {label} outside 0..{c}")));
    }
    let mags: Vec<T> = logits.magnitude().into_vec();
    let max = mags.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + mags.iter().map(|&m| (m - max).exp()).sum::<T>().ln();
    Ok(lse - mags[label])
}

/// Sample loss: NLL plus the weight-decay penalty of `weights`.
pub fn loss<T: Scalar>(
    logits: &ComplexTensor<T>,
    label: usize,
    weights: &NetworkWeights<T>,
    weight_decay: f64,
) -> Result<T> {
    Ok(nll_loss(logits, label)? + T::from_f64_lossy(weight_decay) * weights.kernel_energy())
}

/// Mean NLL over a `(batch, classes)` logit tensor and its gradient.
fn nll_with_grad<T: Scalar>(logits: &ComplexTensor<T>, labels: &[usize]) -> Result<(T, ComplexTensor<T>)> {
    let b = labels.len();
    let c = logits.len() / b.max(1);
    if logits.shape() != [b, c] {
        return Err(Error::Shape(format!("logits {:?} for {b} labels", logits.shape())));
    }
    let inv_b = T::one() / T::from_usize(b).unwrap();
    let mut grad = ComplexTensor::zeros(logits.shape())?;
    let mut total = T::zero();
    for (n, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::InvalidArgument(format!("label {label} outside 0..{c}")));
        }
        let re = &logits.real()[n * c..][..c];
        let im = &logits.imag()[n * c..][..c];
        let p = magnitude_softmax(re, im);
        let mags: Vec<T> = re.iter().zip(im).map(|(&r, &i)| r.hypot(i)).collect();
        let max = mags.iter().copied().fold(T::neg_infinity(), T::max);
        total += max + mags.iter().map(|&m| (m - max).exp()).sum::<T>().ln() - mags[label];
        let (gr, gi) = grad.parts_mut();
        for k in 0..c {
            let dm = (p[k] - if k == label { T::one() } else { T::zero() }) * inv_b;
            let m = re[k].hypot(im[k]);
            if m > T::zero() {
                gr[n * c + k] = dm * re[k] / m;
                gi[n * c + k] = dm * im[k] / m;
            }
        }
    }
    Ok((total * inv_b, grad))
}

/// Backpropagates `grad_output` through a recorded forward pass.
///
/// Returns the parameter gradients and the gradient with respect to the input.
pub fn backprop<T: Scalar>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    trace: &ForwardTrace<T>,
    grad_output: &ComplexTensor<T>,
) -> Result<(NetworkWeights<T>, ComplexTensor<T>)> {
    backprop_with(spec, weights, trace, grad_output, true)
}

/// Backprop that skips the input gradient of the first layer when `need_input` is false.
fn backprop_with<T: Scalar>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    trace: &ForwardTrace<T>,
    grad_output: &ComplexTensor<T>,
    need_input: bool,
) -> Result<(NetworkWeights<T>, ComplexTensor<T>)> {
    let mut grads = weights.zeros_like();
    let mut g = grad_output.clone();
    for (i, layer) in spec.layers().iter().enumerate().rev() {
        let (gi, gw) = layer_backward_with(
            layer,
            weights.layers[i].as_ref(),
            &trace.inputs[i],
            trace.masks[i].as_ref(),
            &g,
            need_input || i > 0,
        )?;
        grads.layers[i] = gw;
        g = gi;
    }
    Ok((grads, g))
}

/// Result of one forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct BackwardOutput<T> {
    /// Mean NLL plus weight decay.
    pub loss: T,
    pub grads: NetworkWeights<T>,
    pub logits: ComplexTensor<T>,
}

/// Objective value for a stacked batch, drawing dropout masks from `rng`
/// exactly as [`backward`] does.
pub fn batch_objective<T: Scalar>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    inputs: &ComplexTensor<T>,
    labels: &[usize],
    weight_decay: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<T> {
    let trace = forward_traced(spec, weights, inputs, rng)?;
    let (nll, _) = nll_with_grad(&trace.output, labels)?;
    Ok(nll + T::from_f64_lossy(weight_decay) * weights.kernel_energy())
}

/// Gradient of the batch objective with respect to every kernel and bias entry.
///
/// `rng = None` runs dropout layers as identity.
pub fn backward<T: Scalar>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    inputs: &ComplexTensor<T>,
    labels: &[usize],
    weight_decay: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<BackwardOutput<T>> {
    let trace = forward_traced(spec, weights, inputs, rng)?;
    let (nll, grad_logits) = nll_with_grad(&trace.output, labels)?;
    let (mut grads, _) = backprop_with(spec, weights, &trace, &grad_logits, false)?;
    let decay = T::from_f64_lossy(weight_decay);
    if decay > T::zero() {
        let two_decay = decay + decay;
        for (g, w) in grads.layers.iter_mut().zip(&weights.layers) {
            if let (Some(g), Some(w)) = (g, w) {
                let (gr, gi) = g.kernel.parts_mut();
                gr.iter_mut().zip(w.kernel.real()).for_each(|(g, &w)| *g += two_decay * w);
                gi.iter_mut().zip(w.kernel.imag()).for_each(|(g, &w)| *g += two_decay * w);
            }
        }
    }
    Ok(BackwardOutput {
        loss: nll + decay * weights.kernel_energy(),
        grads,
        logits: trace.output,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub weights: NetworkWeights<T>,
    pub trace: Vec<EpochStats>,
}

/// Streams used by a training run; initialization uses stream 0 via
/// [`NetworkWeights::init`].
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains from a seeded initialization.
pub fn train<T: Scalar>(spec: &NetworkSpec, dataset: &Dataset<T>, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    let weights = NetworkWeights::init(spec, config.seed)?;
    train_from(spec, weights, dataset, config)
}

/// Trains starting from `weights`. Single-threaded and bit-reproducible.
pub fn train_from<T: Scalar>(
    spec: &NetworkSpec,
    mut weights: NetworkWeights<T>,
    dataset: &Dataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    weights.check(spec)?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if dataset.classes() != spec.classes() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, network {}",
            dataset.classes(),
            spec.classes()
        )));
    }
    let mut shuffle_rng = stream(config.seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream(config.seed, DROPOUT_STREAM);
    let lr = T::from_f64_lossy(config.learning_rate);
    let mut velocity = weights.zeros_like();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = dataset.batch(idx)?;
            let out = backward(spec, &weights, &x, &labels, config.weight_decay, Some(&mut dropout_rng))?;
            let l = out.loss.to_f64_lossy();
            if !l.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss: l });
            }
            loss_sum += l * idx.len() as f64;
            correct += count_correct(&out.logits, &labels);

            for ((w, g), v) in weights.layers.iter_mut().zip(&out.grads.layers).zip(&mut velocity.layers) {
                let (Some(w), Some(g), Some(v)) = (w, g, v) else { continue };
                for ((ws, gs), vs) in w.slices_mut().into_iter().zip(g.slices()).zip(v.slices_mut()) {
                    match config.optimizer {
                        Optimizer::Sgd => ws.iter_mut().zip(gs).for_each(|(w, &g)| *w -= lr * g),
                        Optimizer::Momentum { momentum } => {
                            let mu = T::from_f64_lossy(momentum);
                            for ((w, &g), v) in ws.iter_mut().zip(gs).zip(vs.iter_mut()) {
                                *v = mu * *v + g;
                                *w -= lr * *v;
                            }
                        }
                    }
                }
            }
            if !weights.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss: f64::NAN });
            }
        }
        trace.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / dataset.len() as f64,
            train_accuracy: correct as f64 / dataset.len() as f64,
        });
    }
    Ok(TrainOutcome { weights, trace })
}

fn count_correct<T: Scalar>(logits: &ComplexTensor<T>, labels: &[usize]) -> usize {
    let c = logits.len() / labels.len();
    let mags = logits.magnitude();
    labels
        .iter()
        .enumerate()
        .filter(|&(n, &label)| argmax(&mags.data()[n * c..][..c]) == label)
        .count()
}

/// Index of the first maximal element.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Training trace as CSV with columns `epoch,loss,train_acc`.
pub fn write_trace_csv<W: Write>(trace: &[EpochStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "train_acc"])?;
    for s in trace {
        w.write_record([s.epoch.to_string(), s.loss.to_string(), s.train_accuracy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One-line human summary of the last epoch.
pub fn summarize(trace: &[EpochStats]) -> String {
    let mut s = String::new();
    if let Some(last) = trace.last() {
        let _ = write!(s, "epoch {} loss {:.4} acc {:.4}", last.epoch, last.loss, last.train_accuracy);
    }
    s
}
