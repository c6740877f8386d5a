//! Monte-Carlo dropout prediction and calibration metrics.

use std::io::Write;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::network::{forward, NetworkSpec, NetworkWeights};
use crate::rng::derive_rng;
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;
use crate::train::{argmax, magnitude_softmax, Dataset};

/// Default number of stochastic forward passes.
pub const DEFAULT_MC_SAMPLES: usize = 3;
/// Default number of equal-width confidence bins for ECE.
pub const DEFAULT_ECE_BINS: usize = 15;

/// Summary of `T` stochastic passes for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct McPrediction {
    pub mean_probs: Vec<f64>,
    /// Per-class population standard deviation across the passes.
    pub std_probs: Vec<f64>,
    pub predicted_class: usize,
    pub samples_used: usize,
}

impl McPrediction {
    /// `max(mean_probs)`.
    pub fn confidence(&self) -> f64 {
        self.mean_probs[self.predicted_class]
    }

    pub fn mean_std(&self) -> f64 {
        self.std_probs.iter().sum::<f64>() / self.std_probs.len() as f64
    }

    fn from_samples(probs: &[Vec<f64>]) -> Self {
        let t = probs.len() as f64;
        let c = probs[0].len();
        // Shifting by the first pass makes identical passes give exactly
        // `mean = p` and `std = 0`.
        let mean: Vec<f64> = (0..c)
            .map(|k| probs[0][k] + probs.iter().map(|p| p[k] - probs[0][k]).sum::<f64>() / t)
            .collect();
        let std = (0..c)
            .map(|k| {
                let var = probs.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / t;
                var.sqrt()
            })
            .collect();
        Self {
            predicted_class: argmax(&mean),
            mean_probs: mean,
            std_probs: std,
            samples_used: probs.len(),
        }
    }
}

/// Runs `samples` stochastic passes over one input.
///
/// `input` is either a single sample (the network's input shape) or a batch of
/// one. The passes are evaluated as one batch of `samples` copies, so every
/// pass receives its own independent masks.
pub fn mc_predict<T: Scalar, R: RngCore>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    input: &ComplexTensor<T>,
    samples: usize,
    rng: &mut R,
) -> Result<McPrediction> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one MC sample is required".into()));
    }
    let single = if input.shape() == spec.input_shape() {
        input.clone()
    } else if input.shape().first() == Some(&1) && input.shape()[1..] == *spec.input_shape() {
        input.clone().reshape(spec.input_shape())?
    } else {
        return Err(Error::Shape(format!(
            "input {:?} does not match network input {:?}",
            input.shape(),
            spec.input_shape()
        )));
    };
    let copies: Vec<_> = std::iter::repeat_n(&single, samples).collect();
    let batch = ComplexTensor::stack(&copies)?;
    let logits = forward(spec, weights, &batch, true, rng)?;
    let c = spec.classes();
    let probs: Vec<Vec<f64>> = (0..samples)
        .map(|s| {
            magnitude_softmax(&logits.real()[s * c..][..c], &logits.imag()[s * c..][..c])
                .into_iter()
                .map(Scalar::to_f64_lossy)
                .collect()
        })
        .collect();
    Ok(McPrediction::from_samples(&probs))
}

pub fn accuracy(predictions: &[McPrediction], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &l)| p.predicted_class == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// One reliability bin `(lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence in the bin (0 when empty).
    pub confidence: f64,
    /// Fraction correct in the bin (0 when empty).
    pub accuracy: f64,
}

/// Bin of confidence `c` among `n_bins` half-open bins `((k-1)/B, k/B]`;
/// `c = 0` goes to the first bin.
pub fn bin_index(c: f64, n_bins: usize) -> usize {
    ((c * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1
}

pub fn calibration_bins(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::InvalidArgument(format!(
            "{} confidences for {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    if let Some(bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("confidence {bad} outside [0, 1]")));
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = &mut sums[bin_index(c, n_bins)];
        b.0 += 1;
        b.1 += c;
        b.2 += ok as usize;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(k, (count, conf_sum, hits))| {
            let denom = count.max(1) as f64;
            CalibrationBin {
                lower: k as f64 / n_bins as f64,
                upper: (k + 1) as f64 / n_bins as f64,
                count,
                confidence: conf_sum / denom,
                accuracy: hits as f64 / denom,
            }
        })
        .collect())
}

/// Expected calibration error `sum_b |B_b|/n * |acc(B_b) - conf(B_b)|`.
pub fn ece(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    let bins = calibration_bins(confidences, correct, n_bins)?;
    Ok(ece_from_bins(&bins, confidences.len()))
}

fn ece_from_bins(bins: &[CalibrationBin], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    bins.iter()
        .map(|b| b.count as f64 * (b.accuracy - b.confidence).abs())
        .sum::<f64>()
        / n as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Evaluation of a whole dataset with its per-input predictions.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub predictions: Vec<McPrediction>,
    pub labels: Vec<usize>,
    pub report: EvalReport,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub n_bins: usize,
    pub seed: u64,
    /// Worker threads; results do not depend on this value.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_MC_SAMPLES,
            n_bins: DEFAULT_ECE_BINS,
            seed: 0,
            threads: 1,
        }
    }
}

/// MC-dropout evaluation of every input. Input `i` draws its masks from a
/// generator derived from `(seed, i)`.
pub fn evaluate<T: Scalar>(
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
    dataset: &Dataset<T>,
    options: &EvalOptions,
) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let predict = |i: usize| {
        let mut rng = derive_rng(options.seed, &[i as u64]);
        mc_predict(spec, weights, &dataset.inputs()[i], options.samples, &mut rng)
    };
    let n = dataset.len();
    let threads = options.threads.clamp(1, n);
    let predictions: Vec<McPrediction> = if threads == 1 {
        (0..n).map(predict).collect::<Result<_>>()?
    } else {
        let chunk = n.div_ceil(threads);
        let parts: Vec<Result<Vec<McPrediction>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let predict = &predict;
                    s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(predict).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(n);
        for p in parts {
            all.extend(p?);
        }
        all
    };
    let labels = dataset.labels().to_vec();
    let confidences: Vec<f64> = predictions.iter().map(McPrediction::confidence).collect();
    let correct: Vec<bool> = predictions.iter().zip(&labels).map(|(p, &l)| p.predicted_class == l).collect();
    let bins = calibration_bins(&confidences, &correct, options.n_bins)?;
    let report = EvalReport {
        accuracy: accuracy(&predictions, &labels)?,
        ece: ece_from_bins(&bins, n),
        bins,
    };
    Ok(Evaluation { predictions, labels, report })
}

/// Per-input rows followed by one summary row, all sharing one header:
/// `kind,predicted_class,label,confidence,mean_std,accuracy,ece`.
pub fn write_evaluation_csv<W: Write>(eval: &Evaluation, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "predicted_class", "label", "confidence", "mean_std", "accuracy", "ece"])?;
    for (p, l) in eval.predictions.iter().zip(&eval.labels) {
        w.write_record([
            "input".to_string(),
            p.predicted_class.to_string(),
            l.to_string(),
            p.confidence().to_string(),
            p.mean_std().to_string(),
            String::new(),
            String::new(),
        ])?;
    }
    w.write_record([
        "summary".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        eval.report.accuracy.to_string(),
        eval.report.ece.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
