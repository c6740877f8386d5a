//! Part-mode Bernoulli channel dropout.
//!
//! A mask holds one Bernoulli(keep_rate) draw per (sample, channel) for every
//! masked part. A dropped channel is zeroed over all of its positions and kept
//! channels are scaled by `1 / keep_rate`. Under `PartMode::Real` or
//! `PartMode::Imag` the other part is copied unchanged.
//!
//! Draw order is fixed: for each sample, the real-part mask (if any) is drawn
//! for all channels, then the imaginary-part mask. Each entry consumes one
//! uniform `f64` from the generator and is kept when `u < keep_rate`.

use rand::Rng;

use super::{check_keep_rate, PartMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

/// `(samples, channels, positions per channel)` of a tensor as seen by dropout.
///
/// Rank 1 is an unbatched feature vector where every feature is a channel;
/// otherwise axis 0 is the batch and axis 1 the channel.
pub fn channel_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [] => Err(Error::Shape("dropout input has rank 0".into())),
        [f] => Ok((1, *f, 1)),
        [n, c, rest @ ..] => Ok((*n, *c, rest.iter().product())),
    }
}

/// Sampled keep flags for one dropout application.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub samples: usize,
    pub channels: usize,
    pub keep_rate: f64,
    /// `samples * channels` flags, sample-major; `None` when the part is untouched.
    pub real: Option<Vec<bool>>,
    pub imag: Option<Vec<bool>>,
}

impl DropoutMask {
    pub fn sample<R: Rng + ?Sized>(
        samples: usize,
        channels: usize,
        keep_rate: f64,
        part_mode: PartMode,
        rng: &mut R,
    ) -> Result<Self> {
        check_keep_rate(keep_rate)?;
        let mut real = part_mode.masks_real().then(|| Vec::with_capacity(samples * channels));
        let mut imag = part_mode.masks_imag().then(|| Vec::with_capacity(samples * channels));
        for _ in 0..samples {
            for part in [&mut real, &mut imag].into_iter().flatten() {
                part.extend((0..channels).map(|_| rng.random::<f64>() < keep_rate));
            }
        }
        Ok(Self { samples, channels, keep_rate, real, imag })
    }

    /// Mask that keeps everything; used for deterministic passes.
    pub fn keep_all(samples: usize, channels: usize) -> Self {
        Self { samples, channels, keep_rate: 1.0, real: None, imag: None }
    }

    /// Applies the mask. Backpropagation uses the same map, which is linear.
    pub fn apply<T: Scalar>(&self, input: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
        let (n, c, block) = channel_layout(input.shape())?;
        if n != self.samples || c != self.channels {
            return Err(Error::Shape(format!(
                "mask for {}x{} channels applied to {:?}",
                self.samples,
                self.channels,
                input.shape()
            )));
        }
        let scale = T::from_f64_lossy(1.0 / self.keep_rate);
        let mut out = input.clone();
        let (or, oi) = out.parts_mut();
        for (part, flags) in [(or, &self.real), (oi, &self.imag)] {
            let Some(flags) = flags else { continue };
            for (chunk, &keep) in part.chunks_mut(block).zip(flags) {
                if keep {
                    chunk.iter_mut().for_each(|v| *v *= scale);
                } else {
                    chunk.iter_mut().for_each(|v| *v = T::zero());
                }
            }
        }
        Ok(out)
    }
}

/// Draws a fresh mask from `rng` and applies it to `input`.
pub fn bernoulli_channel_dropout<T: Scalar, R: Rng + ?Sized>(
    input: &ComplexTensor<T>,
    keep_rate: f64,
    part_mode: PartMode,
    rng: &mut R,
) -> Result<ComplexTensor<T>> {
    check_keep_rate(keep_rate)?;
    let (n, c, _) = channel_layout(input.shape())?;
    DropoutMask::sample(n, c, keep_rate, part_mode, rng)?.apply(input)
}
