//! Dataset ingestion: IDX (MNIST) files, a seeded synthetic generator, and
//! on-disk persistence of complex datasets.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;
use crate::train::Dataset;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const MNIST_CLASSES: usize = 10;

/// How grayscale pixels become complex inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexMode {
    /// `real = pixel / 255`, `imag = 0`.
    #[default]
    ZeroImag,
    /// Unnormalized 2-D DFT of the `pixel / 255` image.
    Dft,
}

/// Raw IDX image set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..][..n]
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("truncated IDX {what} header")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format("IDX images have a zero dimension".into()));
    }
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Format(format!(
            "truncated IDX images: expected {need} pixel bytes, found {}",
            body.len()
        )));
    }
    Ok(IdxImages { rows, cols, pixels: body[..need].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Format(format!(
            "truncated IDX labels: expected {count} bytes, found {}",
            body.len()
        )));
    }
    Ok(body[..count].to_vec())
}

/// 2-D DFT `X[u,v] = sum x[h,w] exp(-2 pi i (u h / H + v w / W))` of a real
/// image, computed separably (rows, then columns).
pub fn dft2_real(image: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let twiddles = |n: usize| -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .collect()
    };
    let (tw_c, tw_r) = (twiddles(cols), twiddles(rows));
    // Row transform of the real input.
    let mut row_re = vec![0.0; rows * cols];
    let mut row_im = vec![0.0; rows * cols];
    for h in 0..rows {
        let x = &image[h * cols..][..cols];
        for v in 0..cols {
            let (mut re, mut im) = (0.0, 0.0);
            for (w, &xv) in x.iter().enumerate() {
                let (c, s) = tw_c[(v * w) % cols];
                re += xv * c;
                im += xv * s;
            }
            row_re[h * cols + v] = re;
            row_im[h * cols + v] = im;
        }
    }
    let mut out_re = vec![0.0; rows * cols];
    let mut out_im = vec![0.0; rows * cols];
    for u in 0..rows {
        for v in 0..cols {
            let (mut re, mut im) = (0.0, 0.0);
            for h in 0..rows {
                let (c, s) = tw_r[(u * h) % rows];
                let (a, b) = (row_re[h * cols + v], row_im[h * cols + v]);
                re += a * c - b * s;
                im += a * s + b * c;
            }
            out_re[u * cols + v] = re;
            out_im[u * cols + v] = im;
        }
    }
    (out_re, out_im)
}

/// Converts one grayscale image to a `(1, rows, cols)` complex tensor.
pub fn image_to_complex<T: Scalar>(pixels: &[u8], rows: usize, cols: usize, mode: ComplexMode) -> Result<ComplexTensor<T>> {
    let norm: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let (re, im) = match mode {
        ComplexMode::ZeroImag => (norm, vec![0.0; rows * cols]),
        ComplexMode::Dft => dft2_real(&norm, rows, cols),
    };
    let cast = |v: Vec<f64>| v.into_iter().map(T::from_f64_lossy).collect();
    ComplexTensor::from_parts(cast(re), cast(im), &[1, rows, cols])
}

/// Builds a dataset from in-memory IDX bytes, keeping at most `limit` samples.
pub fn mnist_from_bytes<T: Scalar>(
    images: &[u8],
    labels: &[u8],
    mode: ComplexMode,
    limit: Option<usize>,
) -> Result<Dataset<T>> {
    let imgs = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if imgs.count() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            imgs.count(),
            labels.len()
        )));
    }
    let n = limit.map_or(labels.len(), |l| l.min(labels.len()));
    let inputs = (0..n)
        .map(|i| image_to_complex(imgs.image(i), imgs.rows, imgs.cols, mode))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(inputs, labels[..n].iter().map(|&l| l as usize).collect(), MNIST_CLASSES)
}

pub fn load_mnist_complex<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    mode: ComplexMode,
    limit: Option<usize>,
) -> Result<Dataset<T>> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    mnist_from_bytes(&images, &labels, mode, limit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub feature_shape: Vec<usize>,
    pub class_separation: f64,
    pub seed: u64,
}

/// Complex Gaussian clusters around class centroids.
///
/// Centroid `k` has per-feature modulus `separation * (1 + k / classes)` and
/// phase `2 pi k / classes` plus a per-(class, feature) random offset. Samples
/// add unit-variance complex Gaussian noise. Classes are interleaved, so any
/// prefix of length `m * classes` is balanced.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    if spec.classes < 2 || spec.samples_per_class < 1 {
        return Err(Error::InvalidArgument("need >= 2 classes and >= 1 sample per class".into()));
    }
    if !(spec.class_separation > 0.0) {
        return Err(Error::InvalidArgument("class_separation must be > 0".into()));
    }
    let features: usize = spec.feature_shape.iter().product();
    if spec.feature_shape.is_empty() || features == 0 {
        return Err(Error::InvalidArgument("feature_shape must be non-empty with positive extents".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centroids: Vec<Vec<(f64, f64)>> = (0..spec.classes)
        .map(|k| {
            let radius = spec.class_separation * (1.0 + k as f64 / spec.classes as f64);
            let phase = 2.0 * PI * k as f64 / spec.classes as f64;
            (0..features)
                .map(|_| {
                    let a = phase + rng.random_range(-PI..PI);
                    (radius * a.cos(), radius * a.sin())
                })
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    let mut inputs = Vec::with_capacity(spec.classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(inputs.capacity());
    for _ in 0..spec.samples_per_class {
        for (k, c) in centroids.iter().enumerate() {
            let re = c.iter().map(|&(r, _)| T::from_f64_lossy(r + noise.sample(&mut rng))).collect();
            let im = c.iter().map(|&(_, i)| T::from_f64_lossy(i + noise.sample(&mut rng))).collect();
            inputs.push(ComplexTensor::from_parts(re, im, &spec.feature_shape)?);
            labels.push(k);
        }
    }
    Dataset::new(inputs, labels, spec.classes)
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    schema_version: u32,
    classes: usize,
    samples: usize,
    inputs: String,
    labels: String,
}

/// Writes `dataset.toml`, `inputs.bcvt` (stacked inputs) and `labels.csv`.
pub fn save_dataset<T: Scalar>(dataset: &Dataset<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let refs: Vec<_> = dataset.inputs().iter().collect();
    container::save(&ComplexTensor::stack(&refs)?, dir.join("inputs.bcvt"))?;
    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    w.write_record(["index", "label"])?;
    for (i, l) in dataset.labels().iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    let manifest = DatasetManifest {
        schema_version: 1,
        classes: dataset.classes(),
        samples: dataset.len(),
        inputs: "inputs.bcvt".into(),
        labels: "labels.csv".into(),
    };
    std::fs::write(dir.join("dataset.toml"), toml::to_string(&manifest).unwrap())?;
    Ok(())
}

pub fn load_dataset<T: Scalar>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest = toml::from_str(&std::fs::read_to_string(dir.join("dataset.toml"))?)
        .map_err(|e| Error::Config(e.to_string()))?;
    if manifest.schema_version != 1 {
        return Err(Error::Config(format!("unsupported dataset schema_version {}", manifest.schema_version)));
    }
    let stacked: ComplexTensor<T> = container::load(dir.join(&manifest.inputs))?;
    let mut rdr = csv::Reader::from_path(dir.join(&manifest.labels))?;
    let mut labels = Vec::new();
    for row in rdr.records() {
        let row = row?;
        labels.push(row[1].parse().map_err(|_| Error::Format(format!("bad label {:?}", &row[1])))?);
    }
    let n = stacked.shape()[0];
    if n != manifest.samples || labels.len() != n {
        return Err(Error::Format(format!(
            "dataset manifest lists {} samples, found {n} inputs and {} labels",
            manifest.samples,
            labels.len()
        )));
    }
    let per: Vec<usize> = stacked.shape()[1..].to_vec();
    let size: usize = per.iter().product();
    let (re, im, _) = stacked.into_parts();
    let inputs = (0..n)
        .map(|i| {
            ComplexTensor::from_parts(re[i * size..][..size].to_vec(), im[i * size..][..size].to_vec(), &per)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(inputs, labels, manifest.classes)
}
