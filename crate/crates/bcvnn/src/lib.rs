//! Dropout-based Bayesian complex-valued neural networks.
//!
//! The crate covers complex tensor arithmetic, complex layers with part-mode
//! Bernoulli dropout, split real/imaginary backpropagation, Monte-Carlo
//! prediction with calibration metrics, an evolutionary search over per-layer
//! dropout placements, and an analytical hardware cost model.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`/`*32`
//! aliases below name the common instantiations.

pub mod checkpoint;
pub mod container;
pub mod data;
pub mod error;
pub mod hw;
pub mod inference;
pub mod layers;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{generate_synthetic, load_mnist_complex, ComplexMode, SyntheticSpec};
pub use error::{Error, Result};
pub use hw::{estimate_network, MappingScheme};
pub use inference::{ece, evaluate, mc_predict, McPrediction};
pub use layers::{ComplexWeights, LayerSpec, PartMode};
pub use network::{forward, NetworkSpec, NetworkWeights};
pub use scalar::Scalar;
pub use search::{enumerate_all, run_search, Genome, Objective, SearchConfig};
pub use tensor::{ComplexTensor, RealTensor};
pub use train::{train, Dataset, TrainConfig};

pub type ComplexTensor64 = ComplexTensor<f64>;
pub type ComplexTensor32 = ComplexTensor<f32>;
pub type NetworkWeights64 = NetworkWeights<f64>;
pub type NetworkWeights32 = NetworkWeights<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
