//! Run configuration files. Flags given on the command line override values
//! read here; relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};

use bcvnn::data::ComplexMode;
use bcvnn::search::SearchConfig;
use bcvnn::train::TrainConfig;
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub network: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    pub train: Option<TrainConfig>,
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory written by `gendata`.
    pub dir: Option<PathBuf>,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub complex_mode: Option<ComplexMode>,
    pub limit: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub samples: Option<usize>,
    pub n_bins: Option<usize>,
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub classes: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub feature_shape: Option<Vec<usize>>,
    pub class_separation: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "{}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut cfg.network);
        rebase(&mut cfg.checkpoint);
        rebase(&mut cfg.out);
        rebase(&mut cfg.data.dir);
        rebase(&mut cfg.data.mnist_images);
        rebase(&mut cfg.data.mnist_labels);
        Ok(cfg)
    }
}
