//! Checkpoint directories: `manifest.toml`, `network.toml` and one container
//! file per kernel and bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::layers::ComplexWeights;
use crate::network::{NetworkSpec, NetworkWeights};
use crate::scalar::Scalar;

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    network: String,
    #[serde(default)]
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    index: usize,
    kernel: String,
    bias: Option<String>,
}

pub fn save_checkpoint<T: Scalar>(
    dir: impl AsRef<Path>,
    spec: &NetworkSpec,
    weights: &NetworkWeights<T>,
) -> Result<()> {
    weights.check(spec)?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    spec.save(dir.join("network.toml"))?;
    let mut layers = Vec::new();
    for (index, w) in weights.layers.iter().enumerate() {
        let Some(w) = w else { continue };
        let kernel = format!("layer{index:03}_kernel.bcvt");
        container::save(&w.kernel, dir.join(&kernel))?;
        let bias = match &w.bias {
            Some(b) => {
                let name = format!("layer{index:03}_bias.bcvt");
                container::save(b, dir.join(&name))?;
                Some(name)
            }
            None => None,
        };
        layers.push(LayerEntry { index, kernel, bias });
    }
    let manifest = Manifest { schema_version: SCHEMA_VERSION, network: "network.toml".into(), layers };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(dir: impl AsRef<Path>) -> Result<(NetworkSpec, NetworkWeights<T>)> {
    let dir = dir.as_ref();
    let manifest: Manifest = toml::from_str(&std::fs::read_to_string(dir.join("manifest.toml"))?)
        .map_err(|e| Error::Config(format!("manifest.toml: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint schema_version {}",
            manifest.schema_version
        )));
    }
    let spec = NetworkSpec::load(dir.join(&manifest.network))?;
    let mut layers = vec![None; spec.layers().len()];
    for entry in manifest.layers {
        let slot = layers
            .get_mut(entry.index)
            .ok_or_else(|| Error::Format(format!("checkpoint lists layer {} of {}", entry.index, spec.layers().len())))?;
        let kernel = container::load(dir.join(&entry.kernel))?;
        let bias = entry.bias.map(|b| container::load(dir.join(b))).transpose()?;
        *slot = Some(ComplexWeights::new(kernel, bias)?);
    }
    let weights = NetworkWeights { layers };
    weights.check(&spec)?;
    Ok((spec, weights))
}
