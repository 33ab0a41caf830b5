//! Checkpoints: `params.bin` holds every parameter as little-endian `f64` in
//! manifest order; `manifest.json` names them with shapes and offsets and
//! carries the training config and its hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{build_model, Model};
use crate::nn::ParameterStore;

pub const FORMAT: &str = "stgt-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in values (not bytes).
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub node_vocab: Vec<usize>,
    pub edge_vocab: Vec<usize>,
    pub epoch: usize,
    pub params: Vec<ParamEntry>,
    pub blob_sha256: String,
}

pub fn save(dir: impl AsRef<Path>, model: &Model, config: &TrainConfig, epoch: usize) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(model.params.num_values() * 8);
    let mut entries = Vec::with_capacity(model.params.len());
    let mut offset = 0;
    for (name, t) in model.params.iter() {
        entries.push(ParamEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        config: config.clone(),
        config_hash: config.hash(),
        node_vocab: model.config.node_vocab.clone(),
        edge_vocab: model.config.edge_vocab.clone(),
        epoch,
        params: entries,
        blob_sha256: hex::encode(Sha256::digest(&blob)),
    };
    std::fs::write(dir.join("params.bin"), &blob)?;
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.as_ref().join("manifest.json"))?)?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{}`", manifest.format)));
    }
    if manifest.config_hash != manifest.config.hash() {
        return Err(Error::Checkpoint("config hash does not match the stored config".into()));
    }
    Ok(manifest)
}

/// Parameter values stored in the checkpoint, keyed by name.
pub fn read_params(dir: impl AsRef<Path>, manifest: &Manifest) -> Result<ParameterStore> {
    let blob = std::fs::read(dir.as_ref().join("params.bin"))?;
    if hex::encode(Sha256::digest(&blob)) != manifest.blob_sha256 {
        return Err(Error::Checkpoint("parameter blob checksum mismatch".into()));
    }
    if blob.len() % 8 != 0 {
        return Err(Error::Checkpoint("parameter blob length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut store = ParameterStore::new();
    for e in &manifest.params {
        let len: usize = e.shape.iter().product();
        let data = values
            .get(e.offset..e.offset + len)
            .ok_or_else(|| Error::Checkpoint(format!("`{}` runs past the end of the blob", e.name)))?;
        store.insert(e.name.clone(), Tensor::new(e.shape.clone(), data.to_vec())?);
    }
    Ok(store)
}

/// Copies checkpoint values into `model`; fails listing every mismatched parameter.
pub fn restore_into(dir: impl AsRef<Path>, model: &mut Model) -> Result<Manifest> {
    let manifest = read_manifest(&dir)?;
    let params = read_params(&dir, &manifest)?;
    model.params.load_from(&params)?;
    Ok(manifest)
}

/// Rebuilds the model described by the manifest and restores its parameters.
pub fn load(dir: impl AsRef<Path>) -> Result<(Model, Manifest)> {
    let manifest = read_manifest(&dir)?;
    let cfg = manifest
        .config
        .model_config(manifest.node_vocab.clone(), manifest.edge_vocab.clone());
    let mut model = build_model(cfg, manifest.config.seed)?;
    let params = read_params(&dir, &manifest)?;
    model.params.load_from(&params)?;
    Ok((model, manifest))
}
