//! Flat key-value training configuration (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::predictor::Task;
use crate::serializer::NoiseMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d: usize,
    pub mp_layers: usize,
    #[serde(rename = "mp.share_phi")]
    pub share_phi: bool,
    pub activation: Activation,
    #[serde(rename = "serializer.m")]
    pub m: usize,
    #[serde(rename = "serializer.tau")]
    pub tau: f64,
    #[serde(rename = "serializer.noise")]
    pub noise: NoiseMode,
    #[serde(rename = "attn.layers")]
    pub attn_layers: usize,
    /// Defaults to `d`.
    #[serde(rename = "attn.dk")]
    pub dk: Option<usize>,
    #[serde(rename = "attn.heads")]
    pub heads: usize,
    #[serde(rename = "attn.lambda")]
    pub lambda: f64,
    #[serde(rename = "attn.learnable_lambda")]
    pub learnable_lambda: bool,
    #[serde(rename = "attn.spe_base")]
    pub spe_base: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub task: Task,
    pub variant: Variant,
    /// Train/validation/test fractions used when no split files are given.
    #[serde(rename = "split.fractions")]
    pub split_fractions: [f64; 3],
    /// Shared by every training seed so that runs differ only in initialization and noise.
    #[serde(rename = "split.seed")]
    pub split_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 16,
            mp_layers: 3,
            share_phi: true,
            activation: Activation::Silu,
            m: 8,
            tau: 0.1,
            noise: NoiseMode::Gumbel,
            attn_layers: 2,
            dk: None,
            heads: 1,
            lambda: 0.5,
            learnable_lambda: false,
            spe_base: 10000.0,
            lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            task: Task::Regression,
            variant: Variant::Full,
            split_fractions: [0.8, 0.1, 0.1],
            split_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 || self.heads == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "d, serializer.m, attn.heads, batch_size and epochs must be positive".into(),
            ));
        }
        if self.dk == Some(0) {
            return Err(Error::Config("attn.dk must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("serializer.tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("attn.lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }

    pub fn model_config(&self, node_vocab: Vec<usize>, edge_vocab: Vec<usize>) -> ModelConfig {
        ModelConfig {
            d: self.d,
            mp_layers: self.mp_layers,
            share_phi: self.share_phi,
            activation: self.activation,
            node_vocab,
            edge_vocab,
            m: self.m,
            tau: self.tau,
            noise: self.noise,
            attn_layers: self.attn_layers,
            dk: self.dk.unwrap_or(self.d),
            heads: self.heads,
            lambda: self.lambda,
            learnable_lambda: self.learnable_lambda,
            spe_base: self.spe_base,
            variant: self.variant,
            task: self.task,
            ..ModelConfig::default()
        }
    }

    /// The same configuration with the training seed zeroed, for comparing runs.
    pub fn without_seed(&self) -> TrainConfig {
        TrainConfig { seed: 0, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
