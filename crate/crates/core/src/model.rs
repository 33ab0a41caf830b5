//! Model assembly: the full serialized-token pipeline and its three ablations.
//!
//! | variant            | readout                                                        |
//! |--------------------|----------------------------------------------------------------|
//! | `full`             | MP → serialize → positional injection → attention → flatten FFN |
//! | `no-serialization` | MP → prepend one learnable token → attention → that token → FFN |
//! | `no-attention`     | MP → serialize → flatten FFN                                    |
//! | `sum-pool`         | MP → Σ_i h_i → FFN                                              |

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttnHooks, Lambda};
use crate::autodiff::{Activation, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::local_mp::{self, MpHooks};
use crate::nn::{gaussian, stream_rng, ParameterStore};
use crate::predictor::{PredictionHead, Task};
use crate::serializer::{self, NoiseMode};

pub const GRAPH_TOKEN: &str = "readout.graph_token";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    NoSerialization,
    NoAttention,
    SumPool,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoSerialization,
        Variant::NoAttention,
        Variant::SumPool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSerialization => "no-serialization",
            Variant::NoAttention => "no-attention",
            Variant::SumPool => "sum-pool",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

/// Architecture hyperparameters plus the label vocabularies of the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub mp_layers: usize,
    pub share_phi: bool,
    pub activation: Activation,
    pub node_vocab: Vec<usize>,
    pub edge_vocab: Vec<usize>,
    pub m: usize,
    pub tau: f64,
    pub noise: NoiseMode,
    pub attn_layers: usize,
    pub dk: usize,
    pub heads: usize,
    pub lambda: f64,
    pub learnable_lambda: bool,
    pub spe_base: f64,
    pub variant: Variant,
    pub task: Task,
    pub mp_hooks: MpHooks,
    pub attn_hooks: AttnHooks,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            mp_layers: 3,
            share_phi: true,
            activation: Activation::Silu,
            node_vocab: vec![1],
            edge_vocab: vec![],
            m: 8,
            tau: 0.1,
            noise: NoiseMode::Gumbel,
            attn_layers: 2,
            dk: 16,
            heads: 1,
            lambda: 0.5,
            learnable_lambda: false,
            spe_base: 10000.0,
            variant: Variant::Full,
            task: Task::Regression,
            mp_hooks: MpHooks::default(),
            attn_hooks: AttnHooks::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d == 0 || self.m == 0 || self.dk == 0 || self.heads == 0 {
            return fail("d, serializer.m, attn.dk and attn.heads must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("serializer.tau must be positive, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("attn.lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.spe_base > 0.0) {
            return fail("attn.spe_base must be positive".into());
        }
        if self.variant == Variant::Full && !self.attn_hooks.spe_off && self.d % 2 != 0 {
            return fail(format!("sinusoidal encoding needs an even d, got {}", self.d));
        }
        if self.node_vocab.is_empty() || self.node_vocab.contains(&0) || self.edge_vocab.contains(&0) {
            return fail("label vocabularies must be non-empty".into());
        }
        Ok(())
    }

    /// Width of the vector the prediction head receives.
    pub fn head_input_width(&self) -> usize {
        match self.variant {
            Variant::Full | Variant::NoAttention => self.m * self.d,
            Variant::NoSerialization | Variant::SumPool => self.d,
        }
    }

    fn uses_serializer(&self) -> bool {
        matches!(self.variant, Variant::Full | Variant::NoAttention)
    }

    fn uses_attention(&self) -> bool {
        matches!(self.variant, Variant::Full | Variant::NoSerialization)
    }
}

/// Whether the forward pass draws Gumbel noise.
pub enum Mode<'a> {
    /// Training pass; noise (if enabled) comes from this stream.
    Train(&'a mut dyn RngCore),
    /// Deterministic pass, serializer noise off.
    Eval,
}

/// Intermediate values captured during a forward pass.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub node_features: Option<Tensor>,
    pub assignment: Option<Tensor>,
    pub tokens: Option<Tensor>,
    pub encoded: Option<Tensor>,
    /// One matrix per layer and head.
    pub attention: Vec<Tensor>,
    pub head_input_width: usize,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterStore,
    spe: Option<Tensor>,
}

/// Allocates and initializes every parameter the configured variant uses.
pub fn build_model(config: ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = stream_rng(seed, 0x5EED, 0);
    let mut params = ParameterStore::new();
    local_mp::init_params(&mut params, &config, &mut rng);
    if config.uses_serializer() {
        serializer::init_params(&mut params, config.m, config.d, &mut rng);
    }
    if config.uses_attention() {
        let mut attn_cfg = config.clone();
        attn_cfg.learnable_lambda &= config.variant == Variant::Full;
        attention::init_params(&mut params, &attn_cfg, &mut rng);
    }
    if config.variant == Variant::NoSerialization {
        params.insert(GRAPH_TOKEN, gaussian(&mut rng, 1, config.d, (1.0 / config.d as f64).sqrt()));
    }
    PredictionHead::new(config.head_input_width(), config.activation).init(&mut params, &mut rng);
    Model::from_parts(config, params)
}

impl Model {
    /// Wraps existing parameters; the store must hold exactly what `config` needs.
    pub fn from_parts(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        let spe = if config.variant == Variant::Full && !config.attn_hooks.spe_off {
            Some(attention::sinusoidal_table(config.m, config.d, config.spe_base)?)
        } else {
            None
        };
        Ok(Self { config, params, spe })
    }

    pub fn head(&self) -> PredictionHead {
        PredictionHead::new(self.config.head_input_width(), self.config.activation)
    }

    /// Records the forward pass on `tape`; returns the `1×1` prediction.
    pub fn forward(&self, tape: &mut Tape, graph: &Graph, mode: Mode<'_>, trace: Option<&mut Trace>) -> Result<Var> {
        self.forward_with(tape, &self.params, graph, mode, trace)
    }

    /// Same as [`Model::forward`] but reads parameters from `params`
    /// (used by the finite-difference oracle to probe perturbed stores).
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: &ParameterStore,
        graph: &Graph,
        mode: Mode<'_>,
        mut trace: Option<&mut Trace>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let h = local_mp::run_local_mp(tape, params, cfg, graph)?;
        if let Some(t) = trace.as_deref_mut() {
            t.node_features = Some(tape.value(h).clone());
        }
        let mut attn_weights = trace.as_ref().map(|_| Vec::new());

        let readout = match cfg.variant {
            Variant::Full | Variant::NoAttention => {
                let noise_rng = match (mode, cfg.noise) {
                    (Mode::Train(rng), NoiseMode::Gumbel) => Some(rng),
                    _ => None,
                };
                let ser = serializer::serialize(tape, params, h, cfg.tau, noise_rng)?;
                if let Some(t) = trace.as_deref_mut() {
                    t.assignment = Some(tape.value(ser.assignment).clone());
                    t.tokens = Some(tape.value(ser.tokens).clone());
                }
                if cfg.variant == Variant::Full {
                    let lambda = if cfg.learnable_lambda {
                        let logit = tape.param(params, attention::LAMBDA_LOGIT)?;
                        Lambda::Learned(tape.sigmoid(logit)?)
                    } else {
                        Lambda::Fixed(cfg.lambda)
                    };
                    let g0 = attention::inject_positional(tape, ser.tokens, ser.basis, lambda, self.spe.as_ref())?;
                    attention::encode(tape, params, cfg, g0, attn_weights.as_mut())?
                } else {
                    ser.tokens
                }
            }
            Variant::NoSerialization => {
                let token = tape.param(params, GRAPH_TOKEN)?;
                let seq = tape.concat_rows(token, h)?;
                let encoded = attention::encode(tape, params, cfg, seq, attn_weights.as_mut())?;
                tape.gather_rows(encoded, &[0])?
            }
            Variant::SumPool => tape.sum_rows(h)?,
        };

        if let Some(t) = trace {
            t.encoded = Some(tape.value(readout).clone());
            t.attention = attn_weights.unwrap_or_default();
            t.head_input_width = tape.value(readout).len();
        }
        self.head().flatten_predict(tape, params, readout)
    }

    /// Deterministic prediction (noise off).
    pub fn predict(&self, graph: &Graph) -> Result<f64> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, graph, Mode::Eval, None)?;
        Ok(tape.scalar(y))
    }

    /// Deterministic prediction together with the captured intermediates.
    pub fn predict_traced(&self, graph: &Graph) -> Result<(f64, Trace)> {
        let mut tape = Tape::new();
        let mut trace = Trace::default();
        let y = self.forward(&mut tape, graph, Mode::Eval, Some(&mut trace))?;
        Ok((tape.scalar(y), trace))
    }
}
