//! Per-module gradient verification against central differences, on a fixed
//! 5-node graph with `M = 3`, `d = 4`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::attention::{self, Lambda};
use crate::autodiff::{check_parameters, finite_difference_check, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::local_mp;
use crate::model::{build_model, Mode, Model, ModelConfig, Variant};
use crate::nn::{gaussian, stream_rng, ParameterStore};
use crate::predictor::{self, Task};
use crate::serializer;

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradModule {
    Mp,
    Serializer,
    Attn,
    Head,
    /// Full composite loss over every parameter.
    Model,
}

impl GradModule {
    pub const ALL: [GradModule; 5] = [
        GradModule::Mp,
        GradModule::Serializer,
        GradModule::Attn,
        GradModule::Head,
        GradModule::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradModule::Mp => "mp",
            GradModule::Serializer => "serializer",
            GradModule::Attn => "attn",
            GradModule::Head => "head",
            GradModule::Model => "model",
        }
    }

    /// `all` expands to every module plus the composite.
    pub fn parse_selection(s: &str) -> Result<Vec<GradModule>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .map(|m| vec![m])
            .ok_or_else(|| Error::Config(format!("unknown gradcheck module `{s}`")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub module: GradModule,
    pub max_relative_error: f64,
    pub coordinates: usize,
    pub worst: String,
    pub passed: bool,
}

/// 5-node graph with a triangle, a pendant and mixed labels.
pub fn fixture_graph() -> Graph {
    Graph::undirected(
        vec![vec![0], vec![1], vec![2], vec![1], vec![0]],
        &[(0, 1, vec![0]), (1, 2, vec![1]), (2, 0, vec![0]), (2, 3, vec![1]), (3, 4, vec![0])],
    )
    .expect("valid fixture")
}

pub fn fixture_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d: 4,
        dk: 4,
        m: 3,
        mp_layers: 2,
        attn_layers: 2,
        node_vocab: vec![3],
        edge_vocab: vec![2],
        variant,
        ..ModelConfig::default()
    }
}

/// Fixture model with every parameter nudged away from its initial value so
/// that zero-initialized scalars (such as `ε`) are exercised generically.
pub fn fixture_model(variant: Variant) -> Result<Model> {
    let mut model = build_model(fixture_config(variant), 11)?;
    let mut rng = stream_rng(11, 1, 1);
    for (_, t) in model.params.iter_mut() {
        let noise = gaussian(&mut rng, t.rows(), t.cols(), 0.1);
        t.data_mut().iter_mut().zip(noise.data()).for_each(|(x, n)| *x += n);
    }
    Ok(model)
}

fn weighted_sum(tape: &mut Tape, x: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone())?;
    let p = tape.mul(x, w)?;
    tape.sum_all(p)
}

fn names_with(store: &ParameterStore, prefixes: &[&str]) -> Vec<String> {
    store
        .names()
        .into_iter()
        .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
        .collect()
}

fn summarize(module: GradModule, checks: Vec<(String, f64, usize)>) -> GradReport {
    let (worst, max) = checks
        .iter()
        .fold((String::new(), 0.0f64), |(wn, we), (n, e, _)| if *e > we { (n.clone(), *e) } else { (wn, we) });
    GradReport {
        module,
        max_relative_error: max,
        coordinates: checks.iter().map(|c| c.2).sum(),
        worst,
        passed: max < TOLERANCE,
    }
}

fn param_checks<F>(store: &ParameterStore, names: &[String], loss: F) -> Result<Vec<(String, f64, usize)>>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var>,
{
    let f = |s: &ParameterStore| -> Result<(f64, BTreeMap<String, Tensor>)> {
        let mut tape = Tape::new();
        let l = loss(&mut tape, s)?;
        Ok((tape.scalar(l), tape.backward(l)?.params()))
    };
    Ok(check_parameters(store, names, EPSILON, f)?
        .into_iter()
        .map(|c| (c.name, c.max_relative_error, c.coordinates))
        .collect())
}

fn input_check<F>(name: &str, point: &Tensor, loss: F) -> Result<(String, f64, usize)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let err = finite_difference_check(
        |p| {
            let mut tape = Tape::new();
            let x = tape.variable(p.clone())?;
            let l = loss(&mut tape, x)?;
            Ok((tape.scalar(l), tape.backward(l)?.get(x)))
        },
        point,
        EPSILON,
    )?;
    Ok((name.to_string(), err, point.len()))
}

fn check_mp() -> Result<GradReport> {
    let model = fixture_model(Variant::Full)?;
    let graph = fixture_graph();
    let weights = gaussian(&mut stream_rng(21, 0, 0), graph.num_nodes(), 4, 1.0);
    let names = names_with(&model.params, &["embed.", "mp."]);
    let checks = param_checks(&model.params, &names, |tape, s| {
        let h = local_mp::run_local_mp(tape, s, &model.config, &graph)?;
        weighted_sum(tape, h, &weights)
    })?;
    Ok(summarize(GradModule::Mp, checks))
}

fn check_serializer() -> Result<GradReport> {
    let model = fixture_model(Variant::Full)?;
    let mut rng = stream_rng(22, 0, 0);
    let h = gaussian(&mut rng, 5, 4, 0.7);
    let weights = gaussian(&mut rng, 3, 4, 1.0);
    let tau = model.config.tau;
    let names = vec![serializer::BASIS.to_string()];
    let mut checks = param_checks(&model.params, &names, |tape, s| {
        let hv = tape.constant(h.clone())?;
        let out = serializer::serialize(tape, s, hv, tau, None)?;
        weighted_sum(tape, out.tokens, &weights)
    })?;
    checks.push(input_check("node features", &h, |tape, hv| {
        let out = serializer::serialize(tape, &model.params, hv, tau, None)?;
        weighted_sum(tape, out.tokens, &weights)
    })?);
    Ok(summarize(GradModule::Serializer, checks))
}

fn check_attn() -> Result<GradReport> {
    let model = fixture_model(Variant::Full)?;
    let mut rng = stream_rng(23, 0, 0);
    let tokens = gaussian(&mut rng, 3, 4, 1.0);
    let weights = gaussian(&mut rng, 3, 4, 1.0);
    let spe = attention::sinusoidal_table(3, 4, model.config.spe_base)?;
    let cfg = &model.config;
    let encode = |tape: &mut Tape, s: &ParameterStore, g: Var| -> Result<Var> {
        let b = tape.param(s, serializer::BASIS)?;
        let g0 = attention::inject_positional(tape, g, b, Lambda::Fixed(cfg.lambda), Some(&spe))?;
        let out = attention::encode(tape, s, cfg, g0, None)?;
        weighted_sum(tape, out, &weights)
    };
    let names = names_with(&model.params, &["attn.", serializer::BASIS]);
    let mut checks = param_checks(&model.params, &names, |tape, s| {
        let g = tape.constant(tokens.clone())?;
        encode(tape, s, g)
    })?;
    checks.push(input_check("graph tokens", &tokens, |tape, g| encode(tape, &model.params, g))?);
    Ok(summarize(GradModule::Attn, checks))
}

fn check_head() -> Result<GradReport> {
    let model = fixture_model(Variant::Full)?;
    let tokens = gaussian(&mut stream_rng(24, 0, 0), 3, 4, 1.0);
    let head = model.head();
    let target = {
        let mut tape = Tape::new();
        let g = tape.constant(tokens.clone())?;
        let y = head.flatten_predict(&mut tape, &model.params, g)?;
        tape.scalar(y) + 5.0
    };
    let names = names_with(&model.params, &["head."]);
    let mut checks = param_checks(&model.params, &names, |tape, s| {
        let g = tape.constant(tokens.clone())?;
        let y = head.flatten_predict(tape, s, g)?;
        predictor::loss(tape, y, target, Task::Regression)
    })?;
    checks.push(input_check("graph tokens", &tokens, |tape, g| {
        let y = head.flatten_predict(tape, &model.params, g)?;
        predictor::loss(tape, y, target, Task::Regression)
    })?);
    Ok(summarize(GradModule::Head, checks))
}

fn check_model() -> Result<GradReport> {
    let model = fixture_model(Variant::Full)?;
    let graph = fixture_graph();
    let target = model.predict(&graph)? + 5.0;
    let names = model.params.names();
    let checks = param_checks(&model.params, &names, |tape, s| {
        let y = model.forward_with(tape, s, &graph, Mode::Eval, None)?;
        predictor::loss(tape, y, target, Task::Regression)
    })?;
    Ok(summarize(GradModule::Model, checks))
}

pub fn run(module: GradModule) -> Result<GradReport> {
    match module {
        GradModule::Mp => check_mp(),
        GradModule::Serializer => check_serializer(),
        GradModule::Attn => check_attn(),
        GradModule::Head => check_head(),
        GradModule::Model => check_model(),
    }
}
