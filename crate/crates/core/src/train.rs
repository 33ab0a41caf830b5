//! Mini-batch training with Adam, per-epoch validation, best-epoch selection.
//!
//! Batches over variable-size graphs are handled by running one forward and
//! backward pass per graph and summing gradients in example order, so a run
//! is fully determined by `(config, data)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::checkpoint;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{load_split_files, split_dataset, DatasetSplit, ExampleStore};
use crate::model::{build_model, Mode, Model};
use crate::nn::{stream_rng, ParameterStore};
use crate::predictor::{self, MetricRecord, Task};

/// Adaptive-moment gradient descent.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Parameters absent from `grads` are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name);
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; p.len()]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; p.len()]);
            for (k, x) in p.data_mut().iter_mut().enumerate() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let update = (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
                *x -= self.lr * update;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub seed: u64,
    pub metric: String,
    /// Train-split metric of the freshly initialized model.
    pub initial_train_metric: f64,
    /// Train-split metric after the last epoch.
    pub final_train_metric: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the best validation metric; earliest on ties.
    pub selected_epoch: usize,
    pub selected_val_metric: f64,
    /// Test metric of the selected epoch.
    pub final_test_metric: f64,
}

impl RunRecord {
    /// Epoch index (1-based) achieving the best validation metric, earliest on ties.
    pub fn argbest_validation(&self) -> usize {
        let task = self.config.task;
        let mut best = &self.epochs[0];
        for e in &self.epochs[1..] {
            if task.better(e.val_metric, best.val_metric) {
                best = e;
            }
        }
        best.epoch
    }
}

pub struct TrainOutcome {
    pub record: RunRecord,
    /// Parameters of the selected epoch.
    pub best: Model,
    /// Parameters after the last epoch.
    pub last: Model,
}

impl TrainOutcome {
    /// One JSON object per epoch.
    pub fn log_jsonl(&self) -> String {
        self.record
            .epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializes") + "\n")
            .collect()
    }
}

/// Deterministic predictions (serializer noise off) for the given examples.
pub fn predict_indices(model: &Model, store: &ExampleStore, indices: &[usize]) -> Result<Vec<f64>> {
    indices.iter().map(|&i| model.predict(&store.get(i).graph)).collect()
}

pub fn metric_value(task: Task, predictions: &[f64], targets: &[f64]) -> Result<f64> {
    match task {
        Task::Regression => predictor::mean_absolute_error(predictions, targets),
        Task::Classification => {
            let labels: Vec<bool> = targets.iter().map(|&t| t == 1.0).collect();
            predictor::metric_auc(predictions, &labels)
        }
    }
}

/// Task metric of `model` over `indices`; noise is always off here.
pub fn evaluate(model: &Model, store: &ExampleStore, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let preds = predict_indices(model, store, indices)?;
    let targets: Vec<f64> = indices.iter().map(|&i| store.get(i).target).collect();
    metric_value(model.config.task, &preds, &targets)
}

fn divergence_from(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NumericDomain { .. } => Error::Divergence { epoch, batch },
        other => other,
    }
}

/// Loss and summed parameter gradients over one batch, in example order.
fn batch_gradients(
    model: &Model,
    store: &ExampleStore,
    batch: &[usize],
    seed: u64,
    epoch: usize,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut total = 0.0;
    let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
    for &id in batch {
        let ex = store.get(id);
        let mut rng = stream_rng(seed, id as u64, epoch as u64);
        let mut tape = Tape::new();
        let y = model.forward(&mut tape, &ex.graph, Mode::Train(&mut rng), None)?;
        let l = predictor::loss(&mut tape, y, ex.target, model.config.task)?;
        total += tape.scalar(l);
        for (name, g) in tape.backward(l)?.params() {
            match acc.get_mut(&name) {
                Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y),
                None => {
                    acc.insert(name, g);
                }
            }
        }
    }
    Ok((total, acc))
}

pub fn train(config: &TrainConfig, store: &ExampleStore, split: &DatasetSplit) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate(store.len(), false)?;
    for (name, idx) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        if idx.is_empty() {
            return Err(Error::Data(format!("{name} split is empty")));
        }
    }
    if config.task == Task::Classification {
        store.validate_binary_targets()?;
    }
    let (node_vocab, edge_vocab) = store.vocab();
    let mut model = build_model(config.model_config(node_vocab, edge_vocab), config.seed)?;
    let mut adam = Adam::new(config.lr);
    let task = config.task;

    let initial_train_metric = evaluate(&model, store, &split.train)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, f64, ParameterStore)> = None;
    let mut order = split.train.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream_rng(config.seed, u64::MAX, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, mut grads) = batch_gradients(&model, store, batch, config.seed, epoch)
                .map_err(|e| divergence_from(e, epoch, b))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            loss_sum += loss;
            let scale = 1.0 / batch.len() as f64;
            for g in grads.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut model.params, &grads);
        }
        let val_metric = evaluate(&model, store, &split.valid)?;
        let test_metric = evaluate(&model, store, &split.test)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_metric,
            test_metric,
        });
        let improved = best.as_ref().is_none_or(|(_, v, _, _)| task.better(val_metric, *v));
        if improved {
            best = Some((epoch, val_metric, test_metric, model.params.clone()));
        }
    }

    let final_train_metric = evaluate(&model, store, &split.train)?;
    let (selected_epoch, selected_val_metric, final_test_metric, best_params) =
        best.expect("at least one epoch");
    let best_model = Model::from_parts(model.config.clone(), best_params)?;
    Ok(TrainOutcome {
        record: RunRecord {
            config: config.clone(),
            seed: config.seed,
            metric: task.metric_name().to_string(),
            initial_train_metric,
            final_train_metric,
            epochs,
            selected_epoch,
            selected_val_metric,
            final_test_metric,
        },
        best: best_model,
        last: model,
    })
}

/// Writes `log.jsonl`, `record.json`, `metrics.jsonl` and the selected-epoch
/// checkpoint under `out`.
pub fn write_run(out: impl AsRef<Path>, outcome: &TrainOutcome) -> Result<()> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("log.jsonl"), outcome.log_jsonl())?;
    std::fs::write(
        out.join("record.json"),
        serde_json::to_string_pretty(&outcome.record)? + "\n",
    )?;
    let r = &outcome.record;
    let metrics = [
        ("valid", r.selected_val_metric),
        ("test", r.final_test_metric),
    ]
    .into_iter()
    .map(|(split, value)| {
        serde_json::to_string(&MetricRecord {
            metric: r.metric.clone(),
            value,
            split: split.into(),
            seed: r.seed,
        })
        .expect("serializes")
            + "\n"
    })
    .collect::<String>();
    std::fs::write(out.join("metrics.jsonl"), metrics)?;
    checkpoint::save(out.join("checkpoint"), &outcome.best, &r.config, r.selected_epoch)
}

pub fn load_record(path: impl AsRef<Path>) -> Result<RunRecord> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Split files from `dir` when given, otherwise a seeded random split from the config.
pub fn resolve_split(config: &TrainConfig, n: usize, dir: Option<&Path>) -> Result<DatasetSplit> {
    match dir {
        Some(d) => load_split_files(d, n),
        None => split_dataset(n, config.split_fractions, config.split_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, split_dataset, SynthSpec, SynthTask};

    fn small() -> (ExampleStore, DatasetSplit) {
        let store = generate_synthetic(&SynthSpec::new(SynthTask::TriangleCount, 30, 3, 7, 1)).unwrap();
        let split = split_dataset(store.len(), [0.6, 0.2, 0.2], 0).unwrap();
        (store, split)
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            d: 4,
            mp_layers: 1,
            m: 3,
            attn_layers: 1,
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_zero_lr_is_a_no_op() {
        let mut p = ParameterStore::new();
        p.insert("w", Tensor::row(vec![1.0, -2.0]));
        let before = p.clone();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::row(vec![0.5, 3.0]));
        let mut adam = Adam::new(0.0);
        for _ in 0..5 {
            adam.step(&mut p, &grads);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParameterStore::new();
        p.insert("w", Tensor::row(vec![1.0, -2.0]));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::row(vec![0.5, -3.0]));
        Adam::new(0.1).step(&mut p, &grads);
        let w = p.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn selected_epoch_is_argbest() {
        let (store, split) = small();
        let out = train(&tiny_config(), &store, &split).unwrap();
        let r = &out.record;
        assert_eq!(r.epochs.len(), 3);
        assert_eq!(r.selected_epoch, r.argbest_validation());
        assert_eq!(r.selected_val_metric, r.epochs[r.selected_epoch - 1].val_metric);
        assert_eq!(evaluate(&out.best, &store, &split.valid).unwrap(), r.selected_val_metric);
        assert_eq!(evaluate(&out.best, &store, &split.test).unwrap(), r.final_test_metric);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (store, split) = small();
        let cfg = TrainConfig { lr: 0.0, ..tiny_config() };
        let out = train(&cfg, &store, &split).unwrap();
        let fresh = build_model(out.last.config.clone(), cfg.seed).unwrap();
        assert_eq!(out.last.params, fresh.params);
    }

    #[test]
    fn empty_split_rejected() {
        let (store, _) = small();
        let split = DatasetSplit {
            train: (0..20).collect(),
            valid: (20..30).collect(),
            test: vec![],
        };
        assert!(matches!(train(&tiny_config(), &store, &split), Err(Error::Data(_))));
        let model = build_model(tiny_config().model_config(vec![4], vec![3]), 0).unwrap();
        assert!(evaluate(&model, &store, &[]).is_err());
    }

    #[test]
    fn divergence_names_the_batch() {
        let (store, split) = small();
        let cfg = TrainConfig { lr: 1e300, ..tiny_config() };
        match train(&cfg, &store, &split) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.record.selected_epoch)),
        }
    }

    #[test]
    fn classification_requires_binary_targets() {
        let (store, split) = small();
        let cfg = TrainConfig { task: Task::Classification, ..tiny_config() };
        assert!(train(&cfg, &store, &split).is_err());
    }
}
