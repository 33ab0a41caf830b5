//! Flatten-and-predict head, training losses and evaluation metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Ffn, ParameterStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Regression,
    Classification,
}

impl Task {
    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Regression => "mae",
            Task::Classification => "auc",
        }
    }

    /// True when `a` is a strictly better metric value than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Task::Regression => a < b,
            Task::Classification => a > b,
        }
    }
}

/// Two-layer FFN from a flattened representation of width `input` to one output.
#[derive(Clone, Debug)]
pub struct PredictionHead {
    pub input: usize,
    pub hidden: usize,
    ffn: Ffn,
}

impl PredictionHead {
    /// Hidden width is `input / 2` rounded up.
    pub fn new(input: usize, activation: Activation) -> Self {
        Self {
            input,
            hidden: input.div_ceil(2),
            ffn: Ffn::new("head", activation),
        }
    }

    pub fn init(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.ffn.init(store, rng, self.input, self.hidden, 1);
    }

    /// Row-major flattening of `tokens` into `1×(rows·cols)`.
    pub fn flatten(&self, tape: &mut Tape, tokens: Var) -> Result<Var> {
        let len = tape.value(tokens).len();
        if len != self.input {
            return Err(Error::Config(format!(
                "prediction head expects {} inputs, got {:?}",
                self.input,
                tape.value(tokens).shape()
            )));
        }
        tape.reshape(tokens, vec![1, len])
    }

    /// Raw value for regression, logit for classification; `1×1`.
    pub fn flatten_predict(&self, tape: &mut Tape, store: &ParameterStore, tokens: Var) -> Result<Var> {
        let flat = self.flatten(tape, tokens)?;
        self.ffn.forward(tape, store, flat)
    }
}

/// Per-example training loss: `|y − t|` or binary cross-entropy on the logit.
pub fn loss(tape: &mut Tape, prediction: Var, target: f64, task: Task) -> Result<Var> {
    match task {
        Task::Regression => {
            let t = tape.constant(crate::autodiff::Tensor::scalar(target))?;
            let diff = tape.sub(prediction, t)?;
            tape.abs(diff)
        }
        Task::Classification => tape.bce_logits(prediction, &[target]),
    }
}

pub fn mean_absolute_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::UndefinedMetric("MAE needs equal, non-empty inputs".into()));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / predictions.len() as f64)
}

pub fn binary_cross_entropy(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::UndefinedMetric("BCE needs equal, non-empty inputs".into()));
    }
    let total: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z)
        .sum();
    Ok(total / logits.len() as f64)
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ordered
/// correctly, ties counting one half. Computed from average ranks.
pub fn metric_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::UndefinedMetric("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("metric_auc", "non-finite score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// One line of the metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub split: String,
    pub seed: u64,
}
