//! Multi-seed comparison of the four architecture variants on one split.

use serde::Serialize;

use crate::config::TrainConfig;
use crate::error::Result;
use crate::graph::{DatasetSplit, ExampleStore};
use crate::model::Variant;
use crate::report::mean_std;
use crate::train::{train, RunRecord};

#[derive(Clone, Debug, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub test_metrics: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Effect {
    pub variant: Variant,
    /// `variant mean - full mean`; positive means the full model has lower error.
    pub gap: f64,
    pub pooled_std: f64,
    /// Gap in units of the pooled std; infinite when both stds are zero.
    pub effect_size: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationResult {
    pub summaries: Vec<VariantSummary>,
}

/// Trains every variant on every seed. `on_run` sees each record as it finishes.
pub fn run_ablation(
    base: &TrainConfig,
    store: &ExampleStore,
    split: &DatasetSplit,
    variants: &[Variant],
    seeds: &[u64],
    mut on_run: impl FnMut(&RunRecord),
) -> Result<AblationResult> {
    let mut summaries = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut test_metrics = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig { variant, seed, ..base.clone() };
            let outcome = train(&cfg, store, split)?;
            on_run(&outcome.record);
            test_metrics.push(outcome.record.final_test_metric);
        }
        let (mean, std) = mean_std(&test_metrics);
        summaries.push(VariantSummary { variant, seeds: seeds.to_vec(), test_metrics, mean, std });
    }
    Ok(AblationResult { summaries })
}

impl AblationResult {
    pub fn get(&self, v: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == v)
    }

    /// Effect of each ablated variant relative to the full model (lower metric is better).
    pub fn effects(&self) -> Vec<Effect> {
        let Some(full) = self.get(Variant::Full) else {
            return Vec::new();
        };
        self.summaries
            .iter()
            .filter(|s| s.variant != Variant::Full)
            .map(|s| {
                let pooled_std = ((full.std.powi(2) + s.std.powi(2)) / 2.0).sqrt();
                let gap = s.mean - full.mean;
                let effect_size = if pooled_std > 0.0 { gap / pooled_std } else { gap.signum() * f64::INFINITY };
                Effect { variant: s.variant, gap, pooled_std, effect_size }
            })
            .collect()
    }

    /// Full strictly best and sum-pool strictly worst.
    pub fn strict_ordering(&self) -> bool {
        let (Some(full), Some(pool)) = (self.get(Variant::Full), self.get(Variant::SumPool)) else {
            return false;
        };
        self.summaries.iter().all(|s| {
            (s.variant == Variant::Full || full.mean < s.mean) && (s.variant == Variant::SumPool || s.mean < pool.mean)
        })
    }

    /// Full is no worse than any variant by more than one pooled std.
    pub fn within_pooled_std(&self) -> bool {
        let effects = self.effects();
        !effects.is_empty() && effects.iter().all(|e| -e.gap <= e.pooled_std)
    }

    pub fn passes(&self) -> bool {
        self.strict_ordering() || self.within_pooled_std()
    }
}
