//! Multi-seed aggregation of run records into `mean ± std`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::RunRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub split: String,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub formatted: String,
}

/// `(mean, population std)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Three decimals for MAE, four for AUC.
pub fn format_mean_std(metric: &str, mean: f64, std: f64) -> String {
    let digits = if metric == "auc" { 4 } else { 3 };
    format!("{mean:.digits$} ± {std:.digits$}")
}

/// `record.json` under `dir` itself or one level below it.
pub fn find_records(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let direct = dir.join("record.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path().join("record.json");
        if path.is_file() {
            found.push(path);
        }
    }
    if found.is_empty() {
        return Err(Error::Data(format!("no record.json under {}", dir.display())));
    }
    found.sort();
    Ok(found)
}

/// Aggregates the selected-epoch test metric across runs that differ only in seed.
pub fn report(records: &[RunRecord]) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Data("report needs at least one run".into()))?;
    let reference = first.config.without_seed();
    for r in records {
        if r.config.without_seed() != reference {
            return Err(Error::Config(format!(
                "run with seed {} has a different configuration",
                r.seed
            )));
        }
        if r.selected_epoch != r.argbest_validation() {
            return Err(Error::Data(format!(
                "run with seed {} selected epoch {} but the best validation epoch is {}",
                r.seed,
                r.selected_epoch,
                r.argbest_validation()
            )));
        }
    }
    let values: Vec<f64> = records.iter().map(|r| r.final_test_metric).collect();
    let (mean, std) = mean_std(&values);
    Ok(Summary {
        metric: first.metric.clone(),
        split: "test".into(),
        seeds: records.iter().map(|r| r.seed).collect(),
        formatted: format_mean_std(&first.metric, mean, std),
        values,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::train::EpochRecord;

    fn record(seed: u64, test: f64) -> RunRecord {
        RunRecord {
            config: TrainConfig { seed, ..TrainConfig::default() },
            seed,
            metric: "mae".into(),
            initial_train_metric: 1.0,
            final_train_metric: 0.5,
            epochs: vec![
                EpochRecord { epoch: 1, train_loss: 1.0, val_metric: 0.3, test_metric: 0.4 },
                EpochRecord { epoch: 2, train_loss: 0.5, val_metric: 0.2, test_metric: test },
            ],
            selected_epoch: 2,
            selected_val_metric: 0.2,
            final_test_metric: test,
        }
    }

    #[test]
    fn single_record_has_zero_std() {
        let s = report(&[record(0, 0.07)]).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.07);
    }

    #[test]
    fn two_point_statistics() {
        let s = report(&[record(0, 0.05), record(1, 0.06)]).unwrap();
        assert!((s.mean - 0.055).abs() < 1e-15);
        assert!((s.std - 0.005).abs() < 1e-15);
        assert_eq!(s.formatted, "0.055 ± 0.005");
    }

    #[test]
    fn mixed_configs_rejected() {
        let mut other = record(1, 0.06);
        other.config.d = 32;
        assert!(matches!(report(&[record(0, 0.05), other]), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_selection_rejected() {
        let mut r = record(0, 0.05);
        r.selected_epoch = 1;
        assert!(report(&[r]).is_err());
    }

    #[test]
    fn auc_uses_four_decimals() {
        assert_eq!(format_mean_std("auc", 0.81634, 0.00381), "0.8163 ± 0.0038");
    }
}
