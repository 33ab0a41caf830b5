use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index lists over one example store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    /// Disjoint, in range, and (when `require_cover`) covering `0..n`.
    pub fn validate(&self, n: usize, require_cover: bool) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, idx) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for &i in idx {
                if i >= n {
                    return Err(Error::Data(format!("{name} index {i} out of range for {n} examples")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Data(format!("index {i} appears in more than one split")));
                }
            }
        }
        if require_cover && seen.iter().any(|s| !s) {
            return Err(Error::Data("split does not cover the store".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle followed by contiguous slicing.
pub fn split_dataset(n: usize, fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if n < 3 {
        return Err(Error::Data(format!("cannot split {n} examples (need at least 3)")));
    }
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = order.split_off(n_train + n_valid);
    let valid = order.split_off(n_train);
    Ok(DatasetSplit {
        train: order,
        valid,
        test,
    })
}

fn read_idx(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse::<usize>().map_err(|e| Error::Parse {
                line: k + 1,
                field: path.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads `train.idx`, `valid.idx` and `test.idx` from `dir`.
/// External splits may leave examples unused; they must be disjoint and in range.
pub fn load_split_files(dir: impl AsRef<Path>, n: usize) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let split = DatasetSplit {
        train: read_idx(&dir.join("train.idx"))?,
        valid: read_idx(&dir.join("valid.idx"))?,
        test: read_idx(&dir.join("test.idx"))?,
    };
    split.validate(n, false)?;
    Ok(split)
}

pub fn write_split_files(split: &DatasetSplit, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (name, idx) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let body: String = idx.iter().map(|i| format!("{i}\n")).collect();
        std::fs::write(dir.join(format!("{name}.idx")), body)?;
    }
    Ok(())
}
