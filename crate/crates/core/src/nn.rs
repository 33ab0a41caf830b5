//! Parameter storage and the small building blocks shared by every module.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Activation, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// All learnables of a model, keyed by dotted name (`mp.0.epsilon`, `serializer.basis`, ...).
/// Iteration order is the lexicographic name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Overwrites this store's values with `other`'s, requiring identical names and shapes.
    pub fn load_from(&mut self, other: &ParameterStore) -> Result<()> {
        let mut mismatches = Vec::new();
        for (name, t) in &self.params {
            match other.get(name) {
                None => mismatches.push(format!("`{name}` missing (expected {:?})", t.shape())),
                Some(o) if o.shape() != t.shape() => mismatches.push(format!(
                    "`{name}`: expected {:?}, found {:?}",
                    t.shape(),
                    o.shape()
                )),
                Some(_) => {}
            }
        }
        for name in other.params.keys() {
            if !self.params.contains_key(name) {
                mismatches.push(format!("`{name}` unexpected"));
            }
        }
        if !mismatches.is_empty() {
            return Err(Error::IncompatibleCheckpoint { mismatches });
        }
        for (name, t) in self.params.iter_mut() {
            *t = other.params[name].clone();
        }
        Ok(())
    }
}

/// `ChaCha8` stream keyed by a seed and two further coordinates
/// (for example an example id and an epoch).
pub fn stream_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b.rotate_left(32));
    ChaCha8Rng::seed_from_u64(key)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::matrix(rows, cols, data).expect("shape matches")
}

/// Two-layer perceptron `act(x·W1 + b1)·W2 + b2`, applied row-wise.
#[derive(Clone, Debug)]
pub struct Ffn {
    pub prefix: String,
    pub activation: Activation,
}

impl Ffn {
    pub fn new(prefix: impl Into<String>, activation: Activation) -> Self {
        Self {
            prefix: prefix.into(),
            activation,
        }
    }

    /// Registers `{prefix}.w1/b1/w2/b2` with fan-in scaled Gaussian weights and zero biases.
    pub fn init(
        &self,
        store: &mut ParameterStore,
        rng: &mut impl Rng,
        input: usize,
        hidden: usize,
        output: usize,
    ) {
        let p = &self.prefix;
        store.insert(format!("{p}.w1"), gaussian(rng, input, hidden, (1.0 / input as f64).sqrt()));
        store.insert(format!("{p}.b1"), Tensor::zeros(1, hidden));
        store.insert(format!("{p}.w2"), gaussian(rng, hidden, output, (1.0 / hidden as f64).sqrt()));
        store.insert(format!("{p}.b2"), Tensor::zeros(1, output));
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let p = &self.prefix;
        let w1 = tape.param(store, &format!("{p}.w1"))?;
        let b1 = tape.param(store, &format!("{p}.b1"))?;
        let w2 = tape.param(store, &format!("{p}.w2"))?;
        let b2 = tape.param(store, &format!("{p}.b2"))?;
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.activation(h, self.activation)?;
        let o = tape.matmul(h, w2)?;
        tape.add_row(o, b2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_rng_is_deterministic_and_keyed() {
        let a: u64 = stream_rng(7, 1, 2).random();
        let b: u64 = stream_rng(7, 1, 2).random();
        let c: u64 = stream_rng(7, 2, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn load_from_lists_mismatches() {
        let mut a = ParameterStore::new();
        a.insert("x", Tensor::zeros(2, 2));
        a.insert("y", Tensor::zeros(1, 3));
        let mut b = ParameterStore::new();
        b.insert("x", Tensor::zeros(2, 3));
        b.insert("z", Tensor::zeros(1, 1));
        let err = a.load_from(&b).unwrap_err();
        match err {
            Error::IncompatibleCheckpoint { mismatches } => assert_eq!(mismatches.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_ffn_outputs_zero() {
        let mut store = ParameterStore::new();
        let ffn = Ffn::new("f", Activation::Silu);
        ffn.init(&mut store, &mut stream_rng(0, 0, 0), 3, 4, 2);
        for (_, t) in store.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(2, 3, 1.5)).unwrap();
        let y = ffn.forward(&mut tape, &store, x).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }
}
