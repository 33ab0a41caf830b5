//! Graph serialization: node features are softly assigned to `M` ordered
//! basis tokens and pooled into an `M×d` token sequence.
//!
//! ```text
//! s'_ij = 1 / (1 + ||h_i − b_j||²)
//! s_ij  = softmax_j((s'_ij + t_ij) / τ)      t_ij ~ Gumbel(0, 1) or 0
//! g_j   = Σ_i s_ij · h_i                    (G = Sᵀ H)
//! ```
//!
//! The basis rows are returned alongside the tokens and serve as learnable
//! positional encodings downstream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{gaussian, ParameterStore};

pub const BASIS: &str = "serializer.basis";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Gumbel,
    Off,
}

/// `B ~ N(0, 1/d)`, shape `M×d`.
pub fn init_params(store: &mut ParameterStore, m: usize, d: usize, rng: &mut impl Rng) {
    store.insert(BASIS, gaussian(rng, m, d, (1.0 / d as f64).sqrt()));
}

/// Standard Gumbel sample `−ln(−ln u)`, `u ∈ (0, 1)`.
pub fn sample_gumbel(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u.ln()).ln();
        }
    }
}

pub fn gumbel_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| sample_gumbel(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches")
}

/// `s'_ij = 1 / (1 + ||h_i − b_j||²)`, shape `N×M`.
pub fn similarity_scores(tape: &mut Tape, h: Var, basis: Var) -> Result<Var> {
    let dist = tape.sq_dist(h, basis)?;
    tape.recip_one_plus(dist)
}

/// Row-wise Gumbel softmax at temperature `tau`. `noise` is `Some(t)` with an
/// `N×M` Gumbel sample, or `None` for the noise-free softmax.
pub fn gumbel_normalize(tape: &mut Tape, scores: Var, tau: f64, noise: Option<Tensor>) -> Result<Var> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("serializer temperature must be positive, got {tau}")));
    }
    let perturbed = match noise {
        Some(t) => {
            let t = tape.constant(t)?;
            tape.add(scores, t)?
        }
        None => scores,
    };
    let sharpened = tape.scale(perturbed, 1.0 / tau)?;
    tape.softmax_rows(sharpened)
}

/// `G = Sᵀ H`; the sum over nodes runs in node index order.
pub fn aggregate_tokens(tape: &mut Tape, assignment: Var, h: Var) -> Result<Var> {
    let st = tape.transpose(assignment)?;
    tape.matmul(st, h)
}

/// Outputs of [`serialize`].
#[derive(Clone, Copy, Debug)]
pub struct Serialized {
    pub tokens: Var,
    pub basis: Var,
    pub assignment: Var,
}

/// Similarity, normalization and aggregation in one step.
/// With `noise_rng = None` the result is invariant to node permutations.
pub fn serialize(
    tape: &mut Tape,
    store: &ParameterStore,
    h: Var,
    tau: f64,
    noise_rng: Option<&mut dyn rand::RngCore>,
) -> Result<Serialized> {
    let basis = tape.param(store, BASIS)?;
    let scores = similarity_scores(tape, h, basis)?;
    let noise = noise_rng.map(|mut rng| {
        let shape = tape.value(scores);
        gumbel_matrix(&mut rng, shape.rows(), shape.cols())
    });
    let assignment = gumbel_normalize(tape, scores, tau, noise)?;
    let tokens = aggregate_tokens(tape, assignment, h)?;
    Ok(Serialized {
        tokens,
        basis,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::stream_rng;

    fn scores_of(h: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Tensor {
        let mut t = Tape::new();
        let h = t.constant(Tensor::from_rows(&h).unwrap()).unwrap();
        let b = t.constant(Tensor::from_rows(&b).unwrap()).unwrap();
        let s = similarity_scores(&mut t, h, b).unwrap();
        t.value(s).clone()
    }

    #[test]
    fn similarity_examples() {
        let s = scores_of(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![vec![1.0, 2.0], vec![0.0, 0.0], vec![1.0, 3.0]]);
        assert_eq!(s.at(0, 0), 1.0);
        assert_eq!(s.at(0, 2), 0.5);
        assert!((s.at(1, 1) - 1.0 / 26.0).abs() < 1e-15);
        assert!((s.at(1, 1) - 0.038462).abs() < 1e-6);
        assert!(s.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    fn normalize(raw: Tensor, tau: f64, noise: Option<Tensor>) -> Result<Tensor> {
        let mut t = Tape::new();
        let r = t.constant(raw)?;
        let s = gumbel_normalize(&mut t, r, tau, noise)?;
        Ok(t.value(s).clone())
    }

    #[test]
    fn equal_scores_are_uniform() {
        for tau in [0.01, 0.1, 1.0, 10.0] {
            let s = normalize(Tensor::filled(3, 4, 0.3), tau, None).unwrap();
            assert!(s.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn small_tau_tends_to_one_hot() {
        let raw = Tensor::row(vec![0.2, 0.9, 0.5]);
        let s = normalize(raw, 1e-3, None).unwrap();
        assert!((s.data()[1] - 1.0).abs() < 1e-12);
        assert!(s.data()[0] < 1e-12 && s.data()[2] < 1e-12);
    }

    #[test]
    fn non_positive_tau_is_config_error() {
        for tau in [0.0, -1.0, f64::NAN] {
            let err = normalize(Tensor::filled(1, 2, 0.5), tau, None).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }

    #[test]
    fn seeded_noise_repeats() {
        let raw = Tensor::matrix(2, 3, vec![0.1, 0.5, 0.9, 0.3, 0.3, 0.2]).unwrap();
        let a = normalize(raw.clone(), 0.1, Some(gumbel_matrix(&mut stream_rng(5, 1, 2), 2, 3))).unwrap();
        let b = normalize(raw, 0.1, Some(gumbel_matrix(&mut stream_rng(5, 1, 2), 2, 3))).unwrap();
        assert_eq!(a, b);
        for row in a.to_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_node_tokens_scale_h() {
        let mut store = ParameterStore::new();
        init_params(&mut store, 3, 2, &mut stream_rng(1, 0, 0));
        let mut t = Tape::new();
        let h = t.constant(Tensor::row(vec![0.4, -1.2])).unwrap();
        let out = serialize(&mut t, &store, h, 0.1, None).unwrap();
        let s = t.value(out.assignment).clone();
        let g = t.value(out.tokens).clone();
        assert_eq!(g.shape(), &[3, 2]);
        for j in 0..3 {
            assert_eq!(g.row_slice(j), &[s.at(0, j) * 0.4, s.at(0, j) * -1.2]);
        }
    }

    #[test]
    fn degenerate_assignment_column() {
        let mut t = Tape::new();
        let s = t
            .constant(Tensor::matrix(3, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap())
            .unwrap();
        let h = t
            .constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let g = aggregate_tokens(&mut t, s, h).unwrap();
        assert_eq!(t.value(g).data(), &[9.0, 12.0, 0.0, 0.0]);
    }

    #[test]
    fn equal_rows_reproduce_v() {
        let mut store = ParameterStore::new();
        init_params(&mut store, 5, 3, &mut stream_rng(2, 0, 0));
        let v = [0.3, -0.7, 1.1];
        let mut t = Tape::new();
        let h = t.constant(Tensor::from_rows(&vec![v.to_vec(); 4]).unwrap()).unwrap();
        let out = serialize(&mut t, &store, h, 0.1, None).unwrap();
        let s = t.value(out.assignment).clone();
        for j in 0..5 {
            // every g_j is (column mass) · v with identical rows, so each row is a multiple of v
            let mass: f64 = (0..4).map(|i| s.at(i, j)).sum();
            for k in 0..3 {
                assert!((t.value(out.tokens).at(j, k) - mass * v[k]).abs() < 1e-12);
            }
        }
    }
}
