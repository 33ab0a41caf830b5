mod common;

use proptest::prelude::*;
use stgt::autodiff::{Tape, Tensor};
use stgt::nn::{gaussian, stream_rng, ParameterStore};
use stgt::serializer::{self, similarity_scores, BASIS};
use stgt::Variant;

struct Out {
    scores: Tensor,
    assignment: Tensor,
    tokens: Tensor,
}

fn run(h: &Tensor, basis: &Tensor, tau: f64, noise_seed: Option<u64>) -> Out {
    let mut store = ParameterStore::new();
    store.insert(BASIS, basis.clone());
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone()).unwrap();
    let mut rng = noise_seed.map(|s| stream_rng(s, 0, 0));
    let ser = serializer::serialize(&mut tape, &store, hv, tau, rng.as_mut().map(|r| r as &mut dyn rand::RngCore)).unwrap();
    let scores = similarity_scores(&mut tape, hv, ser.basis).unwrap();
    Out {
        scores: tape.value(scores).clone(),
        assignment: tape.value(ser.assignment).clone(),
        tokens: tape.value(ser.tokens).clone(),
    }
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut rows = vec![Vec::new(); t.rows()];
    for (i, r) in t.to_rows().into_iter().enumerate() {
        rows[perm[i]] = r;
    }
    Tensor::from_rows(&rows).unwrap()
}

#[test]
fn three_nodes_all_six_orders() {
    let h = gaussian(&mut stream_rng(1, 0, 0), 3, 4, 0.8);
    let b = gaussian(&mut stream_rng(2, 0, 0), 5, 4, 0.5);
    let reference = run(&h, &b, 0.1, None).tokens;
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for perm in orders {
        let g = run(&permute_rows(&h, &perm), &b, 0.1, None).tokens;
        assert!(g.max_abs_diff(&reference) < 1e-10, "{perm:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(200) })]

    #[test]
    fn permutation_invariant_without_noise(n in 1usize..16, m in 1usize..9, d in 1usize..6, seed in any::<u64>(), pseed in any::<u64>()) {
        let h = gaussian(&mut stream_rng(seed, 1, 0), n, d, 1.0);
        let b = gaussian(&mut stream_rng(seed, 2, 0), m, d, 1.0);
        let perm = common::permutation(n, pseed);
        let a = run(&h, &b, 0.1, None).tokens;
        let p = run(&permute_rows(&h, &perm), &b, 0.1, None).tokens;
        prop_assert!(a.max_abs_diff(&p) < 1e-10);
    }

    #[test]
    fn rows_stochastic_scores_bounded(
        n in 1usize..16, m in 1usize..9, d in 1usize..6,
        log_tau in -3.0f64..1.0, noisy in any::<bool>(), seed in any::<u64>(),
    ) {
        let tau = 10f64.powf(log_tau);
        let h = gaussian(&mut stream_rng(seed, 1, 0), n, d, 1.5);
        let b = gaussian(&mut stream_rng(seed, 2, 0), m, d, 1.0);
        let out = run(&h, &b, tau, noisy.then_some(seed));
        for row in out.assignment.to_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&s| (0.0..=1.0).contains(&s)));
        }
        prop_assert!(out.scores.data().iter().all(|&s| s > 0.0 && s <= 1.0));

        let max_norm = h.to_rows().iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        for j in 0..m {
            let mass: f64 = (0..n).map(|i| out.assignment.at(i, j)).sum();
            let norm = out.tokens.row_slice(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm <= mass * max_norm + 1e-12);
        }
    }
}

#[test]
fn fixed_length_for_every_size() {
    for m in [1, 4, 8] {
        let model = common::model(common::config(8, m), m as u64);
        for n in 1..=20 {
            for g in common::graphs(3, n, n, (n * 10 + m) as u64) {
                let (_, trace) = model.predict_traced(&g).unwrap();
                let tokens = trace.tokens.unwrap();
                assert_eq!(tokens.shape(), &[m, 8]);
                assert_eq!(trace.assignment.unwrap().shape(), &[n, m]);
                assert_eq!(trace.head_input_width, m * 8);
            }
        }
    }
    // The no-attention variant flattens the same fixed-length sequence.
    let cfg = stgt::ModelConfig { variant: Variant::NoAttention, ..common::config(8, 4) };
    let model = common::model(cfg, 0);
    for g in common::graphs(10, 1, 20, 3) {
        assert_eq!(model.predict_traced(&g).unwrap().1.head_input_width, 32);
    }
}

#[test]
fn noise_draws_differ_but_stay_stochastic() {
    let h = gaussian(&mut stream_rng(4, 0, 0), 6, 3, 1.0);
    let b = gaussian(&mut stream_rng(5, 0, 0), 4, 3, 1.0);
    let a = run(&h, &b, 0.1, Some(1)).assignment;
    let c = run(&h, &b, 0.1, Some(2)).assignment;
    assert!(a.max_abs_diff(&c) > 1e-3);
    assert_eq!(run(&h, &b, 0.1, Some(1)).assignment, a);
}
