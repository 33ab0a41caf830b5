#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stgt::graph::{generate_synthetic, Graph, SynthSpec, SynthTask};
use stgt::nn::{gaussian, stream_rng};
use stgt::{build_model, Model, ModelConfig};

pub const NODE_VOCAB: usize = 4;
pub const EDGE_VOCAB: usize = 3;

/// `count` random graphs with sizes in `[min, max]` and 4 node / 3 edge labels.
pub fn graphs(count: usize, min: usize, max: usize, seed: u64) -> Vec<Graph> {
    let spec = SynthSpec {
        edge_prob: 0.35,
        ..SynthSpec::new(SynthTask::TriangleCount, count, min, max, seed)
    };
    generate_synthetic(&spec)
        .unwrap()
        .examples()
        .iter()
        .map(|e| e.graph.clone())
        .collect()
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

pub fn config(d: usize, m: usize) -> ModelConfig {
    ModelConfig {
        d,
        dk: d,
        m,
        node_vocab: vec![NODE_VOCAB],
        edge_vocab: vec![EDGE_VOCAB],
        ..ModelConfig::default()
    }
}

/// Model whose parameters are nudged off their initialization, so that
/// zero-initialized scalars take generic values.
pub fn model(cfg: ModelConfig, seed: u64) -> Model {
    let mut model = build_model(cfg, seed).unwrap();
    let mut rng = stream_rng(seed, 77, 77);
    for (_, t) in model.params.iter_mut() {
        let noise = gaussian(&mut rng, t.rows(), t.cols(), 0.2);
        t.data_mut().iter_mut().zip(noise.data()).for_each(|(x, n)| *x += n);
    }
    model
}
