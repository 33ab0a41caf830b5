//! Self-attention over serialized graph tokens: prints the attention map of
//! every layer.
//!
//!     cargo run --example attention_encoder

use stgt::graph::Graph;
use stgt::{build_model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let graph = Graph::undirected(
        vec![vec![0]; 6],
        &[(0, 1, vec![0]), (1, 2, vec![0]), (2, 0, vec![0]), (3, 4, vec![0]), (4, 5, vec![0])],
    )?;
    let cfg = ModelConfig { m: 4, attn_layers: 2, heads: 2, dk: 8, node_vocab: vec![1], edge_vocab: vec![1], ..ModelConfig::default() };
    let model = build_model(cfg, 2)?;
    let (y, trace) = model.predict_traced(&graph)?;

    // One matrix per layer and head.
    for (k, a) in trace.attention.iter().enumerate() {
        println!("layer {} head {}", k / 2, k % 2);
        for row in a.to_rows() {
            println!("  {:.3?}", row);
        }
    }
    println!("prediction {y:.4}");
    Ok(())
}
