//! Graphs of any size serialize into exactly `M` ordered tokens; each node's
//! assignment over the tokens sums to one.
//!
//!     cargo run --example serialize_tokens

use stgt::graph::{generate_synthetic, SynthSpec, SynthTask};
use stgt::{build_model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let store = generate_synthetic(&SynthSpec::new(SynthTask::TriangleCount, 6, 1, 20, 5))?;
    let (node_vocab, edge_vocab) = store.vocab();
    let cfg = ModelConfig { m: 4, node_vocab, edge_vocab, ..ModelConfig::default() };
    let model = build_model(cfg, 1)?;

    for ex in store.examples() {
        let (_, trace) = model.predict_traced(&ex.graph)?;
        let tokens = trace.tokens.expect("full model serializes");
        let s = trace.assignment.expect("full model serializes");
        let worst = s
            .to_rows()
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        println!(
            "N = {:>2}: tokens {}x{}, head input {}, max |row sum - 1| = {worst:.1e}",
            ex.graph.num_nodes(),
            tokens.rows(),
            tokens.cols(),
            trace.head_input_width
        );
    }
    Ok(())
}
