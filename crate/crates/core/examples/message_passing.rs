//! Local message passing on a labelled graph, and a check that relabelling the
//! nodes permutes the output rows.
//!
//!     cargo run --example message_passing

use stgt::autodiff::Tape;
use stgt::graph::Graph;
use stgt::local_mp::run_local_mp;
use stgt::{build_model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let graph = Graph::undirected(
        vec![vec![0], vec![1], vec![1], vec![2]],
        &[(0, 1, vec![0]), (1, 2, vec![1]), (2, 0, vec![0]), (2, 3, vec![1])],
    )?;
    let cfg = ModelConfig { d: 8, node_vocab: vec![3], edge_vocab: vec![2], ..ModelConfig::default() };
    let model = build_model(cfg, 0)?;

    let mut tape = Tape::new();
    let h = run_local_mp(&mut tape, &model.params, &model.config, &graph)?;
    let h = tape.value(h).clone();
    for (i, row) in h.to_rows().iter().enumerate() {
        println!("h[{i}] = {:.3?}", row);
    }

    let perm = [2, 0, 3, 1];
    let mut tape = Tape::new();
    let hp = run_local_mp(&mut tape, &model.params, &model.config, &graph.permute(&perm)?)?;
    let hp = tape.value(hp);
    let worst = (0..graph.num_nodes())
        .flat_map(|i| h.row_slice(i).iter().zip(hp.row_slice(perm[i])).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    println!("max |h[i] - h'[perm[i]]| = {worst:.2e}");
    Ok(())
}
