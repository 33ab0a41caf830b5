//! Generates a synthetic dataset, writes it as JSON Lines, reads it back and
//! splits it.
//!
//!     cargo run --example synth_split

use stgt::graph::{count_triangles, generate_synthetic, split_dataset, ExampleStore, SynthSpec, SynthTask};

fn main() -> anyhow::Result<()> {
    let store = generate_synthetic(&SynthSpec::new(SynthTask::TriangleCount, 20, 5, 12, 3))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("triangles.jsonl");
    store.write_jsonl(&path)?;

    let back = ExampleStore::load_jsonl(&path)?;
    assert_eq!(back, store);
    for ex in back.examples().iter().take(5) {
        println!(
            "nodes {:>2} directed edges {:>2} triangles {} (target {})",
            ex.graph.num_nodes(),
            ex.graph.num_edges(),
            count_triangles(&ex.graph),
            ex.target
        );
    }

    let split = split_dataset(back.len(), [0.8, 0.1, 0.1], 0)?;
    println!("train {:?}\nvalid {:?}\ntest  {:?}", split.train, split.valid, split.test);
    let (node_vocab, edge_vocab) = back.vocab();
    println!("node vocab {node_vocab:?} edge vocab {edge_vocab:?}");
    Ok(())
}
