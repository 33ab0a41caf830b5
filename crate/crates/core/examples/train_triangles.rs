//! Trains the full model on triangle counting and writes the run directory.
//!
//!     cargo run --release --example train_triangles -- [epochs]

use stgt::config::TrainConfig;
use stgt::graph::{generate_synthetic, split_dataset, SynthSpec, SynthTask};
use stgt::train::{train, write_run};

fn main() -> anyhow::Result<()> {
    let epochs = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(20);
    let store = generate_synthetic(&SynthSpec::new(SynthTask::TriangleCount, 250, 5, 12, 0))?;
    let split = split_dataset(store.len(), [0.8, 0.1, 0.1], 0)?;
    let config = TrainConfig { epochs, ..TrainConfig::default() };

    let outcome = train(&config, &store, &split)?;
    for e in &outcome.record.epochs {
        println!("epoch {:>3} loss {:.4} val {:.4} test {:.4}", e.epoch, e.train_loss, e.val_metric, e.test_metric);
    }
    let r = &outcome.record;
    println!(
        "train mae {:.4} -> {:.4}; selected epoch {} (val {:.4}, test {:.4})",
        r.initial_train_metric, r.final_train_metric, r.selected_epoch, r.selected_val_metric, r.final_test_metric
    );
    let out = std::env::temp_dir().join("stgt-train-example");
    write_run(&out, &outcome)?;
    println!("wrote {}", out.display());
    Ok(())
}
