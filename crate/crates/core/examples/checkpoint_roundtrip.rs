//! Saves a trained model, reloads it and re-evaluates; the metrics agree to
//! the bit.
//!
//!     cargo run --release --example checkpoint_roundtrip

use stgt::checkpoint;
use stgt::config::TrainConfig;
use stgt::graph::{generate_synthetic, split_dataset, SynthSpec, SynthTask};
use stgt::train::{evaluate, train};

fn main() -> anyhow::Result<()> {
    let store = generate_synthetic(&SynthSpec::new(SynthTask::TriangleCount, 60, 5, 10, 4))?;
    let split = split_dataset(store.len(), [0.6, 0.2, 0.2], 0)?;
    let config = TrainConfig { epochs: 3, d: 8, ..TrainConfig::default() };
    let outcome = train(&config, &store, &split)?;

    let dir = tempfile::tempdir()?;
    checkpoint::save(dir.path(), &outcome.best, &config, outcome.record.selected_epoch)?;
    let (restored, manifest) = checkpoint::load(dir.path())?;

    let before = evaluate(&outcome.best, &store, &split.valid)?;
    let after = evaluate(&restored, &store, &split.valid)?;
    println!("epoch {} config {}", manifest.epoch, &manifest.config_hash[..12]);
    println!("logged val {:.17}", outcome.record.selected_val_metric);
    println!("in memory  {before:.17}\nrestored   {after:.17}");
    assert_eq!(before.to_bits(), after.to_bits());
    Ok(())
}
