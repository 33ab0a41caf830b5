//! Compares the full model against its three ablations on synthetic triangle
//! counting.
//!
//!     cargo run --release --example ablation -- [count] [epochs] [seeds]

use stgt::ablation::run_ablation;
use stgt::config::TrainConfig;
use stgt::graph::{generate_synthetic, split_dataset, SynthSpec, SynthTask};
use stgt::Variant;

fn main() -> anyhow::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let count = args.first().copied().unwrap_or(500);
    let epochs = args.get(1).copied().unwrap_or(10);
    let seeds: Vec<u64> = (0..args.get(2).copied().unwrap_or(2) as u64).collect();

    let store = generate_synthetic(&SynthSpec::new(SynthTask::TriangleCount, count, 5, 12, 2024))?;
    let split = split_dataset(store.len(), [0.8, 0.1, 0.1], 0)?;
    let base = TrainConfig { epochs, ..TrainConfig::default() };

    let start = std::time::Instant::now();
    let result = run_ablation(&base, &store, &split, &Variant::ALL, &seeds, |r| {
        println!(
            "{:<17} seed {} epoch {:>3} test mae {:.4}  [{:.0?}]",
            r.config.variant,
            r.seed,
            r.selected_epoch,
            r.final_test_metric,
            start.elapsed()
        );
    })?;
    for s in &result.summaries {
        println!("{:<17} {:.4} ± {:.4}", s.variant, s.mean, s.std);
    }
    for e in result.effects() {
        println!("{:<17} gap {:+.4} effect size {:+.2}", e.variant, e.gap, e.effect_size);
    }
    println!("strict ordering: {}, passes: {}", result.strict_ordering(), result.passes());
    Ok(())
}
