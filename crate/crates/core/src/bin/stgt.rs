use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use stgt::checkpoint;
use stgt::config::TrainConfig;
use stgt::gradcheck::{self, GradModule};
use stgt::graph::{generate_synthetic, write_split_files, ExampleStore, SynthSpec, SynthTask};
use stgt::predictor::MetricRecord;
use stgt::report;
use stgt::train::{self, evaluate, resolve_split, write_run};
use stgt::Variant;

#[derive(Parser)]
#[command(name = "stgt", version, about = "Serialized-token graph transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed; each lands in `<out>/seed-<s>/`.
    Train(TrainArgs),
    /// Same as `train` with the variant overridden.
    Ablate {
        #[arg(long)]
        variant: Variant,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Evaluate a checkpoint on one split (noise off).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Finite-difference gradient check.
    Gradcheck {
        #[arg(long, default_value = "all")]
        module: String,
    },
    /// Generate a synthetic JSON-Lines dataset.
    Synth {
        #[arg(long)]
        task: SynthTask,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_nodes: usize,
        #[arg(long, default_value_t = 12)]
        max_nodes: usize,
    },
    /// Aggregate run directories into mean ± std.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory with train.idx / valid.idx / test.idx.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    seeds: Vec<u64>,
}

fn run_training(args: &TrainArgs, variant: Option<Variant>) -> anyhow::Result<()> {
    let mut config = TrainConfig::load(&args.config).with_context(|| format!("config {}", args.config.display()))?;
    if let Some(v) = variant {
        config.variant = v;
    }
    let store = ExampleStore::load_jsonl(&args.data).with_context(|| format!("data {}", args.data.display()))?;
    let split = resolve_split(&config, store.len(), args.splits.as_deref())?;
    write_split_files(&split, args.out.join("splits"))?;
    for &seed in &args.seeds {
        let cfg = TrainConfig { seed, ..config.clone() };
        let outcome = train::train(&cfg, &store, &split)?;
        let dir = args.out.join(format!("seed-{seed}"));
        write_run(&dir, &outcome)?;
        let r = &outcome.record;
        println!(
            "seed {seed}: selected epoch {} val {} {:.6} test {:.6} -> {}",
            r.selected_epoch,
            r.metric,
            r.selected_val_metric,
            r.final_test_metric,
            dir.display()
        );
    }
    Ok(())
}

fn run_eval(ckpt: &Path, data: &Path, split_name: &str, splits: Option<&Path>) -> anyhow::Result<()> {
    let (model, manifest) = checkpoint::load(ckpt)?;
    let store = ExampleStore::load_jsonl(data)?;
    let split = resolve_split(&manifest.config, store.len(), splits)?;
    let indices = match split_name {
        "train" => &split.train,
        "valid" => &split.valid,
        "test" => &split.test,
        other => bail!("unknown split `{other}` (expected train, valid or test)"),
    };
    let value = evaluate(&model, &store, indices)?;
    let record = MetricRecord {
        metric: manifest.config.task.metric_name().into(),
        value,
        split: split_name.into(),
        seed: manifest.config.seed,
    };
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}

fn run_gradcheck(module: &str) -> anyhow::Result<bool> {
    let mut ok = true;
    for m in GradModule::parse_selection(module)? {
        let r = gradcheck::run(m)?;
        println!(
            "{:<10} max_rel_err {:.3e} over {} coords (worst {}) {}",
            m.name(),
            r.max_relative_error,
            r.coordinates,
            r.worst,
            if r.passed { "PASS" } else { "FAIL" }
        );
        ok &= r.passed;
    }
    Ok(ok)
}

fn run_report(runs: &[PathBuf]) -> anyhow::Result<()> {
    let mut records = Vec::new();
    for dir in runs {
        for path in report::find_records(dir)? {
            records.push(train::load_record(&path).with_context(|| format!("{}", path.display()))?);
        }
    }
    let summary = report::report(&records)?;
    println!("{} ({}, {} seeds): {}", summary.metric, summary.split, summary.seeds.len(), summary.formatted);
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => run_training(args, None),
        Command::Ablate { variant, args } => run_training(args, Some(*variant)),
        Command::Eval { checkpoint, data, split, splits } => run_eval(checkpoint, data, split, splits.as_deref()),
        Command::Gradcheck { module } => match run_gradcheck(module) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
        Command::Synth { task, count, seed, out, min_nodes, max_nodes } => {
            generate_synthetic(&SynthSpec::new(*task, *count, *min_nodes, *max_nodes, *seed))
                .and_then(|s| s.write_jsonl(out))
                .map_err(Into::into)
        }
        Command::Report { runs } => run_report(runs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
