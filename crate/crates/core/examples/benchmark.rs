//! Trains every variant on a synthetic corpus and prints test metrics.
//!
//! `cargo run --release -p ucd --example benchmark -- [seeds] [epochs] [learning-rate] [variants]`

use std::time::Instant;

use ucd::eval::repeated_runs;
use ucd::synth::{generate, SynthSpec};
use ucd::trainer::{ablate, TrainConfig, Variant};

fn main() -> ucd::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: usize = args.next().map(|s| s.parse().expect("seeds")).unwrap_or(5);
    let epochs: usize = args.next().map(|s| s.parse().expect("epochs")).unwrap_or(50);
    let learning_rate: f64 = args.next().map(|s| s.parse().expect("learning rate")).unwrap_or(1e-3);
    let variants: Vec<Variant> = match args.next() {
        Some(list) => list.split(',').map(|v| Variant::parse(v).expect("variant")).collect(),
        None => Variant::ALL.to_vec(),
    };
    let corpus = generate(&SynthSpec::default())?;
    let base = TrainConfig {
        epochs,
        learning_rate,
        ..TrainConfig::default()
    };
    for v in variants {
        let t = Instant::now();
        let r = repeated_runs(&corpus, &ablate(&base, v), seeds)?;
        println!(
            "{:<10} auroc {:.4} ± {:.4}  f1 {:.4}  kmeans {:.4}  [{:.1}s]",
            v.name(),
            r.report.mean.auroc,
            r.report.std.auroc,
            r.report.mean.f1,
            r.baseline.mean.auroc,
            t.elapsed().as_secs_f64()
        );
        let per: Vec<String> = r.report.runs.iter().map(|m| format!("{:.3}", m.auroc)).collect();
        println!("           per-seed {}", per.join(" "));
    }
    Ok(())
}
