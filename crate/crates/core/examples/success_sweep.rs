//! Exact-recovery rate against the measurement ratio at high SNR.
//!
//! `cargo run --release --example success_sweep -- [trials]`

use sppsbl::datagen::GeneratorSpec;
use sppsbl::experiment::{default_threads, run_experiment, AlgorithmSpec, ExperimentConfig, Sweep};

fn main() -> sppsbl::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let generator = GeneratorSpec { snr_db: 50.0, ..GeneratorSpec::heteroscedastic_default(0) };
    let mut cfg = ExperimentConfig::new("sweep", generator, AlgorithmSpec::standard_trio());
    cfg.n_trials = trials;
    cfg.sweep = Some(Sweep { snr_db: vec![], measurement_ratio: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] });

    let outcome = run_experiment(&cfg, default_threads())?;
    println!("{:>6} {:>8} {:>8} {:>8}", "ratio", "spp", "pc", "sbl");
    for (cell, sums) in outcome.cells.iter().zip(outcome.summaries()?) {
        let rates: Vec<String> = sums.iter().map(|s| format!("{:>8.2}", s.success_rate)).collect();
        println!("{:>6.2} {}", cell.cell.ratio, rates.join(" "));
    }
    Ok(())
}
