//! Run a benchmark preset and print the summary table.
//!
//! `cargo run --release --example table_benchmark -- [preset] [trials]`

use std::path::PathBuf;

use sppsbl::experiment::{default_threads, run_experiment, ExperimentConfig};

fn main() -> sppsbl::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "table1".into());
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("presets/{name}.cfg"));
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(n) = args.next().and_then(|s| s.parse().ok()) {
        cfg.n_trials = n;
    }
    let outcome = run_experiment(&cfg, default_threads())?;
    println!("{} ({} trials)", cfg.name, cfg.n_trials);
    println!("{:<8} {:>16} {:>16} {:>16} {:>8}", "", "NMSE", "corr", "SRR", "iters");
    for s in &outcome.summaries()?[0] {
        println!(
            "{:<8} {:>8.4} ({:.4}) {:>8.4} ({:.4}) {:>8.4} ({:.4}) {:>8.1}",
            s.algorithm, s.nmse.mean, s.nmse.std, s.corr.mean, s.corr.std, s.srr.mean, s.srr.std,
            s.iterations.mean
        );
    }
    Ok(())
}
