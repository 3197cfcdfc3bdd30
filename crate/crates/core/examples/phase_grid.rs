//! SNR by measurement-ratio grid of mean root-NMSE, printed as a table.
//!
//! `cargo run --release --example phase_grid -- [trials]`

use sppsbl::datagen::{GeneratorSpec, SignalFamily};
use sppsbl::experiment::{default_threads, run_phase_grid, AlgorithmSpec, ExperimentConfig, Sweep};
use sppsbl::CouplingScheme;

fn main() -> sppsbl::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let generator = GeneratorSpec {
        n: 96,
        m: 48,
        family: SignalFamily::Heteroscedastic { k: 20, n_blocks: 3 },
        ..GeneratorSpec::heteroscedastic_default(0)
    };
    let algorithms = vec![AlgorithmSpec::new("spp", CouplingScheme::Spp)];
    let mut cfg = ExperimentConfig::new("phase", generator, algorithms);
    cfg.n_trials = trials;
    let ratios = vec![0.2, 0.35, 0.5, 0.65, 0.8];
    let snrs = vec![0.0, 10.0, 20.0, 30.0];
    cfg.sweep = Some(Sweep { snr_db: snrs.clone(), measurement_ratio: ratios.clone() });

    let grid = run_phase_grid(&cfg, default_threads())?.grid("spp");
    print!("{:>8}", "snr\\ratio");
    for r in &ratios {
        print!("{r:>8.2}");
    }
    println!();
    for (row, snr) in grid.chunks(ratios.len()).zip(&snrs) {
        print!("{snr:>8.0} ");
        for g in row {
            print!("{:>8.3}", g.mean_rnmse);
        }
        println!();
    }
    Ok(())
}
