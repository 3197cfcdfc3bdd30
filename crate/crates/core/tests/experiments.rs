//! End-to-end behavior of the experiment runner on small configurations.

use sppsbl::datagen::{GeneratorSpec, SignalFamily};
use sppsbl::experiment::{
    run_experiment, run_phase_grid, run_trial, write_experiment, write_phase_grid, AlgorithmSpec,
    ExperimentConfig, Sweep,
};
use sppsbl::metrics::read_grid_csv;
use sppsbl::CouplingScheme;

fn small(name: &str) -> ExperimentConfig {
    let generator = GeneratorSpec {
        n: 48,
        m: 24,
        family: SignalFamily::Heteroscedastic { k: 10, n_blocks: 2 },
        ..GeneratorSpec::heteroscedastic_default(0)
    };
    let mut cfg = ExperimentConfig::new(name, generator, AlgorithmSpec::standard_trio());
    cfg.n_trials = 4;
    cfg.master_seed = 31;
    cfg
}

fn run_to_dir(cfg: &ExperimentConfig, threads: usize) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(cfg, threads).unwrap();
    write_experiment(&outcome, dir.path(), None).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    (dir, csv)
}

#[test]
fn single_trial_rerun_is_bitwise_identical() {
    let mut cfg = small("det");
    cfg.n_trials = 1;
    let (_a, first) = run_to_dir(&cfg, 1);
    let (_b, second) = run_to_dir(&cfg, 1);
    assert_eq!(first, second);
    assert_eq!(first.lines().count(), 1 + 3);
}

#[test]
fn thread_count_does_not_change_output() {
    let cfg = small("threads");
    let (_a, serial) = run_to_dir(&cfg, 1);
    let (_b, parallel) = run_to_dir(&cfg, 8);
    assert_eq!(serial, parallel);
}

#[test]
fn summary_and_config_echo_are_written() {
    let cfg = small("files");
    let (dir, _) = run_to_dir(&cfg, 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let rows = summary["summary"].as_array().unwrap();
    for key in ["algorithm", "metric", "mean", "std", "n", "success_rate"] {
        assert!(rows.iter().all(|r| r.get(key).is_some()), "missing {key}");
    }
    assert!(summary["version"].is_string());
    assert_eq!(summary["failures"], 0);
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["config"]["name"], "files");
}

fn grid_config() -> ExperimentConfig {
    let mut cfg = small("grid");
    cfg.algorithms = vec![AlgorithmSpec::new("spp", CouplingScheme::Spp)];
    cfg.n_trials = 3;
    cfg.sweep = Some(Sweep { snr_db: vec![5.0, 40.0], measurement_ratio: vec![0.3, 0.8] });
    cfg
}

#[test]
fn phase_grid_shape_and_file() {
    let cfg = grid_config();
    let outcome = run_phase_grid(&cfg, 2).unwrap();
    let grid = outcome.grid("spp");
    assert_eq!(grid.len(), 4);
    assert!(grid.iter().all(|g| g.n_trials == 3));

    let dir = tempfile::tempdir().unwrap();
    write_phase_grid(&outcome, dir.path(), None).unwrap();
    let f = std::fs::File::open(dir.path().join("grid_spp.csv")).unwrap();
    assert_eq!(read_grid_csv(f).unwrap(), grid);

    let best = grid.iter().find(|g| g.snr_db == 40.0 && g.measurement_ratio == 0.8).unwrap();
    let worst = grid.iter().find(|g| g.snr_db == 5.0 && g.measurement_ratio == 0.3).unwrap();
    assert!(best.mean_rnmse < worst.mean_rnmse);
}

#[test]
fn grid_matches_independent_per_cell_runs() {
    let cfg = grid_config();
    let grid = run_phase_grid(&cfg, 4).unwrap().grid("spp");
    for (cell, g) in cfg.cells().iter().zip(&grid) {
        let mut runs: Vec<(u64, f64)> = (0..cfg.n_trials)
            .map(|t| {
                let o = run_trial(&cfg, cell, t);
                (o.seed, o.records[0].nmse.sqrt())
            })
            .collect();
        // The runner orders trials by seed; sum in the same order.
        runs.sort_by_key(|r| r.0);
        let rn: Vec<f64> = runs.into_iter().map(|r| r.1).collect();
        let mean = rn.iter().sum::<f64>() / rn.len() as f64;
        assert_eq!(mean.to_bits(), g.mean_rnmse.to_bits(), "cell {}", cell.index);
    }
}

#[test]
fn phase_grid_needs_both_axes() {
    let mut cfg = grid_config();
    cfg.sweep = Some(Sweep { snr_db: vec![10.0], measurement_ratio: vec![] });
    assert!(run_phase_grid(&cfg, 1).is_err());
}

#[test]
fn success_rate_grows_with_measurements() {
    let mut cfg = small("sweep");
    cfg.algorithms = vec![AlgorithmSpec::new("spp", CouplingScheme::Spp)];
    cfg.n_trials = 8;
    cfg.sweep = Some(Sweep { snr_db: vec![50.0], measurement_ratio: vec![0.2, 0.5, 0.9] });
    let outcome = run_experiment(&cfg, 2).unwrap();
    let rates: Vec<f64> = outcome
        .summaries()
        .unwrap()
        .iter()
        .map(|s| s[0].success_rate)
        .collect();
    assert!(rates[0] <= rates[1] + 0.25 && rates[1] <= rates[2] + 0.25, "{rates:?}");
    assert!(rates[2] > rates[0], "{rates:?}");
}

#[test]
fn config_errors_name_the_field() {
    let bad = r#"{"name":"x","generator":{"family":"chain","p":0.8,"p10":0.01,"n":64,"m":20,"snr_db":10},
                 "algorithms":[{"label":"a"}],"n_trials":0}"#;
    let err = ExperimentConfig::from_json_str(bad, "bad.cfg").unwrap_err().to_string();
    assert!(err.contains("n_trials"), "{err}");

    let typo = r#"{"name":"x","generatr":{}}"#;
    let err = ExperimentConfig::from_json_str(typo, "typo.cfg").unwrap_err().to_string();
    assert!(err.contains("typo.cfg:1:"), "{err}");
}
