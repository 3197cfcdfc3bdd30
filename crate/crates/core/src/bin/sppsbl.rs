use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sppsbl::datagen::{derive_seed, generate, GeneratorSpec, InstanceFile};
use sppsbl::experiment::{
    default_threads, run_experiment, run_phase_grid, write_experiment, write_phase_grid,
    ExperimentConfig,
};
use sppsbl::metrics::{correlation, extract_support, nmse, srr, DEFAULT_SUPPORT_TAU};
use sppsbl::{CouplingScheme, Error, Result, SolverConfig};

#[derive(Parser)]
#[command(name = "sppsbl", version, about = "Block-sparse recovery benchmarks")]
struct Cli {
    /// JSON config file (experiment, generator or solver config depending on the command).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, env = "SPPSBL_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trials per grid cell; overrides the config.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads for trial-level parallelism [default: available cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write instance files from a generator or experiment config.
    Generate {
        /// Number of instances.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Recover the signal in one instance file and report metrics.
    Solve {
        instance: PathBuf,
        /// Ignored when --config supplies a solver config.
        #[arg(long, value_enum, default_value_t = Scheme::Spp)]
        scheme: Scheme,
        /// Shared coupling for `--scheme pc`.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = DEFAULT_SUPPORT_TAU)]
        tau: f64,
    },
    /// Run an experiment config.
    Bench,
    /// Run an experiment config over its (SNR, ratio) grid and emit grid CSVs.
    Phase,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Spp,
    Pc,
    Sbl,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { count } => cmd_generate(&cli, *count),
        Command::Solve {
            instance,
            scheme,
            beta,
            tau,
        } => cmd_solve(&cli, instance, *scheme, *beta, *tau),
        Command::Bench => cmd_bench(&cli, false),
        Command::Phase => cmd_bench(&cli, true),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config {
        message: e.to_string(),
        location: Some(format!("{}:{}:{}", path.display(), e.line(), e.column())),
    })
}

fn require_config(cli: &Cli) -> Result<&Path> {
    cli.config.as_deref().ok_or_else(|| Error::Config {
        message: "this command needs --config <path>".into(),
        location: None,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_generate(cli: &Cli, count: usize) -> Result<()> {
    let path = require_config(cli)?;
    let text = read_text(path)?;
    let value: serde_json::Value = parse_json(&text, path)?;
    // Instance i matches trial i of the first cell of an experiment with the same master seed.
    let specs: Vec<GeneratorSpec> = if value.get("generator").is_some() {
        let mut cfg = ExperimentConfig::from_json_str(&text, &path.display().to_string())?;
        if let Some(seed) = cli.seed {
            cfg.master_seed = seed;
        }
        let cell = cfg.cells()[0];
        (0..count).map(|i| cfg.cell_generator(&cell, i)).collect()
    } else {
        let base: GeneratorSpec = parse_json(&text, path)?;
        base.validate()?;
        let master = cli.seed.unwrap_or(base.seed);
        (0..count)
            .map(|i| GeneratorSpec {
                seed: derive_seed(master, &[0, i as u64]),
                ..base.clone()
            })
            .collect()
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;
    for (i, spec) in specs.iter().enumerate() {
        let p = out.join(format!("instance_{i:03}.json"));
        generate(spec)?.write_json(&p)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_solve(cli: &Cli, instance: &Path, scheme: Scheme, beta: f64, tau: f64) -> Result<()> {
    let file = InstanceFile::read_json(instance)?;
    let problem = file.into_problem()?;
    let config = match &cli.config {
        Some(p) => parse_json::<SolverConfig>(&read_text(p)?, p)?,
        None => SolverConfig::with_scheme(match scheme {
            Scheme::Spp => CouplingScheme::Spp,
            Scheme::Pc => CouplingScheme::PcFixed(beta),
            Scheme::Sbl => CouplingScheme::None,
        }),
    };
    let res = sppsbl::run_em(&problem, &config)?;
    let mut report = json!({
        "iterations": res.iterations,
        "converged": res.converged,
        "gamma": res.state.gamma,
        "x_hat": res.x_hat,
    });
    if let (Some(x), Some(s)) = (problem.x_true(), problem.true_support()) {
        let est = extract_support(&res.x_hat, tau)?;
        report["nmse"] = nmse(&res.x_hat, x)?.into();
        report["corr"] = correlation(&res.x_hat, x).unwrap_or(0.0).into();
        report["srr"] = srr(&est, s)?.into();
        eprintln!("nmse {:.6e}", report["nmse"].as_f64().unwrap_or(f64::NAN));
    }
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Invariant(e.to_string()))?;
    if let Some(out) = &cli.out {
        create_dir(out)?;
        write_file(&out.join("solution.json"), &(text.clone() + "\n"))?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_bench(cli: &Cli, phase: bool) -> Result<()> {
    let path = require_config(cli)?;
    let text = read_text(path)?;
    let mut cfg = ExperimentConfig::from_json_str(&text, &path.display().to_string())?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = cli.trials {
        cfg.n_trials = n;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    let threads = cli.threads.unwrap_or_else(default_threads);
    let root = cfg.output_dir.join(&cfg.name);
    let written = if phase {
        let outcome = run_phase_grid(&cfg, threads)?;
        write_phase_grid(&outcome, &root, Some(&text))?
    } else {
        let outcome = run_experiment(&cfg, threads)?;
        print_summary(&outcome)?;
        write_experiment(&outcome, &root, Some(&text))?
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn print_summary(outcome: &sppsbl::experiment::ExperimentOutcome) -> Result<()> {
    for (cell, sums) in outcome.cells.iter().zip(outcome.summaries()?) {
        for s in sums {
            eprintln!(
                "cell {} snr {} m {} {:>6}: nmse {:.4} ({:.4})  corr {:.4}  srr {:.4}  success {:.2}  failures {}",
                cell.cell.index,
                cell.cell.snr_db,
                cell.cell.m,
                s.algorithm,
                s.nmse.mean,
                s.nmse.std,
                s.corr.mean,
                s.srr.mean,
                s.success_rate,
                s.failures
            );
        }
    }
    Ok(())
}
