//! Monte-Carlo experiment runner behind the `bench` and `phase` commands.
//!
//! A run is the cartesian grid of (SNR, measurement ratio) cells times
//! `n_trials` trials times the configured algorithms. Trial `t` of cell `c`
//! draws its instance from `derive_seed(master_seed, [c, t])`, so every trial
//! can be reproduced in isolation and results do not depend on the thread
//! count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{de_snr, derive_seed, generate, ser_snr, GeneratorSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, evaluate_trial, write_grid_csv, write_trials_csv, AggregateSummary, GridCell,
    TrialRecord, DEFAULT_SUPPORT_TAU,
};
use crate::model::CouplingScheme;
use crate::solver::{run_em, BetaStats, SolverConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub label: String,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl AlgorithmSpec {
    pub fn new(label: impl Into<String>, scheme: CouplingScheme) -> Self {
        Self {
            label: label.into(),
            solver: SolverConfig::with_scheme(scheme),
        }
    }

    /// Learned coupling, fixed unit coupling, and no coupling.
    pub fn standard_trio() -> Vec<Self> {
        vec![
            Self::new("spp", CouplingScheme::Spp),
            Self::new("pc", CouplingScheme::PcFixed(1.0)),
            Self::new("sbl", CouplingScheme::None),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default, serialize_with = "ser_snr_list", deserialize_with = "de_snr_list")]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub measurement_ratio: Vec<f64>,
}

fn ser_snr_list<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    #[derive(Serialize)]
    struct Wrap(#[serde(serialize_with = "ser_snr")] f64);
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Wrap(*x))?;
    }
    seq.end()
}

fn de_snr_list<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "de_snr")] f64);
    Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Template instance; `seed` is replaced per trial and `m`/`snr_db` per cell.
    pub generator: GeneratorSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_tau")]
    pub support_tau: f64,
    /// Wall-clock timing makes output files differ between runs, so it is opt-in.
    #[serde(default)]
    pub record_runtime: bool,
}

fn default_trials() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_tau() -> f64 {
    DEFAULT_SUPPORT_TAU
}

/// One (SNR, measurement count) point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub index: usize,
    #[serde(serialize_with = "ser_snr", deserialize_with = "de_snr")]
    pub snr_db: f64,
    pub ratio: f64,
    pub m: usize,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, generator: GeneratorSpec, algorithms: Vec<AlgorithmSpec>) -> Self {
        Self {
            name: name.into(),
            generator,
            algorithms,
            n_trials: default_trials(),
            master_seed: 0,
            sweep: None,
            output_dir: default_output_dir(),
            support_tau: default_tau(),
            record_runtime: false,
        }
    }

    /// Parses JSON config text; errors carry the line, column and offending field.
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config {
            message: e.to_string(),
            location: Some(format!("{origin}:{}:{}", e.line(), e.column())),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config_at("name", "must be a nonempty plain file name"));
        }
        if self.n_trials < 1 {
            return Err(Error::config_at("n_trials", "need at least one trial"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config_at("algorithms", "need at least one algorithm"));
        }
        for (k, a) in self.algorithms.iter().enumerate() {
            if a.label.is_empty() || a.label.contains(['/', '\\', ',']) {
                return Err(Error::config_at(
                    format!("algorithms[{k}].label"),
                    "must be nonempty without '/', '\\' or ','",
                ));
            }
            if self.algorithms[..k].iter().any(|b| b.label == a.label) {
                return Err(Error::config_at(
                    format!("algorithms[{k}].label"),
                    format!("duplicate label `{}`", a.label),
                ));
            }
            a.solver
                .validate()
                .map_err(|e| Error::config_at(format!("algorithms[{k}].solver"), e.to_string()))?;
        }
        if !(self.support_tau > 0.0 && self.support_tau < 1.0) {
            return Err(Error::config_at("support_tau", "must lie in (0, 1)"));
        }
        self.generator
            .validate()
            .map_err(|e| Error::config_at("generator", e.to_string()))?;
        if let Some(sweep) = &self.sweep {
            for (k, &r) in sweep.measurement_ratio.iter().enumerate() {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::config_at(
                        format!("sweep.measurement_ratio[{k}]"),
                        format!("must lie in (0, 1], got {r}"),
                    ));
                }
                if ratio_to_m(r, self.generator.n) < 1 {
                    return Err(Error::config_at(
                        format!("sweep.measurement_ratio[{k}]"),
                        "rounds to zero measurements",
                    ));
                }
            }
            for (k, &s) in sweep.snr_db.iter().enumerate() {
                if s.is_nan() || s == f64::NEG_INFINITY {
                    return Err(Error::config_at(format!("sweep.snr_db[{k}]"), "invalid SNR"));
                }
            }
        }
        for cell in self.cells() {
            self.cell_generator(&cell, 0)
                .validate()
                .map_err(|e| Error::config_at(format!("sweep cell {}", cell.index), e.to_string()))?;
        }
        Ok(())
    }

    /// Grid cells, SNR-major.
    pub fn cells(&self) -> Vec<CellSpec> {
        let g = &self.generator;
        let base_ratio = g.m as f64 / g.n as f64;
        let (snrs, ratios) = match &self.sweep {
            Some(s) => (
                if s.snr_db.is_empty() { vec![g.snr_db] } else { s.snr_db.clone() },
                if s.measurement_ratio.is_empty() {
                    vec![base_ratio]
                } else {
                    s.measurement_ratio.clone()
                },
            ),
            None => (vec![g.snr_db], vec![base_ratio]),
        };
        let swept_ratio = self
            .sweep
            .as_ref()
            .is_some_and(|s| !s.measurement_ratio.is_empty());
        let mut cells = Vec::with_capacity(snrs.len() * ratios.len());
        for &snr_db in &snrs {
            for &ratio in &ratios {
                let m = if swept_ratio { ratio_to_m(ratio, g.n) } else { g.m };
                cells.push(CellSpec {
                    index: cells.len(),
                    snr_db,
                    ratio,
                    m,
                });
            }
        }
        cells
    }

    /// Instance seed for trial `trial` of cell `cell`.
    pub fn trial_seed(&self, cell: usize, trial: usize) -> u64 {
        derive_seed(self.master_seed, &[cell as u64, trial as u64])
    }

    pub fn cell_generator(&self, cell: &CellSpec, trial: usize) -> GeneratorSpec {
        GeneratorSpec {
            m: cell.m,
            snr_db: cell.snr_db,
            seed: self.trial_seed(cell.index, trial),
            ..self.generator.clone()
        }
    }
}

/// `round(ratio · n)`.
pub fn ratio_to_m(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

/// A trial that did not produce a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub cell: usize,
    pub seed: u64,
    pub algorithm: String,
    pub message: String,
    /// The error was an internal invariant violation (e.g. a root bracket failure).
    pub invariant: bool,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    /// One record per algorithm, in config order.
    pub records: Vec<TrialRecord>,
    pub beta_stats: BetaStats,
    pub failures: Vec<TrialFailure>,
}

/// Generates one instance and runs every algorithm on it.
pub fn run_trial(config: &ExperimentConfig, cell: &CellSpec, trial: usize) -> TrialOutcome {
    let spec = config.cell_generator(cell, trial);
    let seed = spec.seed;
    let mut out = TrialOutcome {
        cell: cell.index,
        trial,
        seed,
        records: Vec::with_capacity(config.algorithms.len()),
        beta_stats: BetaStats::default(),
        failures: Vec::new(),
    };
    let instance = match generate(&spec) {
        Ok(inst) => inst,
        Err(e) => {
            for a in &config.algorithms {
                out.records.push(TrialRecord::failed(&a.label, seed));
                out.failures.push(TrialFailure {
                    cell: cell.index,
                    seed,
                    algorithm: a.label.clone(),
                    message: format!("generation: {e}"),
                    invariant: false,
                });
            }
            return out;
        }
    };
    let problem = &instance.problem;
    let x_true = problem.x_true().unwrap_or_default();
    let support = problem.true_support().unwrap_or_default();
    for a in &config.algorithms {
        let start = Instant::now();
        let result = run_em(problem, &a.solver).and_then(|res| {
            let runtime_ms = if config.record_runtime {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let rec = evaluate_trial(
                &a.label,
                seed,
                &res.x_hat,
                x_true,
                support,
                config.support_tau,
                res.iterations,
                runtime_ms,
            )?;
            Ok((rec, res.beta_stats))
        });
        match result {
            Ok((rec, stats)) => {
                out.beta_stats.merge(&stats);
                out.records.push(rec);
            }
            Err(e) => {
                out.records.push(TrialRecord::failed(&a.label, seed));
                out.failures.push(TrialFailure {
                    cell: cell.index,
                    seed,
                    algorithm: a.label.clone(),
                    message: e.to_string(),
                    invariant: matches!(e, Error::Invariant(_)),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: CellSpec,
    /// Sorted by seed, then algorithm in config order.
    pub records: Vec<TrialRecord>,
}

impl CellResult {
    pub fn records_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.records.iter().filter(move |r| r.algorithm == label)
    }

    pub fn summaries(&self, algorithms: &[AlgorithmSpec]) -> Result<Vec<AggregateSummary>> {
        algorithms
            .iter()
            .map(|a| aggregate(&self.records_for(&a.label).cloned().collect::<Vec<_>>()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub beta_stats: BetaStats,
    pub failures: Vec<TrialFailure>,
}

impl ExperimentOutcome {
    pub fn summaries(&self) -> Result<Vec<Vec<AggregateSummary>>> {
        self.cells
            .iter()
            .map(|c| c.summaries(&self.config.algorithms))
            .collect()
    }

    /// Mean `√NMSE` per cell for one algorithm, over completed trials.
    pub fn grid(&self, label: &str) -> Vec<GridCell> {
        self.cells
            .iter()
            .map(|c| {
                let rn: Vec<f64> = c
                    .records_for(label)
                    .filter(|r| !r.is_failed())
                    .map(|r| r.nmse.sqrt())
                    .collect();
                GridCell {
                    snr_db: c.cell.snr_db,
                    measurement_ratio: c.cell.ratio,
                    mean_rnmse: if rn.is_empty() {
                        f64::NAN
                    } else {
                        rn.iter().sum::<f64>() / rn.len() as f64
                    },
                    n_trials: rn.len(),
                }
            })
            .collect()
    }
}

/// Default worker count: all available cores.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every trial of every cell on a pool of `threads` workers.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.n_trials).map(move |t| (c, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config_at("threads", e.to_string()))?;
    let mut outcomes: Vec<TrialOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| run_trial(config, &cells[c], t))
            .collect()
    });
    outcomes.sort_by_key(|o| (o.cell, o.seed, o.trial));

    let mut beta_stats = BetaStats::default();
    let mut failures = Vec::new();
    let mut results: Vec<CellResult> = cells
        .iter()
        .map(|&cell| CellResult {
            cell,
            records: Vec::new(),
        })
        .collect();
    for o in outcomes {
        beta_stats.merge(&o.beta_stats);
        failures.extend(o.failures);
        results[o.cell].records.extend(o.records);
    }
    Ok(ExperimentOutcome {
        config: config.clone(),
        cells: results,
        beta_stats,
        failures,
    })
}

/// Runs a two-dimensional sweep; the grid is read off with [`ExperimentOutcome::grid`].
pub fn run_phase_grid(config: &ExperimentConfig, threads: usize) -> Result<ExperimentOutcome> {
    match &config.sweep {
        Some(s) if !s.snr_db.is_empty() && !s.measurement_ratio.is_empty() => {}
        _ => {
            return Err(Error::config_at(
                "sweep",
                "phase grid needs both snr_db and measurement_ratio lists",
            ))
        }
    }
    run_experiment(config, threads)
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    algorithm: &'a str,
    metric: &'static str,
    mean: f64,
    std: f64,
    n: usize,
    success_rate: f64,
}

fn summary_rows(s: &AggregateSummary) -> Vec<SummaryRow<'_>> {
    [
        ("nmse", s.nmse),
        ("corr", s.corr),
        ("srr", s.srr),
        ("iterations", s.iterations),
    ]
    .into_iter()
    .map(|(metric, m)| SummaryRow {
        algorithm: &s.algorithm,
        metric,
        mean: m.mean,
        std: m.std,
        n: m.n,
        success_rate: s.success_rate,
    })
    .collect()
}

/// Config echo stamped with the tool version; `source` is the verbatim input text.
pub fn config_echo(config: &ExperimentConfig, source: Option<&str>) -> serde_json::Value {
    serde_json::json!({
        "version": VERSION,
        "config": config,
        "source": source,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invariant(format!("JSON serialization failed: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_csv_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn summary_document(outcome: &ExperimentOutcome, source: Option<&str>) -> Result<serde_json::Value> {
    let summaries = outcome.summaries()?;
    let cells: Vec<serde_json::Value> = outcome
        .cells
        .iter()
        .zip(&summaries)
        .map(|(c, s)| {
            let rows: Vec<SummaryRow<'_>> = s.iter().flat_map(summary_rows).collect();
            serde_json::json!({
                "cell": c.cell,
                "failures": s.iter().map(|a| a.failures).sum::<usize>(),
                "summary": rows,
            })
        })
        .collect();
    let mut doc = config_echo(&outcome.config, source);
    doc["failures"] = outcome.failures.len().into();
    doc["failed_trials"] = serde_json::to_value(&outcome.failures)
        .map_err(|e| Error::Invariant(e.to_string()))?;
    if let [only] = cells.as_slice() {
        doc["summary"] = only["summary"].clone();
    } else {
        doc["cells"] = cells.into();
    }
    Ok(doc)
}

/// Writes `trials.csv` (per cell when sweeping), `summary.json` and
/// `config.json` under `root`. Returns the files written.
pub fn write_experiment(
    outcome: &ExperimentOutcome,
    root: &Path,
    source: Option<&str>,
) -> Result<Vec<PathBuf>> {
    create_dir(root)?;
    let mut written = Vec::new();
    if let [only] = outcome.cells.as_slice() {
        let p = root.join("trials.csv");
        write_csv_file(&p, |b| write_trials_csv(b, &only.records))?;
        written.push(p);
    } else {
        let p = root.join("cells.csv");
        write_csv_file(&p, |b| {
            let mut w = csv::Writer::from_writer(b);
            for c in &outcome.cells {
                w.serialize(c.cell)
                    .map_err(|e| Error::Invariant(format!("CSV write failed: {e}")))?;
            }
            w.flush().map_err(|e| Error::Invariant(e.to_string()))
        })?;
        written.push(p);
        for c in &outcome.cells {
            let dir = root.join(format!("cell_{:03}", c.cell.index));
            create_dir(&dir)?;
            let p = dir.join("trials.csv");
            write_csv_file(&p, |b| write_trials_csv(b, &c.records))?;
            written.push(p);
        }
    }
    let p = root.join("summary.json");
    write_json(&p, &summary_document(outcome, source)?)?;
    written.push(p);
    let p = root.join("config.json");
    write_json(&p, &config_echo(&outcome.config, source))?;
    written.push(p);
    Ok(written)
}

/// [`write_experiment`] plus one `grid_<label>.csv` per algorithm.
pub fn write_phase_grid(
    outcome: &ExperimentOutcome,
    root: &Path,
    source: Option<&str>,
) -> Result<Vec<PathBuf>> {
    let mut written = write_experiment(outcome, root, source)?;
    for a in &outcome.config.algorithms {
        let p = root.join(format!("grid_{}.csv", a.label));
        write_csv_file(&p, |b| write_grid_csv(b, &outcome.grid(&a.label)))?;
        written.push(p);
    }
    Ok(written)
}
