//! Recovery metrics, the success criterion, and trial aggregation.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative support threshold used when none is configured.
pub const DEFAULT_SUPPORT_TAU: f64 = 0.01;

/// NMSE at or below this counts as an exact recovery.
pub const SUCCESS_NMSE: f64 = 1e-5;

/// CSV header for trial records, in column order.
pub const TRIAL_CSV_HEADER: [&str; 8] = [
    "algorithm",
    "seed",
    "nmse",
    "corr",
    "srr",
    "iterations",
    "runtime_ms",
    "success",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: String,
    pub seed: u64,
    pub nmse: f64,
    pub corr: f64,
    pub srr: f64,
    pub iterations: usize,
    pub runtime_ms: f64,
    pub success: bool,
}

impl TrialRecord {
    /// Record for a trial whose solve failed; metrics are NaN.
    pub fn failed(algorithm: impl Into<String>, seed: u64) -> Self {
        Self {
            algorithm: algorithm.into(),
            seed,
            nmse: f64::NAN,
            corr: f64::NAN,
            srr: f64::NAN,
            iterations: 0,
            runtime_ms: 0.0,
            success: false,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.nmse.is_nan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub snr_db: f64,
    #[serde(rename = "ratio")]
    pub measurement_ratio: f64,
    pub mean_rnmse: f64,
    pub n_trials: usize,
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `‖x̂ − x‖² / ‖x‖²`.
pub fn nmse(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    Error::check_len("estimate", x_true.len(), x_hat.len())?;
    let energy = norm_sq(x_true);
    if !(energy > 0.0) {
        return Err(Error::domain("NMSE is undefined for a zero true signal"));
    }
    let err: f64 = x_hat
        .iter()
        .zip(x_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(err / energy)
}

/// Cosine similarity, clamped to `[−1, 1]`.
pub fn correlation(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    Error::check_len("estimate", x_true.len(), x_hat.len())?;
    let (na, nb) = (norm_sq(x_hat).sqrt(), norm_sq(x_true).sqrt());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::domain("correlation is undefined for a zero-norm vector"));
    }
    let dot: f64 = x_hat.iter().zip(x_true).map(|(a, b)| a * b).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `|Ŝ ∩ S| / (|Ŝ \ S| + |S|)`.
pub fn srr(estimated: &[usize], truth: &[usize]) -> Result<f64> {
    let s: BTreeSet<usize> = truth.iter().copied().collect();
    if s.is_empty() {
        return Err(Error::domain("SRR needs a nonempty true support"));
    }
    let e: BTreeSet<usize> = estimated.iter().copied().collect();
    let hit = e.intersection(&s).count();
    let extra = e.difference(&s).count();
    Ok(hit as f64 / (extra + s.len()) as f64)
}

/// `{i : |x̂_i| > tau · max_j |x̂_j|}`.
pub fn extract_support(x_hat: &[f64], tau: f64) -> Result<Vec<usize>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("support threshold must lie in (0, 1), got {tau}")));
    }
    let peak = x_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let cut = tau * peak;
    Ok((0..x_hat.len()).filter(|&i| x_hat[i].abs() > cut).collect())
}

pub fn success(nmse_value: f64) -> bool {
    nmse_value <= SUCCESS_NMSE
}

/// Builds a record from a recovered signal.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_trial(
    algorithm: &str,
    seed: u64,
    x_hat: &[f64],
    x_true: &[f64],
    true_support: &[usize],
    tau: f64,
    iterations: usize,
    runtime_ms: f64,
) -> Result<TrialRecord> {
    let nmse_value = nmse(x_hat, x_true)?;
    // An all-zero estimate is a legitimate (bad) outcome, not an error.
    let corr = correlation(x_hat, x_true).unwrap_or(0.0);
    let srr_value = srr(&extract_support(x_hat, tau)?, true_support)?;
    Ok(TrialRecord {
        algorithm: algorithm.to_string(),
        seed,
        nmse: nmse_value,
        corr,
        srr: srr_value,
        iterations,
        runtime_ms,
        success: success(nmse_value),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 when `n = 1`.
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub algorithm: String,
    pub nmse: MetricSummary,
    pub corr: MetricSummary,
    pub srr: MetricSummary,
    pub iterations: MetricSummary,
    pub success_rate: f64,
    /// Trials whose solve failed; excluded from the metric statistics.
    pub failures: usize,
    /// Set when only one completed trial backs the statistics.
    pub single_trial: bool,
}

/// Two-pass mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::domain("cannot summarize an empty sample"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MetricSummary { mean, std, n })
}

/// Summary of one algorithm's trials. Records are sorted by seed first, so
/// the result does not depend on completion order.
pub fn aggregate(records: &[TrialRecord]) -> Result<AggregateSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::domain("cannot aggregate an empty record list"))?;
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let done: Vec<&TrialRecord> = sorted.iter().copied().filter(|r| !r.is_failed()).collect();
    let failures = sorted.len() - done.len();
    let column = |f: fn(&TrialRecord) -> f64| -> MetricSummary {
        let v: Vec<f64> = done.iter().map(|r| f(r)).collect();
        mean_std(&v).unwrap_or(MetricSummary {
            mean: f64::NAN,
            std: f64::NAN,
            n: 0,
        })
    };
    let successes = sorted.iter().filter(|r| r.success).count();
    Ok(AggregateSummary {
        algorithm: first.algorithm.clone(),
        nmse: column(|r| r.nmse),
        corr: column(|r| r.corr),
        srr: column(|r| r.srr),
        iterations: column(|r| r.iterations as f64),
        success_rate: successes as f64 / sorted.len() as f64,
        failures,
        single_trial: done.len() == 1,
    })
}

pub fn write_trials_csv<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::Invariant(format!("CSV write failed: {e}"));
    w.write_record(TRIAL_CSV_HEADER).map_err(wrap)?;
    for r in records {
        w.write_record([
            r.algorithm.clone(),
            r.seed.to_string(),
            r.nmse.to_string(),
            r.corr.to_string(),
            r.srr.to_string(),
            r.iterations.to_string(),
            r.runtime_ms.to_string(),
            r.success.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush()
        .map_err(|e| Error::Invariant(format!("CSV flush failed: {e}")))
}

pub fn read_trials_csv<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r
        .headers()
        .map_err(|e| Error::config(format!("bad trials CSV header: {e}")))?
        .clone();
    if header.iter().ne(TRIAL_CSV_HEADER) {
        return Err(Error::config(format!(
            "trials CSV header must be {}",
            TRIAL_CSV_HEADER.join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(row, rec)| {
            rec.map_err(|e| Error::config_at(format!("row {}", row + 2), e.to_string()))
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(writer: W, cells: &[GridCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in cells {
        w.serialize(c)
            .map_err(|e| Error::Invariant(format!("CSV write failed: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::Invariant(format!("CSV flush failed: {e}")))
}

pub fn read_grid_csv<R: Read>(reader: R) -> Result<Vec<GridCell>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .enumerate()
        .map(|(row, rec)| {
            rec.map_err(|e| Error::config_at(format!("row {}", row + 2), e.to_string()))
        })
        .collect()
}
