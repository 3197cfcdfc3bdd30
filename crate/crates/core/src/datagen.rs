//! Seeded synthetic instances: Gaussian sensing matrices, three structured
//! signal families, and noise scaled to an exact SNR.
//!
//! Every random draw comes from a ChaCha stream keyed by [`derive_seed`], so
//! an instance is a pure function of its [`GeneratorSpec`].

use std::path::Path;

use faer::Mat;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::SensingProblem;

/// Attempts before a generator gives up on a degenerate draw.
pub const MAX_GENERATION_ATTEMPTS: u64 = 64;

const STREAM_MATRIX: u64 = 0;
const STREAM_SIGNAL: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream seed: `s = mix64(master)`, then `s = mix64(s ^ mix64(part))` per part.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(master), |s, &p| mix64(s ^ mix64(p)))
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Signal family and its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SignalFamily {
    /// `k` nonzeros in `n_blocks` separated blocks with per-block amplitude spread.
    Heteroscedastic { k: usize, n_blocks: usize },
    /// Clustered blocks plus isolated spikes.
    MultiPattern {
        k_clustered: usize,
        n_clusters: usize,
        k_isolated: usize,
    },
    /// Support from a stationary two-state Markov chain; `p = Pr(s_i = 0)`,
    /// `p10 = Pr(s_{i+1} = 1 | s_i = 0)`.
    Chain { p: f64, p10: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    #[serde(serialize_with = "ser_snr", deserialize_with = "de_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub normalize_columns: bool,
    #[serde(flatten)]
    pub family: SignalFamily,
}

fn default_true() -> bool {
    true
}

pub(crate) fn ser_snr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn de_snr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Snr {
        Num(f64),
        Text(String),
    }
    match Snr::deserialize(d)? {
        Snr::Num(v) => Ok(v),
        Snr::Text(t) if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity") => {
            Ok(f64::INFINITY)
        }
        Snr::Text(t) => Err(serde::de::Error::custom(format!("invalid snr_db `{t}`"))),
    }
}

impl GeneratorSpec {
    /// The heteroscedastic benchmark: N = 162, K = 40 in 4 blocks, rate 0.5, 15 dB.
    pub fn heteroscedastic_default(seed: u64) -> Self {
        Self {
            n: 162,
            m: 81,
            snr_db: 15.0,
            seed,
            normalize_columns: true,
            family: SignalFamily::Heteroscedastic { k: 40, n_blocks: 4 },
        }
    }

    /// The multi-pattern benchmark: N = 162, M = 80, 25 clustered in 3 blocks plus 5 isolated.
    pub fn multi_pattern_default(seed: u64) -> Self {
        Self {
            n: 162,
            m: 80,
            snr_db: 15.0,
            seed,
            normalize_columns: true,
            family: SignalFamily::MultiPattern {
                k_clustered: 25,
                n_clusters: 3,
                k_isolated: 5,
            },
        }
    }

    /// The chain benchmark: N = 512, M = 130, p = 0.8, p10 = 0.01.
    pub fn chain_default(seed: u64) -> Self {
        Self {
            n: 512,
            m: 130,
            snr_db: 15.0,
            seed,
            normalize_columns: true,
            family: SignalFamily::Chain { p: 0.8, p10: 0.01 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::config_at("m", "need at least one measurement"));
        }
        if self.n < 2 {
            return Err(Error::config_at("n", "signal dimension must be at least 2"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config_at("snr_db", "must be a number or \"inf\""));
        }
        match self.family {
            SignalFamily::Heteroscedastic { k, n_blocks } => {
                if n_blocks < 1 {
                    return Err(Error::config_at("n_blocks", "need at least one block"));
                }
                if k > self.n {
                    return Err(Error::config_at("k", format!("k = {k} exceeds n = {}", self.n)));
                }
                if k < 2 * n_blocks {
                    return Err(Error::config_at(
                        "k",
                        format!("k = {k} cannot fill {n_blocks} blocks of size >= 2"),
                    ));
                }
            }
            SignalFamily::MultiPattern {
                k_clustered,
                n_clusters,
                k_isolated,
            } => {
                if k_clustered + k_isolated > self.n {
                    return Err(Error::config_at("k_clustered", "total nonzeros exceed n"));
                }
                if n_clusters == 0 && k_clustered > 0 {
                    return Err(Error::config_at("n_clusters", "clustered entries need a cluster"));
                }
                if k_clustered < 2 * n_clusters {
                    return Err(Error::config_at(
                        "k_clustered",
                        format!("{k_clustered} entries cannot fill {n_clusters} clusters of size >= 2"),
                    ));
                }
                if k_clustered + k_isolated == 0 {
                    return Err(Error::config_at("k_isolated", "signal would be all zero"));
                }
            }
            SignalFamily::Chain { p, p10 } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::config_at("p", format!("must lie in (0, 1), got {p}")));
                }
                if !(p10 > 0.0 && p10 < 1.0) {
                    return Err(Error::config_at("p10", format!("must lie in (0, 1), got {p10}")));
                }
                let p01 = chain_p01(p, p10);
                if !(p01 > 0.0 && p01 < 1.0) {
                    return Err(Error::config_at(
                        "p10",
                        format!("derived p01 = {p01} must lie in (0, 1)"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `p01 = p · p10 / (1 − p)`, the on→off transition probability.
pub fn chain_p01(p: f64, p10: f64) -> f64 {
    p * p10 / (1.0 - p)
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub problem: SensingProblem,
    pub spec: GeneratorSpec,
}

/// I/O schema for an instance; `phi` is row-major and `support` is 0-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub phi: Vec<f64>,
    pub m: usize,
    pub n: usize,
    pub y: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
    pub support: Option<Vec<usize>>,
    pub spec: Option<GeneratorSpec>,
}

impl GeneratedInstance {
    pub fn to_file(&self) -> InstanceFile {
        let p = &self.problem;
        InstanceFile {
            phi: p.phi_row_major(),
            m: p.m(),
            n: p.n(),
            y: p.y().to_vec(),
            x_true: p.x_true().map(<[f64]>::to_vec),
            support: p.true_support().map(<[usize]>::to_vec),
            spec: Some(self.spec.clone()),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file())
            .map_err(|e| Error::Invariant(format!("instance serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl InstanceFile {
    pub fn into_problem(self) -> Result<SensingProblem> {
        let mut problem = SensingProblem::from_row_major(self.m, self.n, &self.phi, self.y)?;
        if let Some(x) = self.x_true {
            problem = problem.with_ground_truth(x)?;
            if let Some(s) = &self.support {
                if Some(s.as_slice()) != problem.true_support() {
                    return Err(Error::config_at("support", "does not match nonzeros of x_true"));
                }
            }
        }
        if let Some(spec) = &self.spec {
            problem = problem.with_snr_db(spec.snr_db);
        }
        Ok(problem)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config {
            message: e.to_string(),
            location: Some(format!("{} line {} column {}", path.display(), e.line(), e.column())),
        })
    }
}

/// I.i.d. standard normal `m x n` matrix with unit-norm columns.
pub fn gen_sensing_matrix(m: usize, n: usize, seed: u64) -> Result<Mat<f64>> {
    gen_sensing_matrix_with(m, n, seed, true)
}

pub fn gen_sensing_matrix_with(m: usize, n: usize, seed: u64, normalize: bool) -> Result<Mat<f64>> {
    if m < 1 || n < 2 {
        return Err(Error::domain(format!("sensing matrix needs m >= 1, n >= 2 (got {m} x {n})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = Mat::<f64>::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            phi[(i, j)] = StandardNormal.sample(&mut rng);
        }
        if normalize {
            let norm = (0..m).map(|i| phi[(i, j)] * phi[(i, j)]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..m {
                    phi[(i, j)] /= norm;
                }
            }
        }
    }
    Ok(phi)
}

/// `clean + noise` with `‖noise‖ = ‖clean‖ · 10^(−snr_db / 20)` exactly.
///
/// An infinite `snr_db` returns `clean` unchanged.
pub fn add_noise_at_snr(clean: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    let clean_norm = clean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(clean_norm > 0.0) {
        return Err(Error::domain("cannot set an SNR against a zero signal"));
    }
    if snr_db.is_nan() {
        return Err(Error::domain("snr_db is NaN"));
    }
    if snr_db == f64::INFINITY {
        return Ok(clean.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(raw_norm > 0.0) {
        return Err(Error::Generation("noise draw has zero norm".into()));
    }
    let scale = clean_norm * 10f64.powf(-snr_db / 20.0) / raw_norm;
    Ok(clean.iter().zip(&raw).map(|(c, r)| c + scale * r).collect())
}

/// Uniformly random composition of `total` into `parts` sizes, each `>= min_size`.
pub fn random_composition<R: Rng + ?Sized>(
    total: usize,
    parts: usize,
    min_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if parts == 0 {
        return if total == 0 {
            Ok(Vec::new())
        } else {
            Err(Error::Generation(format!("cannot split {total} into zero parts")))
        };
    }
    let floor = parts * min_size;
    if total < floor {
        return Err(Error::Generation(format!(
            "cannot split {total} into {parts} parts of size >= {min_size}"
        )));
    }
    let extra = total - floor;
    // Stars and bars: choose parts − 1 bar positions among extra + parts − 1 slots.
    let slots = extra + parts - 1;
    let mut bars = index::sample(rng, slots, parts - 1).into_vec();
    bars.sort_unstable();
    let mut sizes = Vec::with_capacity(parts);
    let mut prev: isize = -1;
    for &b in &bars {
        sizes.push((b as isize - prev - 1) as usize + min_size);
        prev = b as isize;
    }
    sizes.push((slots as isize - prev - 1) as usize + min_size);
    Ok(sizes)
}

/// Start offsets for items of the given lengths laid out in order with at
/// least one zero between neighbors; leftover zeros are spread uniformly.
fn place_separated<R: Rng + ?Sized>(n: usize, lengths: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let occupied: usize = lengths.iter().sum();
    let required_gaps = lengths.len().saturating_sub(1);
    if occupied + required_gaps > n {
        return Err(Error::Generation(format!(
            "{} items covering {occupied} entries do not fit separated in length {n}",
            lengths.len()
        )));
    }
    let free = n - occupied - required_gaps;
    let slots = lengths.len() + 1;
    let spread: Vec<usize> = random_composition(free + slots, slots, 1, rng)?
        .into_iter()
        .map(|s| s - 1)
        .collect();
    let mut starts = Vec::with_capacity(lengths.len());
    let mut pos = 0;
    for (k, &len) in lengths.iter().enumerate() {
        pos += spread[k];
        if k > 0 {
            pos += 1;
        }
        starts.push(pos);
        pos += len;
    }
    Ok(starts)
}

pub fn gen_heteroscedastic(spec: &GeneratorSpec) -> Result<GeneratedInstance> {
    spec.validate()?;
    let SignalFamily::Heteroscedastic { k, n_blocks } = spec.family else {
        return Err(Error::config_at("family", "expected heteroscedastic"));
    };
    let mut rng = rng_for(spec.seed, &[STREAM_SIGNAL]);
    let sizes = random_composition(k, n_blocks, 2, &mut rng)?;
    let starts = place_separated(spec.n, &sizes, &mut rng)?;
    let mut x = vec![0.0; spec.n];
    for (&start, &len) in starts.iter().zip(&sizes) {
        let sd: f64 = rng.random_range(0.5..=2.0);
        let dist = Normal::new(0.0, sd).map_err(|e| Error::Generation(e.to_string()))?;
        for v in &mut x[start..start + len] {
            *v = nonzero_draw(&dist, &mut rng);
        }
    }
    finish(spec, x)
}

pub fn gen_multi_pattern(spec: &GeneratorSpec) -> Result<GeneratedInstance> {
    spec.validate()?;
    let SignalFamily::MultiPattern {
        k_clustered,
        n_clusters,
        k_isolated,
    } = spec.family
    else {
        return Err(Error::config_at("family", "expected multi_pattern"));
    };
    let mut rng = rng_for(spec.seed, &[STREAM_SIGNAL]);
    let mut lengths = random_composition(k_clustered, n_clusters, 2, &mut rng)?;
    lengths.extend(std::iter::repeat_n(1, k_isolated));
    lengths.shuffle(&mut rng);
    let starts = place_separated(spec.n, &lengths, &mut rng)?;
    let mut x = vec![0.0; spec.n];
    for (&start, &len) in starts.iter().zip(&lengths) {
        for v in &mut x[start..start + len] {
            *v = nonzero_draw(&StandardNormal, &mut rng);
        }
    }
    finish(spec, x)
}

pub fn gen_chain(spec: &GeneratorSpec) -> Result<GeneratedInstance> {
    spec.validate()?;
    let SignalFamily::Chain { p, p10 } = spec.family else {
        return Err(Error::config_at("family", "expected chain"));
    };
    let p01 = chain_p01(p, p10);
    let x = regenerate_until_nonempty(spec.seed, |rng| {
        let s = markov_chain_support(spec.n, p01, p10, 1.0 - p, rng);
        s.iter()
            .map(|&on| {
                let theta: f64 = StandardNormal.sample(rng);
                if on {
                    theta
                } else {
                    0.0
                }
            })
            .collect()
    })?;
    finish(spec, x)
}

/// Draws a signal from successive substreams until it has a nonzero entry.
pub(crate) fn regenerate_until_nonempty<F>(seed: u64, mut draw: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = rng_for(seed, &[STREAM_SIGNAL, attempt]);
        let x = draw(&mut rng);
        if x.iter().any(|v| *v != 0.0) {
            return Ok(x);
        }
    }
    Err(Error::Generation(format!(
        "all {MAX_GENERATION_ATTEMPTS} attempts produced an all-zero support"
    )))
}

/// Two-state Markov support: `Pr(s_0 = 1) = first_on`, then on→off with
/// probability `p01` and off→on with probability `p10`.
pub fn markov_chain_support<R: Rng + ?Sized>(
    n: usize,
    p01: f64,
    p10: f64,
    first_on: f64,
    rng: &mut R,
) -> Vec<bool> {
    let mut s = Vec::with_capacity(n);
    if n == 0 {
        return s;
    }
    let mut on = rng.random::<f64>() < first_on;
    s.push(on);
    for _ in 1..n {
        let u: f64 = rng.random();
        on = if on { u >= p01 } else { u < p10 };
        s.push(on);
    }
    s
}

/// Lengths of maximal runs of `true`.
pub fn run_lengths(s: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut cur = 0;
    for &on in s {
        if on {
            cur += 1;
        } else if cur > 0 {
            runs.push(cur);
            cur = 0;
        }
    }
    if cur > 0 {
        runs.push(cur);
    }
    runs
}

/// Lengths of maximal runs of nonzeros in a signal.
pub fn nonzero_runs(x: &[f64]) -> Vec<usize> {
    run_lengths(&x.iter().map(|v| *v != 0.0).collect::<Vec<_>>())
}

pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedInstance> {
    match spec.family {
        SignalFamily::Heteroscedastic { .. } => gen_heteroscedastic(spec),
        SignalFamily::MultiPattern { .. } => gen_multi_pattern(spec),
        SignalFamily::Chain { .. } => gen_chain(spec),
    }
}

fn nonzero_draw<D: Distribution<f64>, R: Rng + ?Sized>(dist: &D, rng: &mut R) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v != 0.0 {
            return v;
        }
    }
}

fn finish(spec: &GeneratorSpec, x: Vec<f64>) -> Result<GeneratedInstance> {
    let phi = gen_sensing_matrix_with(
        spec.m,
        spec.n,
        derive_seed(spec.seed, &[STREAM_MATRIX]),
        spec.normalize_columns,
    )?;
    let clean: Vec<f64> = (0..spec.m)
        .map(|i| (0..spec.n).map(|j| phi[(i, j)] * x[j]).sum())
        .collect();
    let y = add_noise_at_snr(&clean, spec.snr_db, derive_seed(spec.seed, &[STREAM_NOISE]))?;
    let problem = SensingProblem::new(phi, y)?
        .with_ground_truth(x)?
        .with_snr_db(spec.snr_db);
    Ok(GeneratedInstance {
        problem,
        spec: spec.clone(),
    })
}
