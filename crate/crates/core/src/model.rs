//! Domain types shared by every solver, and the tridiagonal coupling that
//! maps precision hyperparameters to per-coefficient prior precisions.
//!
//! Indices are 0-based. The neighbors of the first and last coefficient are
//! virtual zeros: `alpha[-1] = alpha[n] = 0` and `beta[-1] = beta[n-1] = 0`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling for precision hyperparameters; entries above it are clamped.
pub const DEFAULT_ALPHA_CAP: f64 = 1e10;

/// One recovery instance: `y = phi * x + noise`.
///
/// The Gram matrix `phiᵀphi` and `phiᵀy` are computed once at construction
/// because every EM iteration needs them.
#[derive(Debug, Clone)]
pub struct SensingProblem {
    phi: Mat<f64>,
    y: Vec<f64>,
    x_true: Option<Vec<f64>>,
    true_support: Option<Vec<usize>>,
    snr_db: Option<f64>,
    gram: Mat<f64>,
    phi_t_y: Vec<f64>,
}

impl SensingProblem {
    pub fn new(phi: Mat<f64>, y: Vec<f64>) -> Result<Self> {
        let (m, n) = (phi.nrows(), phi.ncols());
        if m < 1 {
            return Err(Error::domain("measurement matrix needs at least one row"));
        }
        if n < 2 {
            return Err(Error::domain("signal dimension must be at least 2"));
        }
        Error::check_len("measurement vector", m, y.len())?;
        for j in 0..n {
            for i in 0..m {
                if !phi[(i, j)].is_finite() {
                    return Err(Error::domain(format!("phi[{i}, {j}] is not finite")));
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("measurement vector has non-finite entries"));
        }
        let gram = phi.transpose() * &phi;
        let phi_t_y = (0..n)
            .map(|j| (0..m).map(|i| phi[(i, j)] * y[i]).sum())
            .collect();
        Ok(Self {
            phi,
            y,
            x_true: None,
            true_support: None,
            snr_db: None,
            gram,
            phi_t_y,
        })
    }

    /// Builds a problem from a row-major `m x n` buffer.
    pub fn from_row_major(m: usize, n: usize, data: &[f64], y: Vec<f64>) -> Result<Self> {
        Error::check_len("row-major phi buffer", m * n, data.len())?;
        let phi = Mat::from_fn(m, n, |i, j| data[i * n + j]);
        Self::new(phi, y)
    }

    /// Attaches the ground-truth signal; the support is derived from its nonzeros.
    pub fn with_ground_truth(mut self, x_true: Vec<f64>) -> Result<Self> {
        Error::check_len("ground-truth signal", self.n(), x_true.len())?;
        self.true_support = Some(support_of(&x_true));
        self.x_true = Some(x_true);
        Ok(self)
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &Mat<f64> {
        &self.phi
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_true(&self) -> Option<&[f64]> {
        self.x_true.as_deref()
    }

    pub fn true_support(&self) -> Option<&[usize]> {
        self.true_support.as_deref()
    }

    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }

    /// `phiᵀ phi`, N x N.
    pub fn gram(&self) -> &Mat<f64> {
        &self.gram
    }

    /// `phiᵀ y`, length N.
    pub fn phi_t_y(&self) -> &[f64] {
        &self.phi_t_y
    }

    /// `phi` flattened row by row.
    pub fn phi_row_major(&self) -> Vec<f64> {
        let (m, n) = (self.m(), self.n());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(self.phi[(i, j)]);
            }
        }
        out
    }
}

/// Indices of the nonzero entries, ascending.
pub fn support_of(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Gamma-prior constants: `(a, b)` on alpha, `(c, d)` on beta, `(g, h)` on gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperPriors {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub g: f64,
    pub h: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            a: 1e-4,
            b: 1e-4,
            c: 10.0,
            d: 1.0,
            g: 1e-4,
            h: 1e-4,
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("g", self.g),
            ("h", self.h),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "hyperprior {name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.c <= 1.0 {
            return Err(Error::domain(format!(
                "hyperprior c must exceed 1 for a unique coupling root, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Upper bound on every learned coupling parameter.
    pub fn beta_upper_bound(&self) -> f64 {
        self.c / self.d
    }
}

/// Coupling parameters between neighbors `i` and `i + 1`; length N - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector(pub Vec<f64>);

impl CouplingVector {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if let Some(v) = beta.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!(
                "coupling parameters must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self(beta))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n.saturating_sub(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-coefficient precision hyperparameters, clamped to `(0, cap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionField {
    pub alpha: Vec<f64>,
    pub cap: f64,
}

impl PrecisionField {
    pub fn new(alpha: Vec<f64>, cap: f64) -> Result<Self> {
        if !(cap > 0.0) {
            return Err(Error::domain(format!("alpha cap must be positive, got {cap}")));
        }
        if let Some(v) = alpha.iter().find(|v| !(**v > 0.0 && **v <= cap)) {
            return Err(Error::domain(format!(
                "precisions must lie in (0, {cap}], got {v}"
            )));
        }
        Ok(Self { alpha, cap })
    }

    pub fn constant(n: usize, value: f64, cap: f64) -> Result<Self> {
        Self::new(vec![value.min(cap); n], cap)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Number of entries sitting at the cap (pruned coefficients).
    pub fn n_capped(&self) -> usize {
        self.alpha.iter().filter(|&&a| a >= self.cap).count()
    }
}

/// Full hyperparameter and posterior state of one EM run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub alpha: PrecisionField,
    pub beta: CouplingVector,
    pub gamma: f64,
    pub mu: Vec<f64>,
    pub sigma: Mat<f64>,
    pub iteration: usize,
}

/// Which coupling matrix maps `alpha` to the prior precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingScheme {
    /// Learned per-edge coupling (symmetric diversified tridiagonal matrix).
    Spp,
    /// One shared, fixed coupling on every edge (pattern-coupled SBL).
    PcFixed(f64),
    /// No coupling; classical SBL.
    None,
}

impl CouplingScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CouplingScheme::PcFixed(b) if !(b.is_finite() && b >= 0.0) => Err(Error::domain(
                format!("fixed coupling must be finite and nonnegative, got {b}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CouplingScheme::Spp => "learned tridiagonal coupling".to_string(),
            CouplingScheme::PcFixed(b) => format!("fixed shared coupling beta = {b}"),
            CouplingScheme::None => "identity (no coupling)".to_string(),
        }
    }
}

/// `lambda_i = alpha_i + beta_{i-1} alpha_{i-1} + beta_i alpha_{i+1}`.
pub fn prior_precisions(alpha: &PrecisionField, beta: &CouplingVector) -> Result<Vec<f64>> {
    let n = alpha.len();
    Error::check_len("coupling vector", n.saturating_sub(1), beta.len())?;
    let mut out = vec![0.0; n];
    prior_precisions_into(alpha.as_slice(), beta.as_slice(), &mut out);
    Ok(out)
}

/// Slice form of [`prior_precisions`]; lengths are assumed consistent.
pub(crate) fn prior_precisions_into(alpha: &[f64], beta: &[f64], out: &mut [f64]) {
    let n = alpha.len();
    for i in 0..n {
        let mut v = alpha[i];
        if i > 0 {
            v += beta[i - 1] * alpha[i - 1];
        }
        if i + 1 < n {
            v += beta[i] * alpha[i + 1];
        }
        out[i] = v;
    }
}

/// Dense symmetric tridiagonal coupling matrix with unit diagonal.
///
/// Only used by tests and diagnostics; solvers go through
/// [`prior_precisions`].
pub fn build_coupling_matrix(
    scheme: CouplingScheme,
    beta: &CouplingVector,
    n: usize,
) -> Result<Mat<f64>> {
    if n < 2 {
        return Err(Error::domain(format!("coupling matrix needs n >= 2, got {n}")));
    }
    scheme.validate()?;
    let off: Vec<f64> = match scheme {
        CouplingScheme::Spp => {
            Error::check_len("coupling vector", n - 1, beta.len())?;
            beta.0.clone()
        }
        CouplingScheme::PcFixed(b) => vec![b; n - 1],
        CouplingScheme::None => vec![0.0; n - 1],
    };
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    }))
}
