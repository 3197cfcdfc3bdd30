//! Gaussian posterior of the signal given prior precisions and noise precision.
//!
//! `Sigma = (gamma phiᵀphi + diag(lambda))⁻¹` and `mu = gamma Sigma phiᵀy`,
//! computed through a Cholesky factorization of the N x N precision matrix.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::{Mat, Par};

use crate::error::{Error, Result};
use crate::model::SensingProblem;

/// Jitter levels tried, in order, when the plain factorization fails.
pub const JITTER_LEVELS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mu: Vec<f64>,
    pub sigma: Mat<f64>,
    pub sigma_diag: Vec<f64>,
    /// Diagonal jitter that had to be added for the factorization to succeed.
    pub jitter: f64,
}

impl PosteriorMoments {
    /// `E[x_i^2] = mu_i^2 + Sigma_ii` for every coefficient.
    pub fn second_moments(&self) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.sigma_diag)
            .map(|(m, s)| m * m + s)
            .collect()
    }
}

pub fn compute_posterior(
    problem: &SensingProblem,
    lambda: &[f64],
    gamma: f64,
) -> Result<PosteriorMoments> {
    let n = problem.n();
    Error::check_len("prior precision vector", n, lambda.len())?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("noise precision must be positive, got {gamma}")));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::domain(format!(
            "prior precisions must be positive and finite, got {l}"
        )));
    }

    let gram = problem.gram();
    let precision = Mat::from_fn(n, n, |i, j| {
        let v = gamma * gram[(i, j)];
        if i == j {
            v + lambda[i]
        } else {
            v
        }
    });

    let (factor, jitter) = factorize_with_jitter(&precision)?;
    let sigma = spd_inverse(&factor);

    let rhs = problem.phi_t_y();
    let mu: Vec<f64> = (0..n)
        .map(|i| gamma * (0..n).map(|j| sigma[(i, j)] * rhs[j]).sum::<f64>())
        .collect();
    let sigma_diag = (0..n).map(|i| sigma[(i, i)]).collect();

    Ok(PosteriorMoments {
        mu,
        sigma,
        sigma_diag,
        jitter,
    })
}

/// `(‖y − phi mu‖², tr(Sigma phiᵀphi))`.
pub fn residual_stats(problem: &SensingProblem, moments: &PosteriorMoments) -> Result<(f64, f64)> {
    let (m, n) = (problem.m(), problem.n());
    Error::check_len("posterior mean", n, moments.mu.len())?;
    Error::check_len("posterior covariance", n, moments.sigma.nrows())?;
    let phi = problem.phi();
    let y = problem.y();
    let mut resid = y.to_vec();
    for j in 0..n {
        let mj = moments.mu[j];
        if mj != 0.0 {
            for (i, r) in resid.iter_mut().enumerate().take(m) {
                *r -= phi[(i, j)] * mj;
            }
        }
    }
    let resid_sq = resid.iter().map(|r| r * r).sum();

    let gram = problem.gram();
    let mut trace = 0.0;
    for j in 0..n {
        for i in 0..n {
            trace += moments.sigma[(i, j)] * gram[(i, j)];
        }
    }
    Ok((resid_sq, trace.max(0.0)))
}

/// Lower Cholesky factor of `a`, escalating diagonal jitter on failure.
fn factorize_with_jitter(a: &Mat<f64>) -> Result<(Mat<f64>, f64)> {
    if let Some(l) = try_cholesky(a, 0.0) {
        return Ok((l, 0.0));
    }
    let mut attempted = vec![0.0];
    for delta in JITTER_LEVELS {
        attempted.push(delta);
        if let Some(l) = try_cholesky(a, delta) {
            return Ok((l, delta));
        }
    }
    Err(Error::Conditioning { attempted })
}

fn try_cholesky(a: &Mat<f64>, jitter: f64) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut l = a.clone();
    if jitter > 0.0 {
        for i in 0..n {
            l[(i, i)] += jitter;
        }
    }
    let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(
        n,
        Par::Seq,
        Default::default(),
    ));
    let ok = llt::factor::cholesky_in_place(
        l.as_mut(),
        Default::default(),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .is_ok();
    if !ok {
        return None;
    }
    // The upper triangle still holds the input; clear it so `l` is a true factor.
    for j in 1..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    if (0..n).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
        Some(l)
    } else {
        None
    }
}

fn spd_inverse(l: &Mat<f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut inv = Mat::<f64>::zeros(n, n);
    let mut buf = MemBuffer::new(llt::inverse::inverse_scratch::<f64>(n, Par::Seq));
    llt::inverse::inverse(inv.as_mut(), l.as_ref(), Par::Seq, MemStack::new(&mut buf));
    for j in 0..n {
        for i in 0..j {
            inv[(i, j)] = inv[(j, i)];
        }
    }
    inv
}
