//! EM inference for the coupled hierarchical model.
//!
//! One iteration runs, in order: precision update from the previous
//! posterior, clamping at the cap, a Gauss–Seidel sweep over the coupling
//! parameters (learned scheme only), the posterior update, and the noise
//! precision update. Classical SBL and fixed-coupling PC-SBL are the same
//! loop with the coupling sweep switched off.

use serde::{Deserialize, Serialize};

use crate::beta_root::{BetaEquation, RootMethod};
use crate::error::{Error, Result};
use crate::model::{
    prior_precisions_into, CouplingScheme, CouplingVector, HyperPriors, PrecisionField,
    SensingProblem, SolverState, DEFAULT_ALPHA_CAP,
};
use crate::posterior::{compute_posterior, residual_stats, PosteriorMoments};

/// Floor on the previous-iterate norm in the relative change criterion.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub hyperpriors: HyperPriors,
    pub scheme: CouplingScheme,
    pub max_iterations: usize,
    /// Stop once `‖μ⁽ᵗ⁾ − μ⁽ᵗ⁻¹⁾‖ / ‖μ⁽ᵗ⁻¹⁾‖` drops below this.
    pub rel_tol: f64,
    pub alpha_cap: f64,
    pub init_alpha: f64,
    pub init_beta: f64,
    pub init_gamma: f64,
    pub root_method: RootMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            hyperpriors: HyperPriors::default(),
            scheme: CouplingScheme::Spp,
            max_iterations: 500,
            rel_tol: 1e-6,
            alpha_cap: DEFAULT_ALPHA_CAP,
            init_alpha: 1.0,
            init_beta: 1.0,
            init_gamma: 1.0,
            root_method: RootMethod::Bracketed,
        }
    }
}

impl SolverConfig {
    pub fn with_scheme(scheme: CouplingScheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperpriors.validate()?;
        self.scheme.validate()?;
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be positive"));
        }
        let positive = [
            ("rel_tol", self.rel_tol),
            ("alpha_cap", self.alpha_cap),
            ("init_alpha", self.init_alpha),
            ("init_gamma", self.init_gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.init_beta >= 0.0 && self.init_beta.is_finite()) {
            return Err(Error::domain(format!(
                "init_beta must be nonnegative, got {}",
                self.init_beta
            )));
        }
        Ok(())
    }

    fn initial_beta(&self, n: usize) -> CouplingVector {
        match self.scheme {
            CouplingScheme::Spp => CouplingVector::constant(n, self.init_beta),
            CouplingScheme::PcFixed(b) => CouplingVector::constant(n, b),
            CouplingScheme::None => CouplingVector::constant(n, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub mu_change: f64,
    pub gamma: f64,
}

/// Bookkeeping over every coupling root solved during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaStats {
    pub calls: u64,
    /// Roots outside the open interval `(0, c/d)`.
    pub bound_violations: u64,
}

impl BetaStats {
    pub fn merge(&mut self, other: &BetaStats) {
        self.calls += other.calls;
        self.bound_violations += other.bound_violations;
    }
}

/// One coupling update inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaUpdate {
    pub edge: usize,
    pub value: f64,
    /// `f(β)` at the new value, with the neighbors current at solve time.
    pub residual: f64,
    /// `|f(β) / f'(β)|`, the Newton step still left at the returned root.
    pub step_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_hat: Vec<f64>,
    pub state: SolverState,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    pub beta_stats: BetaStats,
}

/// What an observer sees at the end of each EM iteration.
#[derive(Debug)]
pub struct IterationSnapshot<'a> {
    pub state: &'a SolverState,
    /// Prior precisions used for the posterior in this iteration.
    pub lambda: &'a [f64],
    /// Noise precision used for the posterior (before this iteration's update).
    pub posterior_gamma: f64,
    pub mu_change: f64,
    pub beta_updates: &'a [BetaUpdate],
}

/// `η_i = w_i + β_i w_{i+1} + β_{i−1} w_{i−1}` with `w_k = μ_k² + Σ_kk`.
pub fn update_eta(moments: &PosteriorMoments, beta: &CouplingVector) -> Result<Vec<f64>> {
    let n = moments.mu.len();
    Error::check_len("coupling vector", n.saturating_sub(1), beta.len())?;
    Ok(eta_from_moments(&moments.second_moments(), beta.as_slice()))
}

fn eta_from_moments(w: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|i| {
            let mut v = w[i];
            if i + 1 < n {
                v += beta[i] * w[i + 1];
            }
            if i > 0 {
                v += beta[i - 1] * w[i - 1];
            }
            v
        })
        .collect()
}

/// `α_i = min((a + ½) / (b + ½ η_i), cap)`.
pub fn update_alpha(eta: &[f64], hyper: &HyperPriors, cap: f64) -> Result<PrecisionField> {
    if let Some(e) = eta.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::domain(format!("eta entries must be nonnegative, got {e}")));
    }
    let alpha = eta
        .iter()
        .map(|e| ((hyper.a + 0.5) / (hyper.b + 0.5 * e)).min(cap))
        .collect();
    PrecisionField::new(alpha, cap)
}

/// Derivative of the hyperparameter objective with respect to `β_i`, at `beta_i`.
pub fn beta_stationarity(
    beta_i: f64,
    i: usize,
    alpha: &PrecisionField,
    beta: &CouplingVector,
    moments: &PosteriorMoments,
    hyper: &HyperPriors,
) -> Result<f64> {
    if !(beta_i > 0.0) {
        return Err(Error::domain(format!("beta_i must be positive, got {beta_i}")));
    }
    let eq = BetaEquation::for_edge(
        i,
        alpha.as_slice(),
        beta.as_slice(),
        &moments.second_moments(),
        hyper,
    )?;
    Ok(eq.value(beta_i))
}

/// The unique positive root of the stationarity equation for edge `i`.
pub fn solve_beta(
    i: usize,
    alpha: &PrecisionField,
    beta: &CouplingVector,
    moments: &PosteriorMoments,
    hyper: &HyperPriors,
    method: RootMethod,
) -> Result<f64> {
    BetaEquation::for_edge(
        i,
        alpha.as_slice(),
        beta.as_slice(),
        &moments.second_moments(),
        hyper,
    )?
    .solve(method)
}

/// `γ = (M + 2g) / (‖y − Φμ‖² + tr(ΣΦᵀΦ) + 2h)`.
pub fn update_gamma(
    problem: &SensingProblem,
    moments: &PosteriorMoments,
    hyper: &HyperPriors,
) -> Result<f64> {
    let (resid_sq, trace) = residual_stats(problem, moments)?;
    Ok(gamma_from_stats(problem.m(), resid_sq, trace, hyper))
}

pub(crate) fn gamma_from_stats(m: usize, resid_sq: f64, trace: f64, hyper: &HyperPriors) -> f64 {
    (m as f64 + 2.0 * hyper.g) / (resid_sq + trace + 2.0 * hyper.h)
}

/// The alpha/beta part of the EM objective, up to additive constants.
pub fn evaluate_q_alpha_beta(
    alpha: &PrecisionField,
    beta: &CouplingVector,
    moments: &PosteriorMoments,
    hyper: &HyperPriors,
) -> Result<f64> {
    let n = alpha.len();
    Error::check_len("coupling vector", n.saturating_sub(1), beta.len())?;
    Error::check_len("posterior mean", n, moments.mu.len())?;
    if alpha.as_slice().iter().any(|a| !(*a > 0.0)) {
        return Err(Error::domain("alpha entries must be positive"));
    }
    if beta.as_slice().iter().any(|b| !(*b > 0.0)) {
        return Err(Error::domain("beta entries must be positive"));
    }
    let w = moments.second_moments();
    let mut lambda = vec![0.0; n];
    prior_precisions_into(alpha.as_slice(), beta.as_slice(), &mut lambda);
    let mut q = 0.0;
    for i in 0..n {
        let a = alpha.alpha[i];
        q += (hyper.a - 1.0) * a.ln() - hyper.b * a - 0.5 * lambda[i] * w[i] + 0.5 * lambda[i].ln();
    }
    for &b in beta.as_slice() {
        q += (hyper.c - 1.0) * b.ln() - hyper.d * b;
    }
    Ok(q)
}

pub fn run_em(problem: &SensingProblem, config: &SolverConfig) -> Result<SolveResult> {
    run_em_with(problem, config, |_| {})
}

/// [`run_em`] with a callback invoked after every iteration.
pub fn run_em_with<F>(
    problem: &SensingProblem,
    config: &SolverConfig,
    mut observer: F,
) -> Result<SolveResult>
where
    F: FnMut(&IterationSnapshot<'_>),
{
    config.validate()?;
    let n = problem.n();
    let hyper = &config.hyperpriors;
    let upper = hyper.beta_upper_bound();

    let mut alpha = PrecisionField::constant(n, config.init_alpha, config.alpha_cap)?;
    let mut beta = config.initial_beta(n);
    let mut gamma = config.init_gamma;
    let mut lambda = vec![0.0; n];
    prior_precisions_into(alpha.as_slice(), beta.as_slice(), &mut lambda);
    let mut post = compute_posterior(problem, &lambda, gamma)?;

    let mut history = Vec::new();
    let mut stats = BetaStats::default();
    let mut sweep = Vec::with_capacity(n.saturating_sub(1));
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=config.max_iterations {
        iterations = t;
        let w = post.second_moments();

        let eta = eta_from_moments(&w, beta.as_slice());
        alpha = update_alpha(&eta, hyper, config.alpha_cap)?;

        sweep.clear();
        if config.scheme == CouplingScheme::Spp {
            for i in 0..n - 1 {
                let eq = BetaEquation::for_edge(i, alpha.as_slice(), beta.as_slice(), &w, hyper)?;
                let value = eq.solve(config.root_method)?;
                stats.calls += 1;
                if !(value > 0.0 && value < upper) {
                    stats.bound_violations += 1;
                }
                let residual = eq.value(value);
                sweep.push(BetaUpdate {
                    edge: i,
                    value,
                    residual,
                    step_residual: (residual / eq.derivative(value)).abs(),
                });
                beta.0[i] = value;
            }
        }

        prior_precisions_into(alpha.as_slice(), beta.as_slice(), &mut lambda);
        let posterior_gamma = gamma;
        let next = compute_posterior(problem, &lambda, gamma)?;
        gamma = update_gamma(problem, &next, hyper)?;

        let mu_change = relative_change(&next.mu, &post.mu);
        post = next;
        history.push(IterationRecord { mu_change, gamma });

        let state = SolverState {
            alpha: alpha.clone(),
            beta: beta.clone(),
            gamma,
            mu: post.mu.clone(),
            sigma: post.sigma.clone(),
            iteration: t,
        };
        observer(&IterationSnapshot {
            state: &state,
            lambda: &lambda,
            posterior_gamma,
            mu_change,
            beta_updates: &sweep,
        });

        if mu_change < config.rel_tol {
            converged = true;
            break;
        }
    }

    let state = SolverState {
        alpha,
        beta,
        gamma,
        mu: post.mu.clone(),
        sigma: post.sigma,
        iteration: iterations,
    };
    Ok(SolveResult {
        x_hat: post.mu,
        state,
        iterations,
        converged,
        history,
        beta_stats: stats,
    })
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new
        .iter()
        .zip(old)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let base: f64 = old.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / base.max(NORM_FLOOR)
}
