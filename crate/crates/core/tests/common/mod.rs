//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sppsbl::SensingProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random problem with uniform entries; `x_true` has a few short blocks.
pub fn random_problem(m: usize, n: usize, seed: u64) -> SensingProblem {
    let mut r = rng(seed);
    let phi = Mat::from_fn(m, n, |_, _| r.random_range(-1.0..1.0));
    let mut x = vec![0.0; n];
    let mut i = r.random_range(0..2);
    while i < n {
        let len = r.random_range(1..4).min(n - i);
        for v in &mut x[i..i + len] {
            *v = r.random_range(0.5..2.0) * if r.random::<bool>() { 1.0 } else { -1.0 };
        }
        i += len + r.random_range(2..6);
    }
    let y: Vec<f64> = (0..m)
        .map(|k| (0..n).map(|j| phi[(k, j)] * x[j]).sum::<f64>() + 0.05 * r.random_range(-1.0..1.0))
        .collect();
    SensingProblem::new(phi, y).unwrap().with_ground_truth(x).unwrap()
}

pub fn to_rows(a: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// `ΦᵀΦ` by explicit triple loop.
pub fn naive_gram(phi: &Mat<f64>) -> Vec<Vec<f64>> {
    let (m, n) = (phi.nrows(), phi.ncols());
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                g[i][j] += phi[(k, i)] * phi[(k, j)];
            }
        }
    }
    g
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut w: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| w[p][col].abs().total_cmp(&w[q][col].abs()))
            .unwrap();
        w.swap(col, piv);
        let d = w[col][col];
        assert!(d.abs() > 1e-300, "singular matrix");
        for v in &mut w[col] {
            *v /= d;
        }
        let pivot_row = w[col].clone();
        for (r, row) in w.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    w.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Dense posterior `(μ, Σ)` from an explicit inverse.
pub fn dense_posterior(problem: &SensingProblem, lambda: &[f64], gamma: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let phi = problem.phi();
    let (m, n) = (phi.nrows(), phi.ncols());
    let g = naive_gram(phi);
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| gamma * g[i][j] + if i == j { lambda[i] } else { 0.0 }).collect())
        .collect();
    let sigma = gauss_jordan_inverse(&a);
    let y = problem.y();
    let pty: Vec<f64> = (0..n).map(|j| (0..m).map(|k| phi[(k, j)] * y[k]).sum()).collect();
    let mu = (0..n)
        .map(|i| gamma * (0..n).map(|j| sigma[i][j] * pty[j]).sum::<f64>())
        .collect();
    (mu, sigma)
}

/// `(‖y − Φμ‖², tr(ΣΦᵀΦ))` by direct loops.
pub fn naive_residual_stats(problem: &SensingProblem, mu: &[f64], sigma: &[Vec<f64>]) -> (f64, f64) {
    let phi = problem.phi();
    let (m, n) = (phi.nrows(), phi.ncols());
    let y = problem.y();
    let mut r2 = 0.0;
    for k in 0..m {
        let pred: f64 = (0..n).map(|j| phi[(k, j)] * mu[j]).sum();
        r2 += (y[k] - pred) * (y[k] - pred);
    }
    let g = naive_gram(phi);
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr += sigma[i][j] * g[j][i];
        }
    }
    (r2, tr)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let base: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / base.max(1e-300)
}

/// Plain-loop EM for a fixed coupling (zero gives classical SBL).
pub fn reference_em(problem: &SensingProblem, fixed_beta: f64, cfg: &sppsbl::SolverConfig) -> Vec<Vec<f64>> {
    let n = problem.n();
    let m = problem.m();
    let hp = cfg.hyperpriors;
    let mut alpha = vec![cfg.init_alpha; n];
    let mut gamma = cfg.init_gamma;
    let lam = |alpha: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut l = alpha[i];
                if i > 0 {
                    l += fixed_beta * alpha[i - 1];
                }
                if i + 1 < n {
                    l += fixed_beta * alpha[i + 1];
                }
                l
            })
            .collect()
    };
    let mut post = sppsbl::posterior::compute_posterior(problem, &lam(&alpha), gamma).unwrap();
    let mut trajectory = Vec::new();
    for _ in 0..cfg.max_iterations {
        let sigma = to_rows(&post.sigma);
        let w: Vec<f64> = (0..n).map(|k| post.mu[k] * post.mu[k] + sigma[k][k]).collect();
        for i in 0..n {
            let mut eta = w[i];
            if i > 0 {
                eta += fixed_beta * w[i - 1];
            }
            if i + 1 < n {
                eta += fixed_beta * w[i + 1];
            }
            alpha[i] = ((hp.a + 0.5) / (hp.b + 0.5 * eta)).min(cfg.alpha_cap);
        }
        let next = sppsbl::posterior::compute_posterior(problem, &lam(&alpha), gamma).unwrap();
        let (r2, tr) = naive_residual_stats(problem, &next.mu, &to_rows(&next.sigma));
        gamma = (m as f64 + 2.0 * hp.g) / (r2 + tr + 2.0 * hp.h);
        let change = rel_err(&next.mu, &post.mu);
        post = next;
        trajectory.push(post.mu.clone());
        if change < cfg.rel_tol {
            break;
        }
    }
    trajectory
}

pub fn log_uniform<R: Rng>(r: &mut R, lo: f64, hi: f64) -> f64 {
    (r.random_range(lo.ln()..hi.ln())).exp()
}

pub fn random_equation<R: Rng>(r: &mut R) -> sppsbl::beta_root::BetaEquation {
    let alpha_i = log_uniform(r, 1e-3, 1e3);
    let alpha_next = log_uniform(r, 1e-3, 1e3);
    sppsbl::beta_root::BetaEquation {
        alpha_i,
        alpha_next,
        left: alpha_i + r.random_range(0.0..2.0) * log_uniform(r, 1e-3, 1e3),
        right: alpha_next + r.random_range(0.0..2.0) * log_uniform(r, 1e-3, 1e3),
        energy: log_uniform(r, 1e-6, 1e2),
        c: r.random_range(1.1..20.0),
        d: log_uniform(r, 0.1, 5.0),
    }
}
