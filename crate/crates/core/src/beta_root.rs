//! Stationarity equation for a single coupling parameter and its root.
//!
//! Setting the derivative of the hyperparameter objective with respect to
//! `beta_i` to zero gives
//!
//! ```text
//! f(β) = (c − 1)/β − d + ½ [α_{i+1} / (A + β α_{i+1}) + α_i / (E + β α_i)] − B = 0
//! A = α_i + β_{i−1} α_{i−1}
//! E = α_{i+1} + β_{i+1} α_{i+2}
//! B = ½ [α_{i+1} (μ_i² + Σ_ii) + α_i (μ_{i+1}² + Σ_{i+1,i+1})]
//! ```
//!
//! For `c > 1`, `f` is strictly decreasing on `(0, ∞)`, tends to `+∞` at `0⁺`
//! and is negative at `c/d`, so exactly one root lies in `(0, c/d)`. Clearing
//! denominators gives the cubic
//! `ã β³ + b̃ β² + c̃ β + d̃ = 0` with
//!
//! ```text
//! ã = 2 (B + d) α_i α_{i+1}
//! b̃ = 2 (B + d)(A α_i + E α_{i+1}) − 2 c α_i α_{i+1}
//! c̃ = 2 (B + d) A E + (1 − 2c)(A α_i + E α_{i+1})
//! d̃ = 2 (1 − c) A E
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HyperPriors;

/// Lower end of the search bracket.
pub const BRACKET_FLOOR: f64 = 1e-12;

const MAX_ITERATIONS: usize = 200;

/// How the coupling root is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    /// Bisection with safeguarded Newton steps on `f` over `(ε, c/d)`.
    #[default]
    Bracketed,
    /// Closed-form cubic roots (trigonometric form when all three are real).
    Cardano,
}

/// Coefficients of the stationarity equation for one coupling parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEquation {
    pub alpha_i: f64,
    pub alpha_next: f64,
    /// `α_i + β_{i−1} α_{i−1}`.
    pub left: f64,
    /// `α_{i+1} + β_{i+1} α_{i+2}`.
    pub right: f64,
    /// Data term `B`.
    pub energy: f64,
    pub c: f64,
    pub d: f64,
}

impl BetaEquation {
    /// Assembles the equation for edge `i` (between coefficients `i` and `i + 1`).
    ///
    /// `second_moments[k]` is `μ_k² + Σ_kk`.
    pub fn for_edge(
        i: usize,
        alpha: &[f64],
        beta: &[f64],
        second_moments: &[f64],
        hyper: &HyperPriors,
    ) -> Result<Self> {
        let n = alpha.len();
        Error::check_len("coupling vector", n.saturating_sub(1), beta.len())?;
        Error::check_len("second moments", n, second_moments.len())?;
        if i + 1 >= n {
            return Err(Error::domain(format!(
                "edge index {i} out of range for {n} coefficients"
            )));
        }
        let left = alpha[i] + if i > 0 { beta[i - 1] * alpha[i - 1] } else { 0.0 };
        let right = alpha[i + 1] + if i + 2 < n { beta[i + 1] * alpha[i + 2] } else { 0.0 };
        let energy = 0.5 * (alpha[i + 1] * second_moments[i] + alpha[i] * second_moments[i + 1]);
        Ok(Self {
            alpha_i: alpha[i],
            alpha_next: alpha[i + 1],
            left,
            right,
            energy,
            c: hyper.c,
            d: hyper.d,
        })
    }

    pub fn upper_bound(&self) -> f64 {
        self.c / self.d
    }

    /// `f(β)`.
    pub fn value(&self, beta: f64) -> f64 {
        (self.c - 1.0) / beta - self.d
            + 0.5
                * (self.alpha_next / (self.left + beta * self.alpha_next)
                    + self.alpha_i / (self.right + beta * self.alpha_i))
            - self.energy
    }

    /// `f'(β)`, strictly negative for `β > 0` when `c > 1`.
    pub fn derivative(&self, beta: f64) -> f64 {
        let l = self.left + beta * self.alpha_next;
        let r = self.right + beta * self.alpha_i;
        -(self.c - 1.0) / (beta * beta)
            - 0.5 * (self.alpha_next * self.alpha_next / (l * l) + self.alpha_i * self.alpha_i / (r * r))
    }

    /// `[ã, b̃, c̃, d̃]`, highest degree first.
    pub fn cubic_coefficients(&self) -> [f64; 4] {
        let (ai, an, a, e) = (self.alpha_i, self.alpha_next, self.left, self.right);
        let bd = self.energy + self.d;
        let mix = a * ai + e * an;
        [
            2.0 * bd * ai * an,
            2.0 * bd * mix - 2.0 * self.c * ai * an,
            2.0 * bd * a * e + (1.0 - 2.0 * self.c) * mix,
            2.0 * (1.0 - self.c) * a * e,
        ]
    }

    fn check(&self) -> Result<()> {
        if !(self.c > 1.0) {
            return Err(Error::domain(format!("c must exceed 1, got {}", self.c)));
        }
        let positives = [self.alpha_i, self.alpha_next, self.left, self.right, self.d];
        if positives.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::domain("coupling equation needs positive precisions"));
        }
        if !(self.energy >= 0.0 && self.energy.is_finite()) {
            return Err(Error::domain("coupling equation needs a finite nonnegative data term"));
        }
        Ok(())
    }

    pub fn solve(&self, method: RootMethod) -> Result<f64> {
        match method {
            RootMethod::Bracketed => self.solve_bracketed(),
            RootMethod::Cardano => self.solve_cardano(),
        }
    }

    /// Monotone bracketed solve on `(ε, c/d)`.
    pub fn solve_bracketed(&self) -> Result<f64> {
        self.check()?;
        let mut hi = self.upper_bound();
        let f_hi = self.value(hi);
        if !(f_hi < 0.0) {
            return Err(Error::Invariant(format!(
                "f(c/d) = {f_hi} is not negative; bracket does not straddle the root"
            )));
        }
        let mut lo = BRACKET_FLOOR.min(0.5 * hi);
        let mut f_lo = self.value(lo);
        while !(f_lo > 0.0) {
            if f_lo == 0.0 {
                return Ok(lo);
            }
            lo *= 1e-3;
            if lo < 1e-300 {
                return Err(Error::Invariant(format!(
                    "no sign change of f near zero (f = {f_lo})"
                )));
            }
            f_lo = self.value(lo);
        }

        let mut x = 0.5 * (lo + hi);
        for _ in 0..MAX_ITERATIONS {
            let fx = self.value(x);
            if fx == 0.0 {
                return Ok(x);
            }
            if fx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - fx / self.derivative(x);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Closed-form root selection from the cubic.
    pub fn solve_cardano(&self) -> Result<f64> {
        self.check()?;
        let roots = real_cubic_roots(self.cubic_coefficients());
        roots
            .into_iter()
            .filter(|r| *r > 0.0)
            .min_by(|a, b| {
                self.value(*a)
                    .abs()
                    .partial_cmp(&self.value(*b).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or_else(|| Error::Invariant("cubic has no positive real root".into()))
    }
}

/// Real roots of `a x³ + b x² + c x + d` with `a != 0`.
///
/// Reduces to the depressed cubic `t³ + p t + q` via `x = t − b/(3a)`, then
/// uses Cardano's formula when the discriminant `(q/2)² + (p/3)³` is
/// positive and the trigonometric form otherwise. Each root gets up to two
/// Newton polishing steps on the original polynomial, kept only when they
/// shrink the residual.
pub fn real_cubic_roots(coeffs: [f64; 4]) -> Vec<f64> {
    closed_form_roots(coeffs)
        .into_iter()
        .map(|x| polish(coeffs, x))
        .collect()
}

fn polish(coeffs: [f64; 4], mut x: f64) -> f64 {
    let [a, b, c, d] = coeffs;
    let p = |x: f64| ((a * x + b) * x + c) * x + d;
    for _ in 0..2 {
        let slope = (3.0 * a * x + 2.0 * b) * x + c;
        if slope == 0.0 {
            break;
        }
        let next = x - p(x) / slope;
        if !(p(next).abs() < p(x).abs()) {
            break;
        }
        x = next;
    }
    x
}

fn closed_form_roots(coeffs: [f64; 4]) -> Vec<f64> {
    let [a, b, c, d] = coeffs;
    let (b, c, d) = (b / a, c / a, d / a);
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    if disc > 0.0 {
        // One real root. Pick the cube-root branch that avoids cancellation.
        let s = -q / 2.0;
        let w = s + s.signum() * disc.sqrt();
        let u = w.cbrt();
        let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
        vec![u + v - shift]
    } else if p == 0.0 {
        vec![(-q).cbrt() - shift]
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let cos_arg = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = cos_arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (phi - 2.0 * PI * k as f64 / 3.0).cos() - shift)
            .collect()
    }
}
