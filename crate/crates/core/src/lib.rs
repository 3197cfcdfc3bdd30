//! Block-sparse signal recovery by sparse Bayesian learning with a learned
//! space-power coupling prior.
//!
//! The prior precision of coefficient `i` is
//! `λ_i = α_i + β_{i−1} α_{i−1} + β_i α_{i+1}`; EM learns `α`, the coupling
//! vector `β` and the noise precision `γ`. Setting `β ≡ 0` gives classical SBL
//! and a fixed shared `β` gives pattern-coupled SBL, so all three run through
//! [`solver::run_em`] with a different [`model::CouplingScheme`].
//!
//! ```no_run
//! use sppsbl::{datagen, solver, metrics, model::CouplingScheme};
//!
//! let inst = datagen::generate(&datagen::GeneratorSpec::heteroscedastic_default(7)).unwrap();
//! let cfg = solver::SolverConfig::with_scheme(CouplingScheme::Spp);
//! let res = solver::run_em(&inst.problem, &cfg).unwrap();
//! let nmse = metrics::nmse(&res.x_hat, inst.problem.x_true().unwrap()).unwrap();
//! println!("NMSE {nmse:.4}");
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beta_root;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod posterior;
pub mod solver;

pub use error::{Error, Result};
pub use model::{CouplingScheme, HyperPriors, SensingProblem};
pub use solver::{run_em, SolveResult, SolverConfig};
