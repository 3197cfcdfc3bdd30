//! Solving the stationarity equation of one coupling parameter two ways.

use sppsbl::beta_root::{BetaEquation, RootMethod};
use sppsbl::HyperPriors;

fn main() -> sppsbl::Result<()> {
    let hyper = HyperPriors::default();
    let alpha = [0.8, 1.5, 0.3, 2.0];
    let beta = [1.0, 1.0, 1.0];
    let second_moments = [1.2, 0.9, 2.5, 0.1];

    for edge in 0..3 {
        let eq = BetaEquation::for_edge(edge, &alpha, &beta, &second_moments, &hyper)?;
        let bracketed = eq.solve(RootMethod::Bracketed)?;
        let cardano = eq.solve(RootMethod::Cardano)?;
        println!(
            "edge {edge}: bracketed {bracketed:.12} cardano {cardano:.12} f = {:.2e} (bound c/d = {})",
            eq.value(bracketed),
            eq.upper_bound()
        );
    }
    Ok(())
}
