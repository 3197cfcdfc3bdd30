//! The three coupling schemes as maps from `alpha` to prior precisions.

use sppsbl::model::{
    build_coupling_matrix, prior_precisions, CouplingScheme, CouplingVector, PrecisionField,
    DEFAULT_ALPHA_CAP,
};

fn main() -> sppsbl::Result<()> {
    let alpha = PrecisionField::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], DEFAULT_ALPHA_CAP)?;
    let learned = CouplingVector::new(vec![0.5, 2.0, 0.1, 1.0])?;

    for (scheme, beta) in [
        (CouplingScheme::None, CouplingVector::constant(5, 0.0)),
        (CouplingScheme::PcFixed(1.0), CouplingVector::constant(5, 1.0)),
        (CouplingScheme::Spp, learned),
    ] {
        let t = build_coupling_matrix(scheme, &beta, 5)?;
        println!("{}", scheme.describe());
        for i in 0..5 {
            let row: Vec<String> = (0..5).map(|j| format!("{:4.1}", t[(i, j)])).collect();
            println!("  [{}]", row.join(" "));
        }
        println!("  lambda = {:?}\n", prior_precisions(&alpha, &beta)?);
    }
    Ok(())
}
