//! Draw one instance of each signal family and show its support layout.

use sppsbl::datagen::{generate, nonzero_runs, GeneratorSpec};

fn main() -> sppsbl::Result<()> {
    for spec in [
        GeneratorSpec::heteroscedastic_default(3),
        GeneratorSpec::multi_pattern_default(3),
        GeneratorSpec::chain_default(3),
    ] {
        let inst = generate(&spec)?;
        let x = inst.problem.x_true().expect("ground truth");
        let map: String = x.iter().map(|v| if *v != 0.0 { '#' } else { '.' }).collect();
        println!("{:?}", spec.family);
        println!("  runs {:?}", nonzero_runs(x));
        for chunk in map.as_bytes().chunks(81) {
            println!("  {}", std::str::from_utf8(chunk).unwrap());
        }
    }
    Ok(())
}
