//! Cubic NLS on the two-torus with a convolution potential, integrated with
//! FFTs; prints mass, energy and a few super-actions over time.

use birkhoff::dynamics::{integrate, random_state, ConvolutionEntry, IntegrateOptions, LadderTerm, ModelSpec};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec::Nls2d {
        vhat: vec![
            ConvolutionEntry { n: [1, 0], value: 0.013 },
            ConvolutionEntry { n: [0, 1], value: -0.021 },
            ConvolutionEntry { n: [1, 1], value: 0.007 },
        ],
        modes: 6,
        nonlinearity: vec![LadderTerm::constant(1, 1.0)],
    };
    let model = spec.build()?;
    let u0 = random_state(&mut ChaCha8Rng::seed_from_u64(5), model.family(), 1.0, 0.3, 2.5)?;
    let (trace, _) = integrate(model.as_ref(), &u0, 20.0, 0.005, &IntegrateOptions::new(800, 1.0))?;
    println!("{} modes, {} groups", model.len(), trace.group_labels.len());
    for s in &trace.samples {
        let j: Vec<String> = s.actions.iter().take(3).map(|a| format!("{a:.6e}")).collect();
        println!("t = {:>5.1}  M = {:.15}  H = {:.12}  J = {}", s.t, s.mass.unwrap_or(0.0), s.hamiltonian, j.join(" "));
    }
    Ok(())
}
