//! Random smooth potentials conditioned on a small H¹ norm: how often does a
//! sampled Dirichlet spectrum have a resonance of order three?

use birkhoff::resonance::{genericity_monte_carlo, GenericityOptions, PotentialLaw};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = PotentialLaw::GaussianFourier { s: 2.0, amplitude: 0.01, modes: 8 };
    let opts = GenericityOptions { trials: 20, r: 3, range: 12, kappa_max: None, rho: 0.05, seed: 11, galerkin_dim: 96 };
    let rep = genericity_monte_carlo(&law, &opts)?;
    println!("{} samples, {} rejections, {} resonances", rep.samples.len(), rep.total_rejections, rep.total_resonances);
    let q: Vec<String> = rep.min_divisor_quantiles.iter().map(|x| format!("{x:.3e}")).collect();
    println!("min |Ω| quantiles (0, .1, .5, .9, 1): {}", q.join(" "));
    for &i in &rep.worst {
        let s = &rep.samples[i];
        println!("  sample {i}: ‖V‖_H¹ = {:.4}, min |Ω| = {:.3e} at {:?}", s.h1_norm, s.min_divisor, s.argmin);
    }
    Ok(())
}
