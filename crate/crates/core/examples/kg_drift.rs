//! One Klein-Gordon trajectory of amplitude ε up to `t = ε⁻²`: conservation
//! and the drift of each super-action.

use birkhoff::dynamics::{conservation, integrate, random_state, track_superactions, IntegrateOptions, ModelSpec};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps = 0.05;
    let model = ModelSpec::kg_quadratic(1.0, 1.0, 12).build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u0 = random_state(&mut rng, model.family(), 0.5, eps, 4.5)?;
    let (mut trace, _) = integrate(model.as_ref(), &u0, eps.powi(-2), 0.02, &IntegrateOptions::new(50, 0.5))?;
    trace.meta.eps = Some(eps);
    let c = conservation(&trace);
    println!("{} steps, relative energy drift {:.2e}", trace.steps, c.energy_drift);
    println!("{:>5} {:>12} {:>12} {:>10}", "group", "J(0)", "sup |ΔJ|", "/ε³");
    for row in track_superactions(&trace, 0.0, 3.0).iter().take(6) {
        println!(
            "{:>5} {:>12.4e} {:>12.4e} {:>10.4}",
            row.label,
            row.initial,
            row.sup_drift,
            row.normalized.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
