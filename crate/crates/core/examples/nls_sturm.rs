//! Cubic NLS with a Dirichlet potential, in the Sturm-Liouville eigenbasis:
//! mass is conserved to rounding, the energy error is second order in `dt`.

use birkhoff::dynamics::{conservation, energy_error, integrate, random_state, IntegrateOptions, ModelSpec, NlsBoundary};
use birkhoff::spectra::Potential;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let v = Potential::Fourier { cos: vec![0.1, 0.3, -0.2], sin: vec![] };
    let model = ModelSpec::nls_cubic(NlsBoundary::Dirichlet, v, 1.0, 16).build()?;
    println!("first frequencies: {:.6?}", &model.family().omega()[..4]);
    let u0 = random_state(&mut ChaCha8Rng::seed_from_u64(2), model.family(), 1.0, 0.5, f64::INFINITY)?;
    let opts = IntegrateOptions { stride: 1, s: 1.0, forcing: false };
    let mut last = None;
    for dt in [0.01, 0.005, 0.0025] {
        let (trace, _) = integrate(model.as_ref(), &u0, 2.0, dt, &opts)?;
        let err = energy_error(&trace);
        let c = conservation(&trace);
        let ratio = last.map_or(String::new(), |l: f64| format!(", ratio {:.3}", l / err));
        println!("dt = {dt}: mass drift {:.1e}, energy error {err:.3e}{ratio}", c.mass_drift.unwrap_or(0.0));
        last = Some(err);
    }
    Ok(())
}
