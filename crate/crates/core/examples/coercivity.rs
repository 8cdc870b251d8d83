//! Energy against the squared energy norm along rays: the quadratic part
//! dominates near zero and the focusing quartic term takes over far out.

use birkhoff::dynamics::{coercivity_sweep, ModelSpec, NlsBoundary};
use birkhoff::spectra::Potential;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = ModelSpec::nls_cubic(NlsBoundary::Dirichlet, Potential::zero(), -1.0, 12).build()?;
    let radii = [0.01, 0.1, 1.0, 10.0, 100.0];
    let rep = coercivity_sweep(model.as_ref(), &radii, 8, 1.0, 3)?;
    println!("linear constant {:.3}, validated constant {:.3}", rep.lambda_linear, rep.lambda);
    for chunk in rep.points.chunks(8) {
        let lo = chunk.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
        let hi = chunk.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
        let outside = chunk.iter().filter(|p| !p.validated).count();
        println!("radius {:>8.2}: ratio in [{lo:.4}, {hi:.4}], {outside} outside", chunk[0].radius);
    }
    println!("violations at {:?}", rep.violations);
    Ok(())
}
