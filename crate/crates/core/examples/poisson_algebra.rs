//! Polynomial Hamiltonians on a small lattice: a bracket, its check against
//! the gradient pairing, and a Lie flow that preserves its generator.

use birkhoff::hamilton::{flow, poisson_bracket, FlowOptions, PolyHamiltonian, Sign};
use birkhoff::lattice::{real_dot, Lattice, ModeIndex};
use num_complex::Complex64;
use std::sync::Arc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use Sign::{Minus, Plus};
    let lattice = Arc::new(Lattice::range(1, 4)?);
    let m = ModeIndex::d1;
    let mut h = PolyHamiltonian::new(lattice.clone());
    h.add_monomial(&[Plus, Plus, Minus], &[m(1), m(2), m(3)], Complex64::new(0.5, 0.2))?;
    let mut k = PolyHamiltonian::new(lattice.clone());
    k.add_monomial(&[Plus, Minus, Minus], &[m(3), m(1), m(4)], Complex64::new(-0.3, 0.0))?;
    k.add_monomial(&[Plus, Minus, Plus, Minus], &[m(2), m(2), m(4), m(4)], Complex64::new(1.0, 0.0))?;

    let b = poisson_bracket(&h, &k)?;
    println!("{{H, K}} has {} terms in degrees {:?}", b.nnz(), b.degrees());
    for (key, c) in b.sorted_terms().iter().take(6) {
        println!("  {} {c:.4}", b.describe_key(key));
    }

    let u: Vec<Complex64> = (0..4).map(|j| Complex64::new(0.3 - 0.1 * j as f64, 0.05 * j as f64)).collect();
    let ih: Vec<Complex64> = h.gradient(&u)?.iter().map(|g| g * Complex64::i()).collect();
    println!("{{H, K}}(u) = {:.15e}", b.evaluate(&u)?);
    println!("(i∇H, ∇K)  = {:.15e}", real_dot(&ih, &k.gradient(&u)?));

    let opts = FlowOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let v = flow(&h, &u, 1.0, &opts)?;
    println!("H before and after its own flow: {:.15e} {:.15e}", h.evaluate(&u)?, h.evaluate(&v)?);
    Ok(())
}
