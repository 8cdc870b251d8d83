//! Dirichlet and Neumann eigenvalues of `-∂² + V` on `(0, π)`, their shift
//! from `n² + mean(V)`, and the first variation along a direction `W`.

use birkhoff::spectra::{solve, Boundary, GalerkinOptions, Potential};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let v = Potential::Fourier { cos: vec![0.2, 0.4, -0.1, 0.05], sin: vec![0.1] };
    let w = Potential::cosine(2);
    let opts = GalerkinOptions::new(12, 256);
    for boundary in [Boundary::Dirichlet, Boundary::Neumann] {
        let sys = solve(boundary, &v, &opts)?;
        println!("{boundary:?}");
        println!("{:>3} {:>22} {:>12} {:>12}", "n", "lambda", "shift", "dλ(W)");
        for n in sys.labels().into_iter().filter(|n| *n <= 12) {
            let lambda = sys.eigenvalue(n)?;
            let shift = lambda - (n * n) as f64 - v.mean();
            println!("{n:>3} {lambda:>22.15} {shift:>12.3e} {:>12.6}", sys.derivative(n, &w)?);
        }
    }
    Ok(())
}
