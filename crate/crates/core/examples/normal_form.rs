//! Normal form of Klein-Gordon with `g = Φ²` on modes `1..=12` up to degree 5:
//! certificates per step, conjugacy checks and the growth of the remainder.

use birkhoff::dynamics::{KleinGordon, LadderTerm, Model};
use birkhoff::normalform::{birkhoff_normal_form, remainder_scaling, verify_conjugacy, NormalFormConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kg = KleinGordon::new(1.0, 12, &[LadderTerm::constant(2, 2.0)], None)?;
    let p = kg.perturbation()?;
    let cfg = NormalFormConfig::new(3, 5, 4.0, 0.5, 1.0, 0.5);
    let out = birkhoff_normal_form(kg.family(), &p, &cfg)?;
    let cert = &out.certificate;
    for s in &cert.steps {
        println!(
            "degree {}: min |Ω| = {:.3e}, ‖χ‖ = {:.3e}, ε₁ = {:.3}, defect {:.1e}",
            s.degree, s.min_divisor, s.chi_norm, s.eps1, s.homological_defect
        );
    }
    println!("Q_res: {} terms, commutes with low super-actions: {}", out.q_res.nnz(), cert.commutes);
    println!("ε₀ = {:.4}", cert.epsilon0);

    let conj = verify_conjugacy(&out, 10, cert.epsilon0 / 2.0, 1, 1)?;
    println!("round trip {:.2e}, closeness {:.3}, failures {}", conj.max_round_trip, conj.max_closeness, conj.failures.len());

    let radii: Vec<f64> = (0..5).map(|k| cert.epsilon0 / 2.0 / 2f64.powi(k)).collect();
    let sc = remainder_scaling(&out, &radii, 4, 2)?;
    for row in &sc.rows {
        println!("  radius {:.4}: ‖∇R‖ = {:.3e}", row.radius, row.gradient_norm);
    }
    println!("slope {:.3} (target {})", sc.slope.unwrap_or(f64::NAN), sc.target);
    Ok(())
}
