//! Strong small-divisor bounds for massive Klein-Gordon from the weak
//! condition and the accumulation of `ω_n - n` at zero.

use birkhoff::resonance::{bootstrap_strong, fit_accumulation, measure_weak, FrequencyFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let family = FrequencyFamily::klein_gordon(1.0, 64)?;
    let weak = measure_weak(&family, 3, 0.0)?;
    let acc = fit_accumulation(&family, 0.0)?;
    println!("weak: α = {:.3}, γ = {:.3e} over {} queries", weak.alpha, weak.gamma, weak.queries);
    println!("accumulation: |ω_n - n| ≤ {:.3} ⟨n⟩^-{:.3}", acc.c, acc.nu);
    let cert = bootstrap_strong(&family, &weak, &acc, 3)?;
    for l in &cert.levels {
        println!(
            "length {}: β = {:.3}, η = {:.3e} (near {}, far {})",
            l.length, l.beta, l.eta, l.near_branch, l.far_branch
        );
    }
    println!("scanned {}, failures {}, min ratio {:.3e}", cert.scanned, cert.failures, cert.min_ratio);
    Ok(())
}
