//! Exhaustive small-divisor scans: massless Klein-Gordon frequencies are
//! resonant, massive ones obey a power law in the smallest index.

use birkhoff::resonance::{verify_strong_nonresonance, FrequencyFamily, VerifyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for mass in [0.0, 1.0] {
        let family = FrequencyFamily::klein_gordon(mass, 12)?;
        let cert = verify_strong_nonresonance(&family, &VerifyOptions::new(4))?;
        println!("m = {mass}: {} queries, {} exact resonances", cert.queries, cert.violations_total);
        if let Some(v) = cert.violations.first() {
            println!("  e.g. {:?}", v.key);
        }
        if !cert.is_resonant() {
            println!("  min |Ω| = {:.3e} at {:?}", cert.min_divisor, cert.argmin);
            for fit in &cert.fits {
                println!("  arity {:?}: |Ω| ≥ {:.3e} κ^-{:.2}", fit.arity, fit.gamma, fit.beta);
            }
        }
    }
    Ok(())
}
