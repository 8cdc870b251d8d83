//! A fast battery of internal consistency checks, each against an independent
//! computation, for smoke-testing a build or an installation.

use crate::dynamics::{integrate, random_state, IntegrateOptions, KleinGordon, LadderTerm, Model, ModelSpec, NlsBoundary};
use crate::hamilton::{code, poisson_bracket, Code, PolyHamiltonian, Sign};
use crate::lattice::{real_dot, Lattice};
use crate::normalform::{birkhoff_normal_form, verify_conjugacy, NormalFormConfig};
use crate::resonance::{verify_strong_nonresonance, FrequencyFamily, VerifyOptions};
use crate::spectra::{solve, Boundary, GalerkinOptions, Potential};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelfCheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(name: &str, tolerance: f64, value: Result<f64, String>) -> Check {
    match value {
        Ok(v) => Check { name: name.into(), value: v, tolerance, pass: v <= tolerance, error: None },
        Err(e) => Check { name: name.into(), value: f64::NAN, tolerance, pass: false, error: Some(e) },
    }
}

fn shifted(v: &[f64], w: &[f64], t: f64) -> Potential {
    let n = v.len().max(w.len());
    let at = |x: &[f64], i: usize| x.get(i).copied().unwrap_or(0.0);
    Potential::Fourier { cos: (0..n).map(|i| at(v, i) + t * at(w, i)).collect(), sin: vec![] }
}

fn free_spectrum() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for b in [Boundary::Dirichlet, Boundary::Neumann] {
        let sys = solve(b, &Potential::zero(), &GalerkinOptions::new(16, 128)).map_err(|e| e.to_string())?;
        for n in sys.labels().into_iter().filter(|n| *n <= 16) {
            let l = sys.eigenvalue(n).map_err(|e| e.to_string())?;
            worst = worst.max((l - (n * n) as f64).abs() / (n * n).max(1) as f64);
        }
    }
    Ok(worst)
}

fn derivative_vs_differences() -> Result<f64, String> {
    let v = [0.1, 0.2, -0.15, 0.05];
    let w = [0.0, 0.3, 0.1, -0.2, 0.1];
    let opts = GalerkinOptions::new(6, 96);
    let at = |t: f64| solve(Boundary::Dirichlet, &shifted(&v, &w, t), &opts).map_err(|e| e.to_string());
    let (mid, up, down) = (at(0.0)?, at(1e-4)?, at(-1e-4)?);
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        let fd = (up.eigenvalue(n).unwrap() - down.eigenvalue(n).unwrap()) / 2e-4;
        let d = mid.derivative(n, &shifted(&[], &w, 1.0)).map_err(|e| e.to_string())?;
        worst = worst.max((d - fd).abs() / d.abs().max(1e-12));
    }
    Ok(worst)
}

fn random_poly(rng: &mut ChaCha8Rng, l: &Arc<Lattice>, terms: usize) -> PolyHamiltonian {
    let mut h = PolyHamiltonian::new(l.clone());
    for _ in 0..terms {
        let d = rng.gen_range(3..=4);
        let modes: Vec<_> = (0..d).map(|_| l.mode(rng.gen_range(0..l.len()))).collect();
        let signs: Vec<Sign> = (0..d).map(|_| if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus }).collect();
        let key = h.key_for(&signs, &modes).expect("modes from the lattice");
        let mut c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if crate::hamilton::conjugate_key(&key) == key {
            c.im = 0.0;
        }
        h.add_monomial(&signs, &modes, c).expect("valid monomial");
    }
    h
}

fn bracket_oracle(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let l = Arc::new(Lattice::range(1, 6).map_err(|e| e.to_string())?);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let h = random_poly(rng, &l, 6);
        let k = random_poly(rng, &l, 6);
        let b = poisson_bracket(&h, &k).map_err(|e| e.to_string())?;
        for _ in 0..4 {
            let u: Vec<Complex64> =
                (0..l.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let gh: Vec<Complex64> = h.gradient(&u).map_err(|e| e.to_string())?.iter().map(|z| z * Complex64::i()).collect();
            let direct = real_dot(&gh, &k.gradient(&u).map_err(|e| e.to_string())?);
            let sym = b.evaluate(&u).map_err(|e| e.to_string())?;
            worst = worst.max((sym - direct).abs() / (1.0 + direct.abs()));
        }
    }
    Ok(worst)
}

/// Gap between the canonical scan and a brute-force pass over ordered tuples:
/// violation counts and minimal divisors must agree exactly (0 or ∞).
fn divisor_scan() -> Result<f64, String> {
    let mut mismatch = 0.0;
    for mass in [0.0, 1.0] {
        let f = FrequencyFamily::klein_gordon(mass, 6).map_err(|e| e.to_string())?;
        let cert = verify_strong_nonresonance(&f, &VerifyOptions::new(3)).map_err(|e| e.to_string())?;
        let n = 2 * f.lattice().len();
        let mut seen = std::collections::BTreeSet::new();
        let (mut violations, mut min) = (0u64, f64::INFINITY);
        for a in 1..=3u32 {
            for mut t in 0..n.pow(a) {
                let mut key: Vec<Code> = (0..a)
                    .map(|_| {
                        let c = t % n;
                        t /= n;
                        code(c / 2, if c % 2 == 1 { Sign::Plus } else { Sign::Minus })
                    })
                    .collect();
                key.sort_unstable();
                if f.kappa(&key).is_none() || !seen.insert(key.clone()) {
                    continue;
                }
                if f.exact_divisor(&key) == Some(0) {
                    violations += 1;
                } else {
                    min = min.min(f.divisor(&key).abs());
                }
            }
        }
        if violations != cert.violations_total || min != cert.min_divisor || (mass == 0.0) != cert.is_resonant() {
            mismatch = f64::INFINITY;
        }
    }
    Ok(mismatch)
}

fn normal_form_residual() -> Result<f64, String> {
    let kg = KleinGordon::new(1.0, 6, &[LadderTerm::constant(2, 2.0)], None).map_err(|e| e.to_string())?;
    let p = kg.perturbation().map_err(|e| e.to_string())?;
    let mut cfg = NormalFormConfig::new(3, 5, 3.0, 0.5, 1.0, 0.5);
    cfg.sup_samples = 16;
    let out = birkhoff_normal_form(kg.family(), &p, &cfg).map_err(|e| e.to_string())?;
    let defect = out.certificate.steps.iter().map(|s| s.homological_defect).fold(0.0, f64::max);
    let rep = verify_conjugacy(&out, 4, out.certificate.epsilon0 / 2.0, 0, 1).map_err(|e| e.to_string())?;
    if !rep.failures.is_empty() {
        return Err(rep.failures.join("; "));
    }
    Ok(rep.residual().max(defect))
}

fn nls_mass(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let v = Potential::Fourier { cos: vec![0.1, 0.3], sin: vec![] };
    let model = ModelSpec::nls_cubic(NlsBoundary::Dirichlet, v, 1.0, 12).build().map_err(|e| e.to_string())?;
    let u = random_state(rng, model.family(), 1.0, 0.5, f64::INFINITY).map_err(|e| e.to_string())?;
    let (trace, _) =
        integrate(model.as_ref(), &u, 10.0, 0.01, &IntegrateOptions::new(100, 1.0)).map_err(|e| e.to_string())?;
    let m: Vec<f64> = trace.samples.iter().filter_map(|s| s.mass).collect();
    Ok(m.iter().map(|x| (x - m[0]).abs() / m[0]).fold(0.0, f64::max))
}

/// Runs every check; never panics on a failing check.
pub fn run_selfchecks(seed: u64) -> SelfCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = vec![
        check("free spectra are squares", 1e-10, free_spectrum()),
        check("eigenvalue derivative vs central differences", 1e-5, derivative_vs_differences()),
        check("bracket vs gradient pairing", 1e-10, bracket_oracle(&mut rng)),
        check("divisor scan vs brute force", 0.0, divisor_scan()),
        check("normal form residual", 1e-8, normal_form_residual()),
        check("nls mass drift", 1e-11, nls_mass(&mut rng)),
    ];
    SelfCheckReport { seed, checks }
}
