//! Monte Carlo evidence that random small potentials give non-resonant frequencies.

use super::certificate::{verify_limited_nonresonance, verify_strong_nonresonance, VerifyOptions};
use super::{FrequencyFamily, ResonanceError};
use crate::lattice::{japanese, Lattice, ModeIndex};
use crate::spectra::{solve_dirichlet, solve_periodic_even, GalerkinOptions, Potential};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Maximal rejections per accepted sample.
pub const MAX_REJECTIONS: usize = 1000;

/// Random potential laws. Coefficient `n` is drawn with standard deviation or
/// half-width `amplitude · ⟨n⟩^{-s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialLaw {
    /// Gaussian cosine and sine series on the circle, restricted to `(0, π)`; Dirichlet spectrum.
    GaussianFourier { s: f64, amplitude: f64, modes: usize },
    /// Gaussian cosine series; even periodic spectrum indexed by `ℤ`.
    GaussianCosine { s: f64, amplitude: f64, modes: usize },
    /// Uniform Fourier multipliers on `𝕋²`; frequencies `|n|² + V̂_n`.
    UniformConvolution { s: f64, amplitude: f64 },
}

impl PotentialLaw {
    pub fn validate(&self) -> Result<(), ResonanceError> {
        let (s, a) = match self {
            PotentialLaw::GaussianFourier { s, amplitude, .. }
            | PotentialLaw::GaussianCosine { s, amplitude, .. }
            | PotentialLaw::UniformConvolution { s, amplitude } => (*s, *amplitude),
        };
        if !(s.is_finite() && a.is_finite() && a > 0.0) {
            return Err(ResonanceError::Invalid(format!("law parameters s = {s}, amplitude = {a}")));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialLaw::GaussianFourier { .. } => "gaussian-fourier",
            PotentialLaw::GaussianCosine { .. } => "gaussian-cosine",
            PotentialLaw::UniformConvolution { .. } => "uniform-convolution",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericityOptions {
    pub trials: usize,
    /// Maximal arity of the scanned divisors.
    pub r: usize,
    /// Index range: `1..=range` (Fourier), `-range..=range` (cosine), `|n|_∞ ≤ range` (convolution).
    pub range: i32,
    /// Only divisors with `κ ≤ kappa_max`; for the cosine law this is the limited variant.
    #[serde(default)]
    pub kappa_max: Option<f64>,
    /// Samples are kept only when `‖V‖_{H¹} < rho`.
    pub rho: f64,
    pub seed: u64,
    #[serde(default = "default_galerkin")]
    pub galerkin_dim: usize,
}

fn default_galerkin() -> usize {
    96
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub index: usize,
    pub rejections: usize,
    pub h1_norm: f64,
    /// Exact zeros (integer families only) plus divisors below the floating-point floor.
    pub resonances: u64,
    pub min_divisor: f64,
    pub argmin: Vec<(ModeIndex, i32)>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    /// Drawn coefficients in law order.
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub law: PotentialLaw,
    pub options: GenericityOptions,
    pub samples: Vec<SampleSummary>,
    pub total_rejections: usize,
    pub total_resonances: u64,
    /// Fraction of samples without resonance; `None` for zero trials.
    pub clean_fraction: Option<f64>,
    /// Minimum, 10%, 50%, 90% quantiles and maximum of per-sample `min |Ω|`.
    pub min_divisor_quantiles: Vec<f64>,
    /// Indices of the three samples with the smallest `min |Ω|`.
    pub worst: Vec<usize>,
}

struct Draw {
    coefficients: Vec<f64>,
    h1_norm: f64,
}

fn draw(law: &PotentialLaw, range: i32, rng: &mut ChaCha8Rng) -> Draw {
    match law {
        PotentialLaw::GaussianFourier { s, amplitude, modes } => {
            let mut c = Vec::with_capacity(2 * modes + 1);
            for n in 0..=*modes {
                let g: f64 = rng.sample(StandardNormal);
                c.push(amplitude * g * japanese(n as f64).powf(-s));
            }
            for n in 1..=*modes {
                let g: f64 = rng.sample(StandardNormal);
                c.push(amplitude * g * japanese(n as f64).powf(-s));
            }
            let v = fourier(&c, *modes);
            Draw { h1_norm: v.h1_norm(), coefficients: c }
        }
        PotentialLaw::GaussianCosine { s, amplitude, modes } => {
            let c: Vec<f64> = (0..=*modes)
                .map(|n| {
                    let g: f64 = rng.sample(StandardNormal);
                    amplitude * g * japanese(n as f64).powf(-s)
                })
                .collect();
            let h1_norm = Potential::Fourier { cos: c.clone(), sin: vec![] }.h1_norm();
            Draw { coefficients: c, h1_norm }
        }
        PotentialLaw::UniformConvolution { s, amplitude } => {
            let lattice = Lattice::square(range).expect("validated range");
            let mut h1 = 0.0;
            let c: Vec<f64> = lattice
                .modes()
                .iter()
                .map(|m| {
                    let b = amplitude * m.bracket().powf(-s);
                    let x = rng.gen_range(-b..b);
                    h1 += m.bracket().powi(2) * x * x;
                    x
                })
                .collect();
            // ‖V‖²_{H¹(𝕋²)} = 4π² Σ ⟨n⟩² |V̂_n|² on the scanned modes
            Draw { coefficients: c, h1_norm: 2.0 * PI * h1.sqrt() }
        }
    }
}

fn fourier(c: &[f64], modes: usize) -> Potential {
    Potential::Fourier { cos: c[..=modes].to_vec(), sin: c[modes + 1..].to_vec() }
}

fn family_of(
    law: &PotentialLaw,
    c: &[f64],
    opts: &GenericityOptions,
    index: usize,
) -> Result<FrequencyFamily, ResonanceError> {
    let label = format!("{} sample {index}", law.name());
    let g = GalerkinOptions::new(opts.range.max(1) as usize, opts.galerkin_dim);
    match law {
        PotentialLaw::GaussianFourier { modes, .. } => {
            let e = solve_dirichlet(&fourier(c, *modes), &g)?;
            let lattice = Arc::new(Lattice::range(1, opts.range)?);
            let omega = (1..=opts.range).map(|n| e.eigenvalue(n)).collect::<Result<_, _>>()?;
            FrequencyFamily::new(label, lattice, omega)
        }
        PotentialLaw::GaussianCosine { .. } => {
            let e = solve_periodic_even(&Potential::Fourier { cos: c.to_vec(), sin: vec![] }, &g, 1e-12)?;
            let lattice = Arc::new(Lattice::range(-opts.range, opts.range)?);
            let omega = (-opts.range..=opts.range).map(|n| e.eigenvalue(n)).collect::<Result<_, _>>()?;
            FrequencyFamily::new(label, lattice, omega)
        }
        PotentialLaw::UniformConvolution { .. } => {
            let lattice = Arc::new(Lattice::square(opts.range)?);
            let omega = lattice.modes().iter().zip(c).map(|(m, v)| m.norm_sq() as f64 + v).collect();
            FrequencyFamily::new(label, lattice, omega)
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Draws `trials` conditioned potentials and scans each spectrum. Deterministic in `seed`.
pub fn genericity_monte_carlo(law: &PotentialLaw, opts: &GenericityOptions) -> Result<GenericityReport, ResonanceError> {
    law.validate()?;
    if opts.range < 1 || opts.r == 0 || !(opts.rho > 0.0) {
        return Err(ResonanceError::Invalid("range and r must be positive and rho > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples = Vec::with_capacity(opts.trials);
    for index in 0..opts.trials {
        let mut rejections = 0;
        let d = loop {
            let d = draw(law, opts.range, &mut rng);
            if d.h1_norm < opts.rho {
                break d;
            }
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(ResonanceError::Conditioning(rejections));
            }
        };
        let family = family_of(law, &d.coefficients, opts, index)?;
        let cert = match (law, opts.kappa_max) {
            (PotentialLaw::GaussianCosine { .. }, Some(n)) => verify_limited_nonresonance(&family, opts.r, n)?,
            _ => verify_strong_nonresonance(
                &family,
                &VerifyOptions { kappa_max: opts.kappa_max, max_records: 10, ..VerifyOptions::new(opts.r) },
            )?,
        };
        let fit = cert.overall();
        samples.push(SampleSummary {
            index,
            rejections,
            h1_norm: d.h1_norm,
            resonances: cert.violations_total + cert.near_total,
            min_divisor: cert.min_divisor,
            argmin: cert.argmin.clone(),
            gamma: fit.map(|f| f.gamma),
            beta: fit.map(|f| f.beta),
            coefficients: d.coefficients,
        });
    }
    let mut mins: Vec<f64> = samples.iter().map(|s| s.min_divisor).collect();
    mins.sort_by(f64::total_cmp);
    let min_divisor_quantiles =
        if mins.is_empty() { vec![] } else { [0.0, 0.1, 0.5, 0.9, 1.0].iter().map(|q| quantile(&mins, *q)).collect() };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].min_divisor.total_cmp(&samples[b].min_divisor));
    order.truncate(3);
    let clean = samples.iter().filter(|s| s.resonances == 0).count();
    Ok(GenericityReport {
        law: law.clone(),
        options: opts.clone(),
        total_rejections: samples.iter().map(|s| s.rejections).sum(),
        total_resonances: samples.iter().map(|s| s.resonances).sum(),
        clean_fraction: if samples.is_empty() { None } else { Some(clean as f64 / samples.len() as f64) },
        min_divisor_quantiles,
        worst: order,
        samples,
    })
}
