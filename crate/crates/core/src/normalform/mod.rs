//! Iterative Birkhoff normal form on a truncated lattice.
//!
//! Step `r⋆ = p, …, r-1` splits the degree-`r⋆` part of the current
//! Hamiltonian into `L` (keys with `κ ≤ N`) and `U`, solves
//! `{χ, Z₂} + L = 0` and replaces every part by its Lie series
//! `e^{ad_χ}`, with the quadratic part contributing `-Σ_k ad_χ^k L/(k+1)!`.
//! The polynomial is carried up to `tail_degree`; degrees `≥ r` form the
//! tail ledger, degrees `< r` the normalized part `Q_res`.
//!
//! The remainder `R = (Z₂ + P)∘τ¹ - Z₂ - Q_res` is evaluated numerically
//! through the stored flow segments.

mod transform;

pub use transform::{
    remainder_scaling, verify_conjugacy, ConjugacyReport, ConjugacySample, ScalingReport, ScalingRow, Segment,
};

use crate::hamilton::{
    factorial, poisson_bracket_truncated, poisson_with_quadratic_form, poisson_with_z2, FlowError, FlowOptions,
    HamiltonError, PolyHamiltonian, QuadraticDiagonal,
};
use crate::lattice::{hs_norm_unchecked, ModeIndex};
use crate::resonance::FrequencyFamily;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Hamilton(#[from] HamiltonError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("small divisor {divisor:.3e} below floor {floor:.3e} at {key}")]
    Resonance { key: String, divisor: f64, floor: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormConfig {
    /// Lowest degree of the perturbation.
    pub p: usize,
    /// Elimination order; the remainder starts at degree `r`.
    pub r: usize,
    /// Super-action cutoff `N`.
    pub n_cut: f64,
    #[serde(default)]
    pub n_max: Option<f64>,
    #[serde(default = "one")]
    pub eta: f64,
    pub q: f64,
    pub alpha: f64,
    pub s: f64,
    /// Bracket outputs with a mode outside `|n| ≤ radius` are dropped.
    #[serde(default)]
    pub truncation_radius: Option<f64>,
    #[serde(default = "default_rtol")]
    pub flow_rtol: f64,
    #[serde(default = "default_atol")]
    pub flow_atol: f64,
    #[serde(default = "default_floor")]
    pub divisor_floor: f64,
    /// Highest degree kept in the tail ledger (at least `r - 1`).
    #[serde(default)]
    pub tail_degree: Option<usize>,
    /// Random unit states used to estimate vector-field constants.
    #[serde(default = "default_samples")]
    pub sup_samples: usize,
    /// Multiplier applied to sampled suprema.
    #[serde(default = "default_safety")]
    pub sup_safety: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn default_rtol() -> f64 {
    1e-12
}
fn default_atol() -> f64 {
    1e-18
}
fn default_floor() -> f64 {
    1e-10
}
fn default_samples() -> usize {
    64
}
fn default_safety() -> f64 {
    2.0
}

impl NormalFormConfig {
    pub fn new(p: usize, r: usize, n_cut: f64, q: f64, alpha: f64, s: f64) -> Self {
        Self {
            p,
            r,
            n_cut,
            n_max: None,
            eta: 1.0,
            q,
            alpha,
            s,
            truncation_radius: None,
            flow_rtol: default_rtol(),
            flow_atol: default_atol(),
            divisor_floor: default_floor(),
            tail_degree: None,
            sup_samples: default_samples(),
            sup_safety: default_safety(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NormalFormError> {
        let bad = |m: String| Err(NormalFormError::Config(m));
        if self.p < 3 || self.r < self.p {
            return bad(format!("need 3 ≤ p ≤ r, got p = {}, r = {}", self.p, self.r));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta = {} must be positive", self.eta));
        }
        if let Some(nm) = self.n_max {
            if self.n_cut > nm {
                return bad(format!("N = {} exceeds N_max = {nm}", self.n_cut));
            }
        }
        if !(self.flow_rtol > 0.0 && self.flow_atol > 0.0) {
            return bad("flow tolerances must be positive".into());
        }
        if self.tail_degree.is_some_and(|d| d + 1 < self.effective_r()) {
            return bad("tail_degree must be at least r - 1".into());
        }
        if self.sup_samples == 0 || !(self.sup_safety >= 1.0) {
            return bad("need sup_samples ≥ 1 and sup_safety ≥ 1".into());
        }
        Ok(())
    }

    /// `r = p` is run as a single elimination step.
    pub fn effective_r(&self) -> usize {
        self.r.max(self.p + 1)
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions { rtol: self.flow_rtol, atol: self.flow_atol, max_steps: 200_000 }
    }

    fn max_degree(&self) -> usize {
        self.tail_degree.unwrap_or(self.effective_r() - 1).max(self.effective_r() - 1)
    }
}

/// Splits `Q` into `L` (keys with `κ ≤ N`) and `U` (the rest, including paired keys).
pub fn split_resonant(q: &PolyHamiltonian, family: &FrequencyFamily, n_cut: f64) -> (PolyHamiltonian, PolyHamiltonian) {
    let low = q.filter(|k, _| family.kappa(k).is_some_and(|kap| kap <= n_cut));
    let high = q.filter(|k, _| !family.kappa(k).is_some_and(|kap| kap <= n_cut));
    (low, high)
}

/// Whether `{J_n, Q} = 0` symbolically for every group with a member of `⟨n⟩ ≤ N`.
pub fn commutes_with_low_superactions(q: &PolyHamiltonian, family: &FrequencyFamily, n_cut: f64) -> bool {
    let lattice = family.lattice();
    let mut seen = vec![false; lattice.len()];
    for id in 0..lattice.len() {
        if lattice.mode(id).bracket() > n_cut || seen[family.group(id)] {
            continue;
        }
        seen[family.group(id)] = true;
        let w: Vec<f64> = (0..lattice.len()).map(|k| if family.group(k) == family.group(id) { 1.0 } else { 0.0 }).collect();
        let mut b = poisson_with_quadratic_form(q, &w);
        b.prune();
        if !b.is_zero() {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug)]
pub struct HomologicalSolution {
    pub chi: PolyHamiltonian,
    pub min_divisor: f64,
    pub argmin: Vec<(ModeIndex, i32)>,
}

/// `χ^σ_n = L^σ_n / (i Σ σ_j ω_{n_j})`.
pub fn solve_homological(
    l: &PolyHamiltonian,
    family: &FrequencyFamily,
    floor: f64,
) -> Result<HomologicalSolution, NormalFormError> {
    let mut chi = PolyHamiltonian::new(l.lattice().clone());
    let mut min_divisor = f64::INFINITY;
    let mut argmin = vec![];
    for (key, c) in l.sorted_terms() {
        let d = family.divisor(&key);
        let exact_zero = family.exact_divisor(&key) == Some(0);
        if exact_zero || d.abs() < floor {
            return Err(NormalFormError::Resonance { key: l.describe_key(&key), divisor: d, floor });
        }
        if d.abs() < min_divisor {
            min_divisor = d.abs();
            argmin = key
                .iter()
                .map(|&code| {
                    let (id, s) = crate::hamilton::decode(code);
                    (l.lattice().mode(id), s.value())
                })
                .collect();
        }
        // c / (i d) = (Im c - i Re c) / d
        chi.set_raw(key, Complex64::new(c.im / d, -c.re / d));
    }
    Ok(HomologicalSolution { chi, min_divisor, argmin })
}

/// Largest coefficient of `{χ, Z₂} + L` relative to `|L|` at that key.
pub fn homological_defect(chi: &PolyHamiltonian, l: &PolyHamiltonian, z2: &QuadraticDiagonal) -> f64 {
    let b = poisson_with_z2(chi, z2);
    let mut worst: f64 = 0.0;
    for (k, c) in l.terms() {
        let e = (b.get(k) + c).norm() / c.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(e);
    }
    for (k, c) in b.terms() {
        if l.get(k) == Complex64::default() && *c != Complex64::default() {
            worst = f64::INFINITY;
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub struct LieExpansion {
    /// Degrees below `r`.
    pub q: PolyHamiltonian,
    /// Degrees `r..=max_degree`.
    pub tail: PolyHamiltonian,
    /// Absolute coefficient mass dropped by the truncation radius.
    pub dropped_mass: f64,
}

/// `e^{ad_χ} H - Σ_{k≥0} ad_χ^k L/(k+1)!` truncated at `max_degree`, where `H` is
/// every non-quadratic part (normalized, pending and tail).
pub fn lie_expand(
    h: &PolyHamiltonian,
    chi: &PolyHamiltonian,
    l: &PolyHamiltonian,
    r: usize,
    max_degree: usize,
    keep: Option<&dyn Fn(ModeIndex) -> bool>,
) -> Result<LieExpansion, NormalFormError> {
    let rs = match chi.degrees().as_slice() {
        [] => {
            return Ok(LieExpansion {
                q: h.filter(|k, _| k.len() < r),
                tail: h.filter(|k, _| k.len() >= r && k.len() <= max_degree),
                dropped_mass: 0.0,
            })
        }
        [d] => *d,
        _ => return Err(NormalFormError::Config("generator must be homogeneous".into())),
    };
    let step = rs - 2;
    let mut out = h.filter(|k, _| k.len() <= max_degree);
    out.add_assign_scaled(l, -1.0)?;
    let mut dropped = 0.0;
    let mut cur = h.clone();
    let mut k = 1;
    loop {
        let src = cur.filter(|key, _| key.len() + step <= max_degree);
        if src.is_zero() {
            break;
        }
        let (b, d) = poisson_bracket_truncated(chi, &src, keep)?;
        dropped += d;
        out.add_assign_scaled(&b, 1.0 / factorial(k))?;
        cur = b;
        k += 1;
    }
    let mut cur = l.clone();
    let mut k = 1;
    loop {
        let src = cur.filter(|key, _| key.len() + step <= max_degree);
        if src.is_zero() {
            break;
        }
        let (b, d) = poisson_bracket_truncated(chi, &src, keep)?;
        dropped += d;
        out.add_assign_scaled(&b, -1.0 / factorial(k + 1))?;
        cur = b;
        k += 1;
    }
    out.prune();
    Ok(LieExpansion {
        q: out.filter(|k, _| k.len() < r),
        tail: out.filter(|k, _| k.len() >= r),
        dropped_mass: dropped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCertificate {
    pub degree: usize,
    pub resonant_terms: usize,
    pub kept_terms: usize,
    pub min_divisor: f64,
    pub argmin: Vec<(ModeIndex, i32)>,
    pub chi_norm: f64,
    /// `‖Q^{(j)}‖_{q,α}` after the step.
    pub q_norms: Vec<(usize, f64)>,
    /// Sampled `sup ‖∇χ(u)‖_{h^s}` over `‖u‖_{h^s} = 1`, times the safety factor.
    pub vector_field_constant: f64,
    /// Flow radius from the sampled constant.
    pub eps1: f64,
    /// Flow radius with `‖χ‖` replaced by `‖Q^{(r⋆)}‖ / min |Ω|`.
    pub eps1_bound: f64,
    pub homological_defect: f64,
    pub dropped_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCertificate {
    pub steps: Vec<StepCertificate>,
    pub min_divisor: f64,
    /// Input scaling constants `c_j = ‖P^{(j)}‖_{q,α} η^{j-2}`.
    pub input_constants: Vec<(usize, f64)>,
    pub epsilon0: f64,
    pub epsilon0_bound: f64,
    /// `η / ε₀`.
    pub c_constant: f64,
    pub commutes: bool,
    pub max_kappa_violation: Option<f64>,
}

/// Everything produced by a normal-form run.
#[derive(Clone, Debug)]
pub struct NormalFormOutput {
    pub config: NormalFormConfig,
    pub family: FrequencyFamily,
    pub z2: QuadraticDiagonal,
    pub perturbation: PolyHamiltonian,
    pub generators: Vec<PolyHamiltonian>,
    pub q_res: PolyHamiltonian,
    pub tail: PolyHamiltonian,
    pub certificate: NormalFormCertificate,
}

/// Random state with `‖u‖_{h^s} = radius`.
pub fn random_state_on_sphere(rng: &mut ChaCha8Rng, family: &FrequencyFamily, s: f64, radius: f64) -> Vec<Complex64> {
    let l = family.lattice();
    let u: Vec<Complex64> = (0..l.len())
        .map(|_| {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            Complex64::new(a, b)
        })
        .collect();
    let n = hs_norm_unchecked(l, &u, s);
    if n == 0.0 {
        return u;
    }
    u.into_iter().map(|z| z * (radius / n)).collect()
}

fn sampled_vector_field_constant(
    chi: &PolyHamiltonian,
    family: &FrequencyFamily,
    cfg: &NormalFormConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, NormalFormError> {
    let mut best: f64 = 0.0;
    for _ in 0..cfg.sup_samples {
        let u = random_state_on_sphere(rng, family, cfg.s, 1.0);
        let g = chi.gradient(&u)?;
        best = best.max(hs_norm_unchecked(family.lattice(), &g, cfg.s));
    }
    Ok(best * cfg.sup_safety)
}

fn flow_radius(constant: f64, degree: usize) -> f64 {
    if constant == 0.0 {
        f64::INFINITY
    } else {
        (2f64.powi(degree as i32 - 1) * constant).powf(-1.0 / (degree as f64 - 2.0))
    }
}

/// Runs the normal form for `Z₂ + P` with `Z₂ = ½ Σ ω |u|²` taken from `family`.
pub fn birkhoff_normal_form(
    family: &FrequencyFamily,
    perturbation: &PolyHamiltonian,
    cfg: &NormalFormConfig,
) -> Result<NormalFormOutput, NormalFormError> {
    cfg.validate()?;
    if perturbation.lattice() != family.lattice() {
        return Err(HamiltonError::LatticeMismatch.into());
    }
    let r = cfg.effective_r();
    if let Some(d) = perturbation.degrees().into_iter().find(|d| *d < cfg.p || *d >= r) {
        return Err(NormalFormError::Config(format!("perturbation has degree {d} outside {}..{r}", cfg.p)));
    }
    let z2 = QuadraticDiagonal::new(family.omega().to_vec());
    let max_degree = cfg.max_degree();
    let radius = cfg.truncation_radius;
    let keep_fn = move |m: ModeIndex| radius.is_none_or(|rad| m.norm() <= rad);
    let keep: Option<&dyn Fn(ModeIndex) -> bool> = if radius.is_some() { Some(&keep_fn) } else { None };
    let input_constants: Vec<(usize, f64)> = perturbation
        .degrees()
        .into_iter()
        .map(|d| (d, perturbation.degree_part(d).norm(cfg.q, cfg.alpha) * cfg.eta.powi(d as i32 - 2)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut h = perturbation.clone();
    let mut generators = vec![];
    let mut steps = vec![];
    let mut eps0 = f64::INFINITY;
    let mut eps0_bound = f64::INFINITY;
    for rs in cfg.p..r {
        let qr = h.degree_part(rs);
        let (l, u) = split_resonant(&qr, family, cfg.n_cut);
        let sol = solve_homological(&l, family, cfg.divisor_floor)?;
        let defect = homological_defect(&sol.chi, &l, &z2);
        let exp = lie_expand(&h, &sol.chi, &l, r, max_degree, keep)?;
        let mut next = exp.q.clone();
        next.add_assign_scaled(&exp.tail, 1.0)?;
        let m = sampled_vector_field_constant(&sol.chi, family, cfg, &mut rng)?;
        let eps1 = flow_radius(m, rs);
        let chi_norm = sol.chi.norm(cfg.q, cfg.alpha);
        let bound_const = if chi_norm > 0.0 && sol.min_divisor.is_finite() {
            m / chi_norm * qr.norm(cfg.q, cfg.alpha) / sol.min_divisor
        } else {
            0.0
        };
        let eps1_bound = flow_radius(bound_const, rs);
        eps0 = eps0.min(eps1) / 3.0;
        eps0_bound = eps0_bound.min(eps1_bound) / 3.0;
        let q_norms = next.degrees().into_iter().filter(|d| *d < r).map(|d| (d, next.degree_part(d).norm(cfg.q, cfg.alpha))).collect();
        steps.push(StepCertificate {
            degree: rs,
            resonant_terms: l.nnz(),
            kept_terms: u.nnz(),
            min_divisor: sol.min_divisor,
            argmin: sol.argmin,
            chi_norm,
            q_norms,
            vector_field_constant: m,
            eps1,
            eps1_bound,
            homological_defect: defect,
            dropped_mass: exp.dropped_mass,
        });
        generators.push(sol.chi);
        h = next;
    }
    let q_res = h.filter(|k, _| k.len() < r);
    let tail = h.filter(|k, _| k.len() >= r);
    let max_kappa_violation = q_res
        .terms()
        .filter_map(|(k, _)| family.kappa(k))
        .filter(|kap| *kap <= cfg.n_cut)
        .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.max(k))));
    let min_divisor = steps.iter().map(|s| s.min_divisor).fold(f64::INFINITY, f64::min);
    let certificate = NormalFormCertificate {
        commutes: commutes_with_low_superactions(&q_res, family, cfg.n_cut),
        max_kappa_violation,
        steps,
        min_divisor,
        input_constants,
        epsilon0: eps0,
        epsilon0_bound: eps0_bound,
        c_constant: cfg.eta / eps0,
    };
    Ok(NormalFormOutput {
        config: cfg.clone(),
        family: family.clone(),
        z2,
        perturbation: perturbation.clone(),
        generators,
        q_res,
        tail,
        certificate,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a NormalFormConfig,
    family: &'a str,
    tau1: Vec<Segment>,
    tau0: Vec<Segment>,
    generators: Vec<String>,
}

impl NormalFormOutput {
    /// Writes `q_res.json`, `tail.json`, `chi_<degree>.json`, `certificate.json` and `transforms.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), NormalFormError> {
        std::fs::create_dir_all(dir)?;
        let w = |name: &str, v: &dyn erased::Json| -> Result<(), NormalFormError> {
            std::fs::write(dir.join(name), v.to_json()?)?;
            Ok(())
        };
        w("q_res.json", &self.q_res.to_document())?;
        w("tail.json", &self.tail.to_document())?;
        w("certificate.json", &self.certificate)?;
        let mut names = vec![];
        for (i, g) in self.generators.iter().enumerate() {
            let name = format!("chi_{}.json", self.config.p + i);
            w(&name, &g.to_document())?;
            names.push(name);
        }
        let manifest = Manifest {
            config: &self.config,
            family: &self.family.label,
            tau1: self.tau1_segments(),
            tau0: self.tau0_segments(),
            generators: names,
        };
        std::fs::write(dir.join("transforms.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> Result<String, serde_json::Error>;
    }
    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> Result<String, serde_json::Error> {
            serde_json::to_string_pretty(self)
        }
    }
}
