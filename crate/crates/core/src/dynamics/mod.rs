//! Truncated PDE simulators with Strang splitting, traces and drift tables.
//!
//! Every model is a finite Hamiltonian system `i ∂_t u = ∇Z₂(u) + ∇P(u)` in
//! eigen-coordinates with `Z₂ = ½ Σ ω_n |u_n|²`. The linear substep is the
//! exact phase `e^{-iω_n t}`; the nonlinear substep is exact on a grid.

mod kg;
mod nls;
mod scaling;

pub use kg::{harmonic_energy, kg_complexify, kg_decomplexify, KleinGordon};
pub use nls::{Nls1d, Nls2d, NlsBoundary};
pub(crate) use scaling::parallel_map;
pub use scaling::{scaling_experiment, scaling_experiment_parallel, ScalingCell, ScalingOptions, ScalingReport as DriftScalingReport};

use crate::hamilton::{factorial, HamiltonError};
use crate::lattice::{LatticeError, ModeIndex};
use crate::resonance::{FrequencyFamily, ResonanceError};
use crate::spectra::{Potential, SpectraError};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Resonance(#[from] ResonanceError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Hamilton(#[from] HamiltonError),
    #[error("integration aborted at t = {time}: norm {norm:.3e} exceeds 10x the initial {initial:.3e}")]
    Aborted { time: f64, norm: f64, initial: f64, trace: Box<Trace> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One rung `g_j(x) = value · profile(x)` of the ladder `g(x, y) = Σ_j g_j(x) y^j / j!`.
///
/// For Klein-Gordon `y = Φ`; for NLS `y = |u|²` and the nonlinearity is `g(x, |u|²) u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderTerm {
    pub order: usize,
    pub value: f64,
    #[serde(default)]
    pub profile: Option<Potential>,
}

impl LadderTerm {
    pub fn constant(order: usize, value: f64) -> Self {
        Self { order, value, profile: None }
    }

    fn at(&self, x: f64) -> f64 {
        self.value * self.profile.as_ref().map_or(1.0, |p| p.eval(x))
    }

    /// Highest spatial frequency of the profile (0 for constants and grids).
    fn bandwidth(&self) -> usize {
        match &self.profile {
            Some(Potential::Fourier { cos, sin }) => cos.len().saturating_sub(1).max(sin.len()),
            _ => 0,
        }
    }
}

/// Samples of every rung on a grid: `table[t][j] = g_{order_t}(x_j)`.
#[derive(Clone, Debug)]
pub(crate) struct Ladder {
    orders: Vec<usize>,
    table: Vec<Vec<f64>>,
}

impl Ladder {
    fn sample(terms: &[LadderTerm], xs: &[f64]) -> Self {
        Self {
            orders: terms.iter().map(|t| t.order).collect(),
            table: terms.iter().map(|t| xs.iter().map(|&x| t.at(x)).collect()).collect(),
        }
    }

    fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// `g(x_j, y)`.
    fn g(&self, j: usize, y: f64) -> f64 {
        self.orders.iter().zip(&self.table).map(|(&o, t)| t[j] * y.powi(o as i32) / factorial(o)).sum()
    }

    /// `G(x_j, y) = ∫₀^y g(x_j, ·)`.
    fn primitive(&self, j: usize, y: f64) -> f64 {
        self.orders
            .iter()
            .zip(&self.table)
            .map(|(&o, t)| t[j] * y.powi(o as i32 + 1) / factorial(o + 1))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolutionEntry {
    pub n: [i32; 2],
    pub value: f64,
}

/// A truncated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `∂²_t Φ = ∂²_x Φ - mΦ + g(x, Φ)` on `(0, π)`, sine modes `1..=modes`.
    KleinGordon {
        mass: f64,
        modes: usize,
        #[serde(default)]
        nonlinearity: Vec<LadderTerm>,
        #[serde(default)]
        grid: Option<usize>,
    },
    /// `i∂_t u = -∂²_x u + V u + g(x, |u|²) u` with Dirichlet conditions.
    NlsDirichlet {
        #[serde(default = "Potential::zero")]
        potential: Potential,
        modes: usize,
        #[serde(default)]
        nonlinearity: Vec<LadderTerm>,
    },
    /// Same on the circle `[0, 2π)` with even `V`; modes `|n| ≤ modes`.
    NlsPeriodic {
        #[serde(default = "Potential::zero")]
        potential: Potential,
        modes: usize,
        #[serde(default)]
        nonlinearity: Vec<LadderTerm>,
    },
    /// `i∂_t u = -Δu + V ⋆ u + g(|u|²) u` on `𝕋²`, modes `|n|∞ ≤ modes`.
    Nls2d {
        #[serde(default)]
        vhat: Vec<ConvolutionEntry>,
        modes: usize,
        #[serde(default)]
        nonlinearity: Vec<LadderTerm>,
    },
}

impl ModelSpec {
    /// Klein-Gordon with `g(Φ) = a Φ²`.
    pub fn kg_quadratic(mass: f64, a: f64, modes: usize) -> Self {
        ModelSpec::KleinGordon { mass, modes, nonlinearity: vec![LadderTerm::constant(2, 2.0 * a)], grid: None }
    }

    /// NLS with `g = κ |u|²` and the given boundary.
    pub fn nls_cubic(boundary: NlsBoundary, potential: Potential, kappa: f64, modes: usize) -> Self {
        let nonlinearity = vec![LadderTerm::constant(1, kappa)];
        match boundary {
            NlsBoundary::Dirichlet => ModelSpec::NlsDirichlet { potential, modes, nonlinearity },
            NlsBoundary::Periodic => ModelSpec::NlsPeriodic { potential, modes, nonlinearity },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::KleinGordon { .. } => "klein-gordon",
            ModelSpec::NlsDirichlet { .. } => "nls-dirichlet",
            ModelSpec::NlsPeriodic { .. } => "nls-periodic",
            ModelSpec::Nls2d { .. } => "nls2d",
        }
    }

    pub fn modes(&self) -> usize {
        match self {
            ModelSpec::KleinGordon { modes, .. }
            | ModelSpec::NlsDirichlet { modes, .. }
            | ModelSpec::NlsPeriodic { modes, .. }
            | ModelSpec::Nls2d { modes, .. } => *modes,
        }
    }

    /// Same model with another truncation.
    pub fn with_modes(&self, k: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::KleinGordon { modes, grid, .. } => {
                *modes = k;
                *grid = None;
            }
            ModelSpec::NlsDirichlet { modes, .. } | ModelSpec::NlsPeriodic { modes, .. } | ModelSpec::Nls2d { modes, .. } => {
                *modes = k
            }
        }
        out
    }

    pub fn nonlinearity(&self) -> &[LadderTerm] {
        match self {
            ModelSpec::KleinGordon { nonlinearity, .. }
            | ModelSpec::NlsDirichlet { nonlinearity, .. }
            | ModelSpec::NlsPeriodic { nonlinearity, .. }
            | ModelSpec::Nls2d { nonlinearity, .. } => nonlinearity,
        }
    }

    /// Lowest degree of the Hamiltonian perturbation, `None` for linear models.
    pub fn order(&self) -> Option<usize> {
        let low = self.nonlinearity().iter().filter(|t| t.value != 0.0).map(|t| t.order).min()?;
        Some(match self {
            ModelSpec::KleinGordon { .. } => low + 1,
            _ => 2 * low + 2,
        })
    }

    /// `1/2` for Klein-Gordon, `1` for NLS.
    pub fn default_s(&self) -> f64 {
        match self {
            ModelSpec::KleinGordon { .. } => 0.5,
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.modes() == 0 {
            return Err(DynamicsError::Invalid("at least one mode is required".into()));
        }
        for t in self.nonlinearity() {
            if !t.value.is_finite() {
                return Err(DynamicsError::Invalid(format!("non-finite ladder value at order {}", t.order)));
            }
            if let Some(p) = &t.profile {
                p.validate()?;
            }
        }
        match self {
            ModelSpec::KleinGordon { mass, modes, grid, nonlinearity } => {
                if !(*mass > -1.0) {
                    return Err(DynamicsError::Invalid(format!("mass {mass} must exceed -1")));
                }
                if nonlinearity.iter().any(|t| t.order < 2) {
                    return Err(DynamicsError::Invalid("g must vanish to second order at Φ = 0".into()));
                }
                if let Some(m) = grid {
                    if *m < *modes {
                        return Err(DynamicsError::Invalid(format!("grid {m} is coarser than {modes} modes")));
                    }
                }
            }
            ModelSpec::NlsDirichlet { potential, .. } => potential.validate()?,
            ModelSpec::NlsPeriodic { potential, .. } => {
                potential.validate()?;
                if !potential.is_even(1e-12) {
                    return Err(SpectraError::NotEven(1e-12).into());
                }
            }
            ModelSpec::Nls2d { vhat, nonlinearity, .. } => {
                if vhat.iter().any(|e| !e.value.is_finite()) {
                    return Err(DynamicsError::Invalid("non-finite convolution multiplier".into()));
                }
                if nonlinearity.iter().any(|t| t.profile.is_some()) {
                    return Err(DynamicsError::Invalid("2D nonlinearities must be spatially constant".into()));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Model>, DynamicsError> {
        self.validate()?;
        Ok(match self {
            ModelSpec::KleinGordon { mass, modes, nonlinearity, grid } => {
                Box::new(KleinGordon::new(*mass, *modes, nonlinearity, *grid)?)
            }
            ModelSpec::NlsDirichlet { potential, modes, nonlinearity } => {
                Box::new(Nls1d::new(NlsBoundary::Dirichlet, potential, *modes, nonlinearity)?)
            }
            ModelSpec::NlsPeriodic { potential, modes, nonlinearity } => {
                Box::new(Nls1d::new(NlsBoundary::Periodic, potential, *modes, nonlinearity)?)
            }
            ModelSpec::Nls2d { vhat, modes, nonlinearity } => Box::new(Nls2d::new(vhat, *modes, nonlinearity)?),
        })
    }
}

/// A truncated Hamiltonian system in eigen-coordinates.
pub trait Model {
    fn name(&self) -> String;
    /// Lattice, frequencies `ω` and equal-frequency groups.
    fn family(&self) -> &FrequencyFamily;
    fn is_linear(&self) -> bool;
    /// Exact flow of the nonlinear part over `dt`.
    fn kick(&self, u: &mut [Complex64], dt: f64);
    /// `Z₂(u) + P(u)`.
    fn hamiltonian(&self, u: &[Complex64]) -> f64;
    /// Conserved `ℓ²` mass, for gauge-invariant models.
    fn mass(&self, _u: &[Complex64]) -> Option<f64> {
        None
    }
    /// Harmonic energies per mode, when the model defines them.
    fn energies(&self, _u: &[Complex64]) -> Vec<f64> {
        vec![]
    }
    /// `h^{-s}` norm of the nonlinear field on the modes just above the truncation.
    fn forcing(&self, u: &[Complex64], s: f64) -> f64;
}

impl dyn Model + '_ {
    pub fn len(&self) -> usize {
        self.family().lattice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self, u: &[Complex64], s: f64) -> f64 {
        hs_norm(self.family(), u, s)
    }

    /// Exact linear flow over `dt`.
    pub fn rotate(&self, u: &mut [Complex64], dt: f64) {
        for (z, w) in u.iter_mut().zip(self.family().omega()) {
            *z *= Complex64::from_polar(1.0, -w * dt);
        }
    }

    /// One Strang step: half rotation, kick, half rotation.
    pub fn step(&self, u: &mut [Complex64], dt: f64) {
        if self.is_linear() {
            self.rotate(u, dt);
            return;
        }
        self.rotate(u, dt / 2.0);
        self.kick(u, dt);
        self.rotate(u, dt / 2.0);
    }

    /// Super-action groups as member lists, ordered by smallest `⟨n⟩`.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        action_groups(self.family())
    }
}

fn hs_norm(family: &FrequencyFamily, u: &[Complex64], s: f64) -> f64 {
    family.lattice().modes().iter().zip(u).map(|(m, z)| m.bracket().powf(2.0 * s) * z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn action_groups(family: &FrequencyFamily) -> Vec<Vec<usize>> {
    let n_groups = family.groups().iter().copied().max().map_or(0, |g| g + 1);
    let mut groups = vec![vec![]; n_groups];
    for (i, &g) in family.groups().iter().enumerate() {
        groups[g].push(i);
    }
    let l = family.lattice();
    let key = |g: &Vec<usize>| g.iter().map(|&i| l.mode(i).bracket()).fold(f64::INFINITY, f64::min);
    groups.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.cmp(b)));
    groups
}

fn group_label(family: &FrequencyFamily, g: &[usize]) -> String {
    let names: Vec<String> = g.iter().map(|&i| family.lattice().mode(i).to_string()).collect();
    if names.len() == 1 {
        names[0].clone()
    } else {
        format!("{{{}}}", names.join(";"))
    }
}

/// Gaussian state supported on modes with `⟨n⟩ ≤ support`, scaled to `‖u‖_{h^s} = radius`.
pub fn random_state(
    rng: &mut ChaCha8Rng,
    family: &FrequencyFamily,
    s: f64,
    radius: f64,
    support: f64,
) -> Result<Vec<Complex64>, DynamicsError> {
    // draws only on the support, in lattice order, so nested truncations share the state
    let mut u: Vec<Complex64> = family
        .lattice()
        .modes()
        .iter()
        .map(|m| {
            if m.bracket() <= support {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                Complex64::default()
            }
        })
        .collect();
    let n = hs_norm(family, &u, s);
    if n == 0.0 {
        return Err(DynamicsError::Invalid(format!("no mode with ⟨n⟩ ≤ {support}")));
    }
    for z in &mut u {
        *z *= radius / n;
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub norm: f64,
    pub hamiltonian: f64,
    pub mass: Option<f64>,
    pub actions: Vec<f64>,
    pub energies: Vec<f64>,
    pub forcing: f64,
    /// `|u_n|` in lattice order.
    pub moduli: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: String,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub dt: f64,
    pub steps: usize,
    pub s: f64,
    pub modes: Vec<ModeIndex>,
    pub group_labels: Vec<String>,
    /// Smallest `⟨n⟩` per group.
    pub group_brackets: Vec<f64>,
    pub samples: Vec<TraceSample>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Samples are taken every `stride` steps and at the end.
    pub stride: usize,
    /// Regularity of the recorded norms.
    pub s: f64,
    /// Skip the forcing estimate (it costs a fine-grid transform per sample).
    pub forcing: bool,
}

impl IntegrateOptions {
    pub fn new(stride: usize, s: f64) -> Self {
        Self { stride, s, forcing: true }
    }
}

fn sample(model: &dyn Model, groups: &[Vec<usize>], u: &[Complex64], t: f64, opts: &IntegrateOptions) -> TraceSample {
    TraceSample {
        t,
        norm: model.norm(u, opts.s),
        hamiltonian: model.hamiltonian(u),
        mass: model.mass(u),
        actions: groups.iter().map(|g| g.iter().map(|&i| u[i].norm_sqr()).sum()).collect(),
        energies: model.energies(u),
        forcing: if opts.forcing { model.forcing(u, opts.s) } else { 0.0 },
        moduli: u.iter().map(|z| z.norm()).collect(),
    }
}

/// Integrates from `u0` over `[0, t_end]` with `⌈t_end/dt⌉` equal steps; a
/// negative `dt` runs backward.
pub fn integrate(
    model: &dyn Model,
    u0: &[Complex64],
    t_end: f64,
    dt: f64,
    opts: &IntegrateOptions,
) -> Result<(Trace, Vec<Complex64>), DynamicsError> {
    if u0.len() != model.len() {
        return Err(DynamicsError::Invalid(format!("state has {} entries, model {}", u0.len(), model.len())));
    }
    if !(dt != 0.0 && dt.is_finite() && t_end.is_finite() && t_end * dt >= 0.0) || opts.stride == 0 {
        return Err(DynamicsError::Invalid(format!("bad time grid t_end = {t_end}, dt = {dt}")));
    }
    let steps = ((t_end / dt).abs() - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { dt } else { t_end / steps as f64 };
    let fam = model.family();
    let groups = model.groups();
    let mut trace = Trace {
        meta: TraceMeta { model: model.name(), ..Default::default() },
        dt: h,
        steps,
        s: opts.s,
        modes: fam.lattice().modes().to_vec(),
        group_labels: groups.iter().map(|g| group_label(fam, g)).collect(),
        group_brackets: groups
            .iter()
            .map(|g| g.iter().map(|&i| fam.lattice().mode(i).bracket()).fold(f64::INFINITY, f64::min))
            .collect(),
        samples: vec![],
    };
    let mut u = u0.to_vec();
    trace.samples.push(sample(model, &groups, &u, 0.0, opts));
    let l2 = |u: &[Complex64]| u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let initial = l2(&u);
    for k in 1..=steps {
        model.step(&mut u, h);
        let t = k as f64 * h;
        let n = l2(&u);
        if !n.is_finite() || (initial > 0.0 && n > 10.0 * initial) {
            trace.samples.push(sample(model, &groups, &u, t, opts));
            return Err(DynamicsError::Aborted { time: t, norm: n, initial, trace: Box::new(trace) });
        }
        if k % opts.stride == 0 || k == steps {
            trace.samples.push(sample(model, &groups, &u, t, opts));
        }
    }
    Ok((trace, u))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub label: String,
    pub bracket: f64,
    pub initial: f64,
    pub sup_drift: f64,
    pub time_of_sup: f64,
    /// `sup |ΔJ| / (⟨n⟩^b ε^p)` when `ε` is known.
    pub normalized: Option<f64>,
}

/// Per group: `sup_t |J(t) - J(0)|` and its normalization by `⟨n⟩^b ε^p`.
pub fn track_superactions(trace: &Trace, b: f64, p: f64) -> Vec<DriftRow> {
    let Some(first) = trace.samples.first() else { return vec![] };
    trace
        .group_labels
        .iter()
        .enumerate()
        .map(|(g, label)| {
            let (mut sup, mut at) = (0.0, 0.0);
            for s in &trace.samples {
                let d = (s.actions[g] - first.actions[g]).abs();
                if d > sup {
                    sup = d;
                    at = s.t;
                }
            }
            let bracket = trace.group_brackets[g];
            DriftRow {
                label: label.clone(),
                bracket,
                initial: first.actions[g],
                sup_drift: sup,
                time_of_sup: at,
                normalized: trace.meta.eps.map(|e| sup / (bracket.powf(b) * e.powf(p))),
            }
        })
        .collect()
}

/// `min_θ ‖u(t) - Σ e^{iθ_n} u_n(0) f_n‖_{h^s} = (Σ ⟨n⟩^{2s} (|u_n(t)| - |u_n(0)|)²)^{1/2}` per sample.
pub fn orbital_alignment_error(trace: &Trace, s: f64) -> Vec<f64> {
    let Some(first) = trace.samples.first() else { return vec![] };
    let w: Vec<f64> = trace.modes.iter().map(|m| m.bracket().powf(2.0 * s)).collect();
    trace
        .samples
        .iter()
        .map(|smp| {
            smp.moduli
                .iter()
                .zip(&first.moduli)
                .zip(&w)
                .map(|((a, b), w)| w * (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Relative drifts of the conserved quantities over a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationSummary {
    pub energy_drift: f64,
    pub mass_drift: Option<f64>,
    /// `max_n max_t ||u_n(t)| - |u_n(0)||`.
    pub modulus_drift: f64,
}

pub fn conservation(trace: &Trace) -> ConservationSummary {
    let first = &trace.samples[0];
    let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
    let energy_drift = trace.samples.iter().map(|s| rel(s.hamiltonian, first.hamiltonian)).fold(0.0, f64::max);
    let mass_drift = first
        .mass
        .map(|m0| trace.samples.iter().filter_map(|s| s.mass).map(|m| rel(m, m0)).fold(0.0, f64::max));
    let modulus_drift = trace
        .samples
        .iter()
        .flat_map(|s| s.moduli.iter().zip(&first.moduli).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    ConservationSummary { energy_drift, mass_drift, modulus_drift }
}

/// `|H(u) - H(u₀)|` maximized over the trace, not relative.
pub fn energy_error(trace: &Trace) -> f64 {
    let h0 = trace.samples[0].hamiltonian;
    trace.samples.iter().map(|s| (s.hamiltonian - h0).abs()).fold(0.0, f64::max)
}

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Trace {
    pub fn columns(&self) -> Vec<String> {
        let mut c = vec!["t".to_string(), "norm".into(), "hamiltonian".into()];
        if self.samples.first().is_some_and(|s| s.mass.is_some()) {
            c.push("mass".into());
        }
        c.extend(self.group_labels.iter().map(|l| format!("J_{l}")));
        if let Some(s) = self.samples.first() {
            c.extend(self.modes.iter().take(s.energies.len()).map(|m| format!("E_{m}")));
        }
        c.push("forcing".into());
        c
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<(), DynamicsError> {
        writeln!(w, "{}", self.columns().join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt17(s.t), fmt17(s.norm), fmt17(s.hamiltonian)];
            if let Some(m) = s.mass {
                row.push(fmt17(m));
            }
            row.extend(s.actions.iter().map(|x| fmt17(*x)));
            row.extend(s.energies.iter().map(|x| fmt17(*x)));
            row.push(fmt17(s.forcing));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Writes `trace.csv`, `trace_columns.json` and `drift.json` into `dir`.
    pub fn write_dir(&self, dir: &Path, b: f64, p: f64) -> Result<(), DynamicsError> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("trace.csv"))?))?;
        std::fs::write(dir.join("trace_columns.json"), serde_json::to_string_pretty(&self.columns())?)?;
        let summary = TraceSummary {
            meta: self.meta.clone(),
            dt: self.dt,
            steps: self.steps,
            final_time: self.samples.last().map_or(0.0, |s| s.t),
            conservation: conservation(self),
            drifts: track_superactions(self, b, p),
        };
        std::fs::write(dir.join("drift.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub meta: TraceMeta,
    pub dt: f64,
    pub steps: usize,
    pub final_time: f64,
    pub conservation: ConservationSummary,
    pub drifts: Vec<DriftRow>,
}

/// `H(u) + shift·M(u)/2` against `‖u‖²_{h^s}`; the shift makes the quadratic part positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityPoint {
    pub radius: f64,
    pub ratio: f64,
    pub validated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub s: f64,
    pub shift: f64,
    /// Two-sided constant of the quadratic part alone.
    pub lambda_linear: f64,
    /// `max(max ratio, 1/min ratio)` over validated samples.
    pub lambda: f64,
    pub points: Vec<CoercivityPoint>,
    /// Radii with a sample outside `[1/(2Λ_lin), 2Λ_lin]`.
    pub violations: Vec<f64>,
}

fn coercive_shift(model: &dyn Model) -> f64 {
    let min_w = model.family().omega().iter().copied().fold(f64::INFINITY, f64::min);
    if model.mass(&vec![Complex64::default(); model.len()]).is_some() {
        (1.0 - min_w).max(0.0)
    } else {
        0.0
    }
}

fn linear_ratios(model: &dyn Model, s: f64, shift: f64) -> (f64, f64) {
    let l = model.family().lattice();
    model.family().omega().iter().zip(l.modes()).fold((f64::INFINITY, 0.0f64), |(lo, hi), (w, m)| {
        let q = 0.5 * (w + shift) / m.bracket().powf(2.0 * s);
        (lo.min(q), hi.max(q))
    })
}

/// Ratio `(H + shift·M/2)(u) / ‖u‖²_{h^s}` at one state, judged against the linear constant.
pub fn coercivity_check(model: &dyn Model, u: &[Complex64], s: f64) -> CoercivityPoint {
    let shift = coercive_shift(model);
    let (lo, hi) = linear_ratios(model, s, shift);
    let lam = hi.max(1.0 / lo);
    let n2 = model.norm(u, s).powi(2);
    let e = model.hamiltonian(u) + shift * model.mass(u).unwrap_or(0.0) / 2.0;
    let ratio = if n2 == 0.0 { 0.0 } else { e / n2 };
    let validated = n2 == 0.0 || (ratio >= 1.0 / (2.0 * lam) && ratio <= 2.0 * lam);
    CoercivityPoint { radius: n2.sqrt(), ratio, validated }
}

/// Sweeps `samples` random states per radius.
pub fn coercivity_sweep(
    model: &dyn Model,
    radii: &[f64],
    samples: usize,
    s: f64,
    seed: u64,
) -> Result<CoercivityReport, DynamicsError> {
    let shift = coercive_shift(model);
    let (lo, hi) = linear_ratios(model, s, shift);
    let lambda_linear = hi.max(1.0 / lo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![];
    let mut violations = vec![];
    for &r in radii {
        for _ in 0..samples {
            let u = random_state(&mut rng, model.family(), s, r, f64::INFINITY)?;
            let p = coercivity_check(model, &u, s);
            if !p.validated && violations.last() != Some(&r) {
                violations.push(r);
            }
            points.push(p);
        }
    }
    let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
    for p in points.iter().filter(|p| p.validated && p.radius > 0.0) {
        rmin = rmin.min(p.ratio);
        rmax = rmax.max(p.ratio);
    }
    let lambda = if rmin.is_finite() { rmax.max(1.0 / rmin) } else { f64::NAN };
    Ok(CoercivityReport { s, shift, lambda_linear, lambda, points, violations })
}

#[cfg(test)]
mod tests;
