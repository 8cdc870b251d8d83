//! The `bnf` command line: TOML experiment files, flag overrides, output directories.
//!
//! Exit codes: 0 success, 1 domain error (resonance, flow failure, blow-up,
//! failed certificate), 2 invalid configuration.

use crate::dynamics::{
    fmt17, integrate, parallel_map, random_state, scaling_experiment_parallel, DynamicsError, IntegrateOptions,
    KleinGordon, ModelSpec, ScalingOptions,
};
use crate::normalform::{birkhoff_normal_form, remainder_scaling, verify_conjugacy, NormalFormConfig, NormalFormError};
use crate::resonance::{
    bootstrap_strong, fit_accumulation, genericity_monte_carlo, measure_weak, verify_strong_resumable,
    CertificateState, FrequencyFamily, GenericityOptions, PotentialLaw, ResonanceError, VerifyOptions,
};
use crate::selfcheck::run_selfchecks;
use crate::spectra::{solve, spectrum_rows, Boundary, GalerkinOptions, Potential, SpectraError};
use clap::{Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const VERSION: &str = concat!("bnf ", env!("CARGO_PKG_VERSION"));

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "BNF_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{message}")]
    Domain { message: String, detail: serde_json::Value },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    fn domain(message: impl Into<String>, detail: serde_json::Value) -> Self {
        CliError::Domain { message: message.into(), detail }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::NotSimple(n, gap) => CliError::domain(e.to_string(), json!({ "index": n, "gap": gap })),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<ResonanceError> for CliError {
    fn from(e: ResonanceError) -> Self {
        match e {
            ResonanceError::Spectra(s) => s.into(),
            ResonanceError::Invalid(_)
            | ResonanceError::Lattice(_)
            | ResonanceError::Length { .. }
            | ResonanceError::Checkpoint(_) => CliError::Config(e.to_string()),
            e => CliError::domain(e.to_string(), serde_json::Value::Null),
        }
    }
}

impl From<NormalFormError> for CliError {
    fn from(e: NormalFormError) -> Self {
        match e {
            NormalFormError::Config(m) => CliError::Config(m),
            NormalFormError::Io(e) => CliError::Io(e),
            NormalFormError::Resonance { ref key, divisor, floor } => {
                CliError::domain(e.to_string(), json!({ "key": key, "divisor": divisor, "floor": floor }))
            }
            e => CliError::domain(e.to_string(), serde_json::Value::Null),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Invalid(m) => CliError::Config(m),
            DynamicsError::Spectra(s) => s.into(),
            DynamicsError::Resonance(r) => r.into(),
            DynamicsError::Io(e) => CliError::Io(e),
            DynamicsError::Aborted { time, norm, initial, .. } => CliError::domain(
                e.to_string(),
                json!({ "time": time, "norm": norm, "initial_norm": initial }),
            ),
            e => CliError::domain(e.to_string(), serde_json::Value::Null),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bnf", version, about = "Birkhoff normal forms on truncated lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `$BNF_OUTPUT_ROOT/<command>` or `runs/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent cells.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sturm-Liouville eigenvalues.
    Spectrum {
        /// `zero`, `constant:c`, `cosine:j` or `fourier:c0,c1,...` (cosine coefficients).
        #[arg(long)]
        potential: Option<String>,
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        galerkin_dim: Option<usize>,
    },
    /// Exhaustive strong non-resonance scan.
    Resonance {
        /// Only `kg` from the command line; other families via the config file.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        range: Option<i32>,
        #[arg(long)]
        kappa_max: Option<f64>,
        /// Checkpoint file written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Strong bounds from weak non-resonance and accumulation.
    Bootstrap {
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        range: Option<i32>,
    },
    /// Monte Carlo over random potentials.
    Genericity {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        range: Option<i32>,
    },
    /// Normal form of a truncated Klein-Gordon equation with certificates.
    NormalForm {
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        n_cut: Option<f64>,
    },
    /// One trajectory with trace and drift summary.
    Simulate {
        /// `kg`, `nls-dirichlet`, `nls-periodic` or `nls2d` (cubic, unit coefficient).
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Drift against amplitude.
    Scaling {
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Internal consistency checks.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Resonance { .. } => "resonance",
            Command::Bootstrap { .. } => "bootstrap",
            Command::Genericity { .. } => "genericity",
            Command::NormalForm { .. } => "normal-form",
            Command::Simulate { .. } => "simulate",
            Command::Scaling { .. } => "scaling",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default = "Potential::zero")]
    pub potential: Potential,
    #[serde(default = "dirichlet")]
    pub boundary: Boundary,
    #[serde(default = "eight")]
    pub n_max: usize,
    #[serde(default = "dim256")]
    pub galerkin_dim: usize,
}

fn dirichlet() -> Boundary {
    Boundary::Dirichlet
}
fn eight() -> usize {
    8
}
fn dim256() -> usize {
    256
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { potential: Potential::zero(), boundary: Boundary::Dirichlet, n_max: 8, galerkin_dim: 256 }
    }
}

/// A frequency family for the scans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `ω_n = sqrt(n² + m)`, `n = 1..=range`.
    KleinGordon { mass: f64, range: i32 },
    /// Dirichlet eigenvalues of `-∂² + V`, `n = 1..=range`.
    Dirichlet {
        potential: Potential,
        range: i32,
        #[serde(default = "dim256")]
        galerkin_dim: usize,
    },
}

impl FamilySpec {
    fn set_range(&mut self, r: i32) {
        match self {
            FamilySpec::KleinGordon { range, .. } | FamilySpec::Dirichlet { range, .. } => *range = r,
        }
    }

    pub fn build(&self) -> Result<FrequencyFamily, CliError> {
        match self {
            FamilySpec::KleinGordon { mass, range } => Ok(FrequencyFamily::klein_gordon(*mass, *range)?),
            FamilySpec::Dirichlet { potential, range, galerkin_dim } => {
                if *range < 1 {
                    return Err(CliError::Config(format!("range {range} must be positive")));
                }
                let sys = solve(Boundary::Dirichlet, potential, &GalerkinOptions::new(*range as usize, *galerkin_dim))?;
                let omega = (1..=*range).map(|n| sys.eigenvalue(n)).collect::<Result<Vec<_>, _>>()?;
                let lattice = Arc::new(crate::lattice::Lattice::range(1, *range).map_err(ResonanceError::from)?);
                Ok(FrequencyFamily::new("dirichlet", lattice, omega)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceSection {
    pub family: FamilySpec,
    pub order: usize,
    #[serde(default)]
    pub kappa_max: Option<f64>,
    #[serde(default = "records")]
    pub max_records: usize,
    /// Queries between checkpoints written to `checkpoint.json` (0 disables).
    #[serde(default = "checkpoint_every")]
    pub checkpoint_every: u64,
}

fn records() -> usize {
    1000
}
fn checkpoint_every() -> u64 {
    1_000_000
}

impl Default for ResonanceSection {
    fn default() -> Self {
        Self {
            family: FamilySpec::KleinGordon { mass: 1.0, range: 20 },
            order: 3,
            kappa_max: None,
            max_records: records(),
            checkpoint_every: checkpoint_every(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub mass: f64,
    pub range: i32,
    pub order: usize,
    /// Accumulation point of `ω_n - n` modulo 1.
    #[serde(default)]
    pub mu: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { mass: 1.0, range: 64, order: 3, mu: 0.0 }
    }
}

/// One law with its scan window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawRun {
    pub law: PotentialLaw,
    pub range: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericitySection {
    pub runs: Vec<LawRun>,
    pub trials: usize,
    pub order: usize,
    pub rho: f64,
    #[serde(default = "dim96")]
    pub galerkin_dim: usize,
}

fn dim96() -> usize {
    96
}

impl Default for GenericitySection {
    fn default() -> Self {
        let run = |law, range, kappa_max| LawRun { law, range, kappa_max };
        Self {
            runs: vec![
                run(PotentialLaw::GaussianFourier { s: 2.0, amplitude: 0.01, modes: 8 }, 12, None),
                run(PotentialLaw::GaussianCosine { s: 2.0, amplitude: 0.01, modes: 6 }, 12, Some(3.0)),
                run(PotentialLaw::UniformConvolution { s: 2.0, amplitude: 0.002 }, 4, None),
            ],
            trials: 50,
            order: 3,
            rho: 0.05,
            galerkin_dim: 96,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormSection {
    /// Must be of kind `klein-gordon`.
    pub model: ModelSpec,
    pub normal_form: NormalFormConfig,
    #[serde(default = "twenty")]
    pub samples: usize,
    #[serde(default = "two")]
    pub jacobians: usize,
    #[serde(default = "four")]
    pub halvings: usize,
    #[serde(default = "four")]
    pub directions: usize,
}

fn twenty() -> usize {
    20
}
fn two() -> usize {
    2
}
fn four() -> usize {
    4
}

impl Default for NormalFormSection {
    fn default() -> Self {
        Self {
            model: ModelSpec::kg_quadratic(1.0, 1.0, 12),
            normal_form: NormalFormConfig::new(3, 5, 4.0, 0.5, 1.0, 0.5),
            samples: 20,
            jacobians: 2,
            halvings: 4,
            directions: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub model: ModelSpec,
    /// `h^s` norm of the initial datum.
    pub eps: f64,
    /// Horizon `ε^{-(r-p)}` unless `t_end` is set.
    pub r: usize,
    pub p: usize,
    #[serde(default)]
    pub t_end: Option<f64>,
    pub dt: f64,
    #[serde(default = "ten")]
    pub stride: usize,
    #[serde(default)]
    pub s: Option<f64>,
    /// Initial data on modes with `⟨n⟩` at most this.
    #[serde(default = "unbounded")]
    pub support: f64,
    #[serde(default = "yes")]
    pub forcing: bool,
    /// Drifts are also reported divided by `⟨n⟩^b ε^p`.
    #[serde(default)]
    pub b: f64,
}

fn ten() -> usize {
    10
}
fn unbounded() -> f64 {
    f64::INFINITY
}
fn yes() -> bool {
    true
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            model: ModelSpec::kg_quadratic(1.0, 1.0, 12),
            eps: 0.05,
            r: 5,
            p: 3,
            t_end: None,
            dt: 0.02,
            stride: 10,
            s: None,
            support: 4.5,
            forcing: true,
            b: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub model: ModelSpec,
    pub options: ScalingOptions,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            model: ModelSpec::kg_quadratic(1.0, 1.0, 12),
            options: ScalingOptions {
                eps: vec![0.1, 0.05, 0.025],
                r: 5,
                p: 3,
                seeds: vec![1, 2],
                dt: 0.02,
                t_cap: f64::INFINITY,
                track: 4.5,
                support: 4.5,
                s: None,
                stride: 10,
                compare_doubled: true,
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {}

/// A whole experiment file. Only the section of the invoked command is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance: Option<ResonanceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genericity: Option<GenericitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_form: Option<NormalFormSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Copy holding only `command`'s section, without the output path.
    fn resolved_for(&self, command: &str) -> Self {
        let mut r = Self { seed: self.seed, threads: self.threads, ..Self::default() };
        match command {
            "spectrum" => r.spectrum = self.spectrum.clone(),
            "resonance" => r.resonance = self.resonance.clone(),
            "bootstrap" => r.bootstrap = self.bootstrap.clone(),
            "genericity" => r.genericity = self.genericity.clone(),
            "normal-form" => r.normal_form = self.normal_form.clone(),
            "simulate" => r.simulate = self.simulate.clone(),
            "scaling" => r.scaling = self.scaling.clone(),
            _ => r.verify = self.verify.clone(),
        }
        r
    }
}

fn parse_potential(text: &str) -> Result<Potential, CliError> {
    let bad = || CliError::Config(format!("cannot parse potential '{text}'"));
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    match kind {
        "zero" => Ok(Potential::zero()),
        "constant" => Ok(Potential::constant(num(arg)?)),
        "cosine" => Ok(Potential::cosine(arg.trim().parse().map_err(|_| bad())?)),
        "fourier" => Ok(Potential::Fourier { cos: arg.split(',').map(num).collect::<Result<_, _>>()?, sin: vec![] }),
        _ => Err(bad()),
    }
}

fn model_from_flag(name: &str, mass: f64, modes: usize) -> Result<ModelSpec, CliError> {
    use crate::dynamics::NlsBoundary;
    Ok(match name {
        "kg" => ModelSpec::kg_quadratic(mass, 1.0, modes),
        "nls-dirichlet" => ModelSpec::nls_cubic(NlsBoundary::Dirichlet, Potential::zero(), 1.0, modes),
        "nls-periodic" => ModelSpec::nls_cubic(NlsBoundary::Periodic, Potential::zero(), 1.0, modes),
        "nls2d" => ModelSpec::Nls2d { vhat: vec![], modes, nonlinearity: vec![crate::dynamics::LadderTerm::constant(1, 1.0)] },
        m => return Err(CliError::Config(format!("unknown model '{m}'"))),
    })
}

fn set_kg_mass(spec: &mut ModelSpec, m: f64) -> Result<(), CliError> {
    match spec {
        ModelSpec::KleinGordon { mass, .. } => {
            *mass = m;
            Ok(())
        }
        _ => Err(CliError::Config("--mass applies to Klein-Gordon models only".into())),
    }
}

/// Merges flags into the config section of the command.
fn apply_flags(cfg: &mut ExperimentConfig, cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Spectrum { potential, boundary, n_max, galerkin_dim } => {
            let s = cfg.spectrum.get_or_insert_with(Default::default);
            if let Some(p) = potential {
                s.potential = parse_potential(p)?;
            }
            if let Some(b) = boundary {
                s.boundary = match b.as_str() {
                    "dirichlet" => Boundary::Dirichlet,
                    "neumann" => Boundary::Neumann,
                    b => return Err(CliError::Config(format!("unknown boundary '{b}'"))),
                };
            }
            s.n_max = n_max.unwrap_or(s.n_max);
            s.galerkin_dim = galerkin_dim.unwrap_or(s.galerkin_dim);
        }
        Command::Resonance { model, mass, order, range, kappa_max, .. } => {
            let s = cfg.resonance.get_or_insert_with(Default::default);
            match model.as_deref() {
                None => {}
                Some("kg") => {
                    if !matches!(s.family, FamilySpec::KleinGordon { .. }) {
                        s.family = FamilySpec::KleinGordon { mass: 1.0, range: 20 };
                    }
                }
                Some(m) => return Err(CliError::Config(format!("unknown family '{m}'"))),
            }
            if let Some(m) = mass {
                match &mut s.family {
                    FamilySpec::KleinGordon { mass, .. } => *mass = *m,
                    _ => return Err(CliError::Config("--mass applies to Klein-Gordon families only".into())),
                }
            }
            if let Some(r) = range {
                s.family.set_range(*r);
            }
            s.order = order.unwrap_or(s.order);
            if kappa_max.is_some() {
                s.kappa_max = *kappa_max;
            }
        }
        Command::Bootstrap { mass, order, range } => {
            let s = cfg.bootstrap.get_or_insert_with(Default::default);
            s.mass = mass.unwrap_or(s.mass);
            s.order = order.unwrap_or(s.order);
            s.range = range.unwrap_or(s.range);
        }
        Command::Genericity { trials, order, range } => {
            let s = cfg.genericity.get_or_insert_with(Default::default);
            s.trials = trials.unwrap_or(s.trials);
            s.order = order.unwrap_or(s.order);
            if let Some(r) = range {
                s.runs.iter_mut().for_each(|run| run.range = *r);
            }
        }
        Command::NormalForm { mass, modes, r, n_cut } => {
            let s = cfg.normal_form.get_or_insert_with(Default::default);
            if let Some(m) = mass {
                set_kg_mass(&mut s.model, *m)?;
            }
            if let Some(k) = modes {
                s.model = s.model.with_modes(*k);
            }
            s.normal_form.r = r.unwrap_or(s.normal_form.r);
            s.normal_form.n_cut = n_cut.unwrap_or(s.normal_form.n_cut);
        }
        Command::Simulate { model, mass, modes, eps, r, dt, t_end } => {
            let s = cfg.simulate.get_or_insert_with(Default::default);
            if let Some(m) = model {
                s.model = model_from_flag(m, mass.unwrap_or(1.0), modes.unwrap_or(s.model.modes()))?;
            } else {
                if let Some(m) = mass {
                    set_kg_mass(&mut s.model, *m)?;
                }
                if let Some(k) = modes {
                    s.model = s.model.with_modes(*k);
                }
            }
            s.eps = eps.unwrap_or(s.eps);
            s.r = r.unwrap_or(s.r);
            s.dt = dt.unwrap_or(s.dt);
            if t_end.is_some() {
                s.t_end = *t_end;
            }
        }
        Command::Scaling { dt, eps } => {
            let s = cfg.scaling.get_or_insert_with(Default::default);
            s.options.dt = dt.unwrap_or(s.options.dt);
            if let Some(e) = eps {
                s.options.eps = e.clone();
            }
        }
        Command::Verify => {
            cfg.verify.get_or_insert_with(Default::default);
        }
    }
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out = None;
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(dir) = &out {
                let detail = match &e {
                    CliError::Domain { detail, .. } => detail.clone(),
                    _ => serde_json::Value::Null,
                };
                let kind = if e.exit_code() == 2 { "config" } else { "domain" };
                let _ = write_json(dir, "error.json", &json!({ "kind": kind, "message": e.to_string(), "detail": detail }));
            }
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out_slot: &mut Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        cfg.threads = Some(t);
    }
    apply_flags(&mut cfg, &cli.command)?;
    let name = cli.command.name();
    let out = match (&cli.out, &cfg.output) {
        (Some(o), _) | (None, Some(o)) => o.clone(),
        (None, None) => std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from).join(name),
    };
    std::fs::create_dir_all(&out)?;
    *out_slot = Some(out.clone());
    let resolved = toml::to_string(&cfg.resolved_for(name)).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(out.join("config.resolved.toml"), resolved)?;
    std::fs::write(out.join("VERSION"), format!("{VERSION}\n"))?;
    let threads = cfg.threads.unwrap_or(1);
    match &cli.command {
        Command::Spectrum { .. } => spectrum(cfg.spectrum.as_ref().expect("filled by flags"), &out),
        Command::Resonance { resume, .. } => {
            resonance(cfg.resonance.as_ref().expect("filled by flags"), resume.as_deref(), &out)
        }
        Command::Bootstrap { .. } => bootstrap(cfg.bootstrap.as_ref().expect("filled by flags"), &out),
        Command::Genericity { .. } => genericity(cfg.genericity.as_ref().expect("filled by flags"), cfg.seed, threads, &out),
        Command::NormalForm { .. } => normal_form(cfg.normal_form.as_ref().expect("filled by flags"), cfg.seed, &out),
        Command::Simulate { .. } => simulate(cfg.simulate.as_ref().expect("filled by flags"), cfg.seed, &out),
        Command::Scaling { .. } => scaling(cfg.scaling.as_ref().expect("filled by flags"), threads, &out),
        Command::Verify => verify(cfg.seed, &out),
    }
}

fn spectrum(s: &SpectrumSection, out: &Path) -> Result<(), CliError> {
    let sys = solve(s.boundary, &s.potential, &GalerkinOptions::new(s.n_max, s.galerkin_dim))?;
    let mean = s.potential.mean();
    let rows: Vec<_> = spectrum_rows(&sys)?.into_iter().filter(|r| r.index <= s.n_max as i32).collect();
    let mut csv = String::from("n,lambda,shifted,residual\n");
    for r in &rows {
        let shifted = r.lambda - (r.index as f64).powi(2) - mean;
        csv.push_str(&format!("{},{},{},{}\n", r.index, fmt17(r.lambda), fmt17(shifted), fmt17(r.residual)));
    }
    std::fs::write(out.join("spectrum.csv"), csv)?;
    write_json(out, "spectrum.json", &rows)
}

fn resonance(s: &ResonanceSection, resume: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let family = s.family.build()?;
    let opts = VerifyOptions {
        r: s.order,
        kappa_max: s.kappa_max,
        max_records: s.max_records,
        checkpoint_every: s.checkpoint_every,
    };
    let state = match resume {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str::<CertificateState>(&text).map_err(|e| CliError::Config(e.to_string()))?)
        }
        None => None,
    };
    let checkpoint = out.join("checkpoint.json");
    let mut save = |st: &CertificateState| -> Result<(), ResonanceError> {
        let text = serde_json::to_string(st).map_err(|e| ResonanceError::Checkpoint(e.to_string()))?;
        std::fs::write(&checkpoint, text).map_err(|e| ResonanceError::Checkpoint(e.to_string()))
    };
    let cert = verify_strong_resumable(&family, &opts, state, Some(&mut save))?;
    write_json(out, "certificate.json", &cert)?;
    if cert.is_resonant() {
        return Err(CliError::domain(
            format!("{} exact resonances", cert.violations_total),
            json!({ "violations": cert.violations }),
        ));
    }
    Ok(())
}

fn bootstrap(s: &BootstrapSection, out: &Path) -> Result<(), CliError> {
    let family = FrequencyFamily::klein_gordon(s.mass, s.range)?;
    let weak = measure_weak(&family, s.order, s.mu)?;
    let acc = fit_accumulation(&family, s.mu)?;
    let cert = bootstrap_strong(&family, &weak, &acc, s.order)?;
    write_json(out, "bootstrap.json", &cert)?;
    if !cert.certified() {
        return Err(CliError::domain(
            format!("{} scanned queries violate the bound", cert.failures),
            json!({ "failures": cert.failures, "min_ratio": cert.min_ratio }),
        ));
    }
    Ok(())
}

fn genericity(s: &GenericitySection, seed: u64, threads: usize, out: &Path) -> Result<(), CliError> {
    let reports = parallel_map(&s.runs, threads, |run| {
        let opts = GenericityOptions {
            trials: s.trials,
            r: s.order,
            range: run.range,
            kappa_max: run.kappa_max,
            rho: s.rho,
            seed,
            galerkin_dim: s.galerkin_dim,
        };
        genericity_monte_carlo(&run.law, &opts)
    });
    let mut resonant = vec![];
    for r in reports {
        let r = r?;
        write_json(out, &format!("genericity_{}.json", r.law.name()), &r)?;
        if r.total_resonances > 0 {
            resonant.push(json!({ "law": r.law.name(), "resonances": r.total_resonances }));
        }
    }
    if !resonant.is_empty() {
        return Err(CliError::domain("sampled spectra with resonances", json!(resonant)));
    }
    Ok(())
}

fn normal_form(s: &NormalFormSection, seed: u64, out: &Path) -> Result<(), CliError> {
    let ModelSpec::KleinGordon { mass, modes, nonlinearity, grid } = &s.model else {
        return Err(CliError::Config("normal forms need a klein-gordon model".into()));
    };
    s.model.validate()?;
    let kg = KleinGordon::new(*mass, *modes, nonlinearity, *grid)?;
    let p = kg.perturbation()?;
    let mut cfg = s.normal_form.clone();
    cfg.seed = seed;
    let family = crate::dynamics::Model::family(&kg).clone();
    let nf = birkhoff_normal_form(&family, &p, &cfg)?;
    nf.write_dir(out)?;
    let eps0 = nf.certificate.epsilon0;
    let conj = verify_conjugacy(&nf, s.samples, eps0 / 2.0, s.jacobians, seed)?;
    write_json(out, "conjugacy.json", &conj)?;
    let radii: Vec<f64> = (0..=s.halvings).map(|k| eps0 / 2.0 / 2f64.powi(k as i32)).collect();
    let sc = remainder_scaling(&nf, &radii, s.directions, seed)?;
    write_json(out, "remainder_scaling.json", &sc)?;
    if !conj.failures.is_empty() {
        return Err(CliError::domain("conjugacy check failed", json!({ "failures": conj.failures })));
    }
    Ok(())
}

fn simulate(s: &SimulateSection, seed: u64, out: &Path) -> Result<(), CliError> {
    if s.r <= s.p || !(s.eps > 0.0) || !(s.dt > 0.0) || s.stride == 0 {
        return Err(CliError::Config("need r > p, eps > 0, dt > 0 and stride ≥ 1".into()));
    }
    let model = s.model.build()?;
    let sreg = s.s.unwrap_or_else(|| s.model.default_s());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = random_state(&mut rng, model.family(), sreg, s.eps, s.support)?;
    let t_end = s.t_end.unwrap_or_else(|| s.eps.powi(-((s.r - s.p) as i32)));
    let opts = IntegrateOptions { stride: s.stride, s: sreg, forcing: s.forcing };
    let (mut trace, err) = match integrate(model.as_ref(), &u0, t_end, s.dt, &opts) {
        Ok((t, _)) => (t, None),
        Err(DynamicsError::Aborted { time, norm, initial, trace }) => {
            let e = CliError::domain(
                format!("integration aborted at t = {time}"),
                json!({ "time": time, "norm": norm, "initial_norm": initial }),
            );
            (*trace, Some(e))
        }
        Err(e) => return Err(e.into()),
    };
    trace.meta.eps = Some(s.eps);
    trace.meta.seed = Some(seed);
    trace.write_dir(out, s.b, s.p as f64)?;
    err.map_or(Ok(()), Err)
}

fn scaling(s: &ScalingSection, threads: usize, out: &Path) -> Result<(), CliError> {
    let rep = scaling_experiment_parallel(&s.model, &s.options, threads)?;
    let mut csv = String::from("eps,seed,t_end,drift,doubled_drift,aborted\n");
    for c in &rep.cells {
        let d = c.doubled_drift.map_or(String::new(), fmt17);
        csv.push_str(&format!("{},{},{},{},{},{}\n", fmt17(c.eps), c.seed, fmt17(c.t_end), fmt17(c.drift), d, c.aborted));
    }
    std::fs::write(out.join("scaling.csv"), csv)?;
    write_json(out, "scaling.json", &rep)
}

fn verify(seed: u64, out: &Path) -> Result<(), CliError> {
    let rep = run_selfchecks(seed);
    write_json(out, "verify.json", &rep)?;
    if !rep.all_pass() {
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.pass).cloned().collect();
        return Err(CliError::domain("self-checks failed", serde_json::to_value(failed)?));
    }
    Ok(())
}
