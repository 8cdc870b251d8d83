//! Flow-segment transforms `τ⁰, τ¹`, the numeric remainder and its checks.

use super::{random_state_on_sphere, NormalFormError, NormalFormOutput};
use crate::hamilton::{flow, flow_jacobian, flow_with_tangents};
use crate::lattice::hs_norm_unchecked;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One flow `Φ^t_χ` with `χ` the generator at `index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub generator: usize,
    pub time: f64,
}

impl NormalFormOutput {
    /// Application order of `τ¹ = Φ¹_{χ_p} ∘ ⋯ ∘ Φ¹_{χ_{r-1}}`: last generator first.
    pub fn tau1_segments(&self) -> Vec<Segment> {
        (0..self.generators.len()).rev().map(|g| Segment { generator: g, time: 1.0 }).collect()
    }

    /// Application order of `τ⁰ = Φ^{-1}_{χ_{r-1}} ∘ ⋯ ∘ Φ^{-1}_{χ_p}`.
    pub fn tau0_segments(&self) -> Vec<Segment> {
        (0..self.generators.len()).map(|g| Segment { generator: g, time: -1.0 }).collect()
    }

    fn apply(&self, segs: &[Segment], u: &[Complex64]) -> Result<Vec<Complex64>, NormalFormError> {
        let opts = self.config.flow_options();
        let mut v = u.to_vec();
        for s in segs {
            let chi = &self.generators[s.generator];
            if !chi.is_zero() {
                v = flow(chi, &v, s.time, &opts)?;
            }
        }
        Ok(v)
    }

    pub fn tau1(&self, u: &[Complex64]) -> Result<Vec<Complex64>, NormalFormError> {
        self.apply(&self.tau1_segments(), u)
    }

    pub fn tau0(&self, u: &[Complex64]) -> Result<Vec<Complex64>, NormalFormError> {
        self.apply(&self.tau0_segments(), u)
    }

    /// Real Jacobian of `τ^{(σ)}` at `u` in `(Re, Im)` coordinates.
    pub fn tau_jacobian(&self, sigma: u8, u: &[Complex64]) -> Result<DMatrix<f64>, NormalFormError> {
        let segs = if sigma == 0 { self.tau0_segments() } else { self.tau1_segments() };
        let opts = self.config.flow_options();
        let n = u.len();
        let mut j = DMatrix::identity(2 * n, 2 * n);
        let mut v = u.to_vec();
        for s in segs {
            let chi = &self.generators[s.generator];
            if chi.is_zero() {
                continue;
            }
            let (end, m) = flow_jacobian(chi, &v, s.time, &opts)?;
            j = m * j;
            v = end;
        }
        Ok(j)
    }

    /// `(Z₂ + P)(v)`.
    pub fn hamiltonian(&self, v: &[Complex64]) -> Result<f64, NormalFormError> {
        Ok(self.z2.evaluate(v) + self.perturbation.evaluate(v)?)
    }

    /// `Z₂(u) + Q_res(u)`.
    pub fn normal_form(&self, u: &[Complex64]) -> Result<f64, NormalFormError> {
        Ok(self.z2.evaluate(u) + self.q_res.evaluate(u)?)
    }

    /// `R(u) = (Z₂ + P)(τ¹u) - Z₂(u) - Q_res(u)`.
    pub fn remainder(&self, u: &[Complex64]) -> Result<f64, NormalFormError> {
        let v = self.tau1(u)?;
        Ok(self.hamiltonian(&v)? - self.normal_form(u)?)
    }

    /// `dτ¹(u)^T g` for `g` at `τ¹(u)`. Since `τ¹` is symplectic,
    /// `dτ¹(u)^T = i ∘ d(τ¹)^{-1}(τ¹u) ∘ (-i)`, which needs one backward tangent.
    pub fn pullback_gradient(&self, u: &[Complex64], g: &[Complex64]) -> Result<Vec<Complex64>, NormalFormError> {
        let opts = self.config.flow_options();
        let i = Complex64::i();
        let mut v = self.tau1(u)?;
        let mut w: Vec<Complex64> = g.iter().map(|z| -i * z).collect();
        for s in self.tau0_segments() {
            let chi = &self.generators[s.generator];
            if chi.is_zero() {
                continue;
            }
            let (end, mut tans) = flow_with_tangents(chi, &v, &[w], s.time, &opts)?;
            v = end;
            w = tans.pop().expect("one tangent");
        }
        Ok(w.into_iter().map(|z| i * z).collect())
    }

    /// `∇R(u)`.
    pub fn remainder_gradient(&self, u: &[Complex64]) -> Result<Vec<Complex64>, NormalFormError> {
        let v = self.tau1(u)?;
        let mut gh = self.z2.gradient(&v);
        for (a, b) in gh.iter_mut().zip(self.perturbation.gradient(&v)?) {
            *a += b;
        }
        let mut g = self.pullback_gradient(u, &gh)?;
        let gz = self.z2.gradient(u);
        let gq = self.q_res.gradient(u)?;
        for ((a, b), c) in g.iter_mut().zip(gz).zip(gq) {
            *a -= b + c;
        }
        Ok(g)
    }
}

/// Operator norm on `h^s` of a real `2n × 2n` matrix acting on `(Re, Im)`.
fn weighted_operator_norm(j: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let n = weights.len();
    let mut m = j.clone();
    for r in 0..2 * n {
        for c in 0..2 * n {
            m[(r, c)] *= weights[r % n] / weights[c % n];
        }
    }
    m.singular_values().max()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacySample {
    pub norm: f64,
    /// `‖τ¹(τ⁰u) - u‖ / ‖u‖` in `h^s`.
    pub round_trip: f64,
    /// `‖τ^{(σ)}u - u‖ / ((‖u‖/ε₀)^{p-2} ‖u‖)` for `σ = 0, 1`; at most 1 when the bound holds.
    pub closeness: [f64; 2],
    /// `|(Z₂+P)(τ¹u) - Z₂(u) - Q_res(u) - R(u)|` relative to `|(Z₂+P)(τ¹u)|`.
    pub identity: f64,
    /// `|R(u) - tail(u)| / |R(u)|`; small when the tail ledger captures the remainder.
    pub tail_mismatch: Option<f64>,
    /// `‖dτ^{(σ)}(u)‖` in `L(h^s)` and `L(h^{-s})`, when computed.
    pub dtau_norms: Option<[[f64; 2]; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub radius: f64,
    pub epsilon0: f64,
    pub flow_rtol: f64,
    pub samples: Vec<ConjugacySample>,
    pub max_round_trip: f64,
    pub max_identity: f64,
    pub max_closeness: f64,
    pub max_dtau: Option<f64>,
    /// `2^{r-p}`.
    pub dtau_bound: f64,
    /// Round trip within `10·rtol`, closeness and `dτ` bounds hold, identity at rounding level.
    pub failures: Vec<String>,
}

impl ConjugacyReport {
    /// Largest of the round-trip and identity residuals.
    pub fn residual(&self) -> f64 {
        self.max_round_trip.max(self.max_identity)
    }
}

/// Samples `samples` states with `‖u‖_{h^s} = radius`; the first `jacobians`
/// of them also get operator norms of `dτ`.
pub fn verify_conjugacy(
    out: &NormalFormOutput,
    samples: usize,
    radius: f64,
    jacobians: usize,
    seed: u64,
) -> Result<ConjugacyReport, NormalFormError> {
    let cfg = &out.config;
    let l = out.family.lattice();
    let eps0 = out.certificate.epsilon0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wp: Vec<f64> = l.brackets().iter().map(|b| b.powf(cfg.s)).collect();
    let wm: Vec<f64> = wp.iter().map(|w| 1.0 / w).collect();
    let mut rows = vec![];
    let mut failures = vec![];
    let dtau_bound = 2f64.powi((cfg.effective_r() - cfg.p) as i32);
    for k in 0..samples {
        let u = random_state_on_sphere(&mut rng, &out.family, cfg.s, radius);
        let norm = hs_norm_unchecked(l, &u, cfg.s);
        let t0 = out.tau0(&u)?;
        let t1 = out.tau1(&u)?;
        let back = out.tau1(&t0)?;
        let diff = |a: &[Complex64], b: &[Complex64]| {
            let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            hs_norm_unchecked(l, &d, cfg.s)
        };
        let scale = if norm > 0.0 { norm } else { 1.0 };
        let round_trip = diff(&back, &u) / scale;
        let bound = (norm / eps0).powi(cfg.p as i32 - 2) * norm;
        let ratio = |d: f64| if bound > 0.0 { d / bound } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        let closeness = [ratio(diff(&t0, &u)), ratio(diff(&t1, &u))];
        let h = out.hamiltonian(&t1)?;
        let rem = h - out.normal_form(&u)?;
        let recomposed = out.normal_form(&u)? + rem;
        let identity = (h - recomposed).abs() / h.abs().max(f64::MIN_POSITIVE);
        let tail_mismatch = if out.tail.is_zero() || rem == 0.0 {
            None
        } else {
            Some((rem - out.tail.evaluate(&u)?).abs() / rem.abs())
        };
        let dtau_norms = if k < jacobians {
            let mut norms = [[0.0; 2]; 2];
            for sigma in 0..2u8 {
                let j = out.tau_jacobian(sigma, &u)?;
                norms[sigma as usize] = [weighted_operator_norm(&j, &wp), weighted_operator_norm(&j, &wm)];
            }
            Some(norms)
        } else {
            None
        };
        if round_trip > 10.0 * cfg.flow_rtol {
            failures.push(format!("sample {k}: round trip {round_trip:.3e}"));
        }
        if closeness.iter().any(|c| *c > 1.0) {
            failures.push(format!("sample {k}: closeness ratios {closeness:?}"));
        }
        if identity > 1e-14 {
            failures.push(format!("sample {k}: identity residual {identity:.3e}"));
        }
        if let Some(n) = dtau_norms {
            if n.iter().flatten().any(|x| *x > dtau_bound) {
                failures.push(format!("sample {k}: dτ norms {n:?}"));
            }
        }
        rows.push(ConjugacySample { norm, round_trip, closeness, identity, tail_mismatch, dtau_norms });
    }
    let maxf = |f: &dyn Fn(&ConjugacySample) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let max_dtau = rows.iter().filter_map(|r| r.dtau_norms).flat_map(|n| n.into_iter().flatten()).reduce(f64::max);
    Ok(ConjugacyReport {
        radius,
        epsilon0: eps0,
        flow_rtol: cfg.flow_rtol,
        max_round_trip: maxf(&|r| r.round_trip),
        max_identity: maxf(&|r| r.identity),
        max_closeness: maxf(&|r| r.closeness[0].max(r.closeness[1])),
        max_dtau,
        dtau_bound,
        samples: rows,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub radius: f64,
    /// Largest `‖∇R(u)‖_{h^s}` over the sampled directions.
    pub gradient_norm: f64,
    /// Largest relative gap between `(∇R, d)` and a central difference of `R` along `d`.
    pub fd_discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log ‖∇R‖` against `log radius`; `None` when `R ≡ 0`.
    pub slope: Option<f64>,
    pub exact_zero: bool,
    /// `r - 1`.
    pub target: f64,
}

/// Fits the growth exponent of `‖∇R‖_{h^s}` over `radii`, using the same
/// `directions` random unit states at every radius.
pub fn remainder_scaling(
    out: &NormalFormOutput,
    radii: &[f64],
    directions: usize,
    seed: u64,
) -> Result<ScalingReport, NormalFormError> {
    let cfg = &out.config;
    let l = out.family.lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<Complex64>> = (0..directions).map(|_| random_state_on_sphere(&mut rng, &out.family, cfg.s, 1.0)).collect();
    let probes: Vec<Vec<Complex64>> = (0..directions).map(|_| random_state_on_sphere(&mut rng, &out.family, 0.0, 1.0)).collect();
    let mut rows = vec![];
    for &rho in radii {
        let mut best: f64 = 0.0;
        let mut fd: f64 = 0.0;
        for (d, e) in dirs.iter().zip(&probes) {
            let u: Vec<Complex64> = d.iter().map(|z| z * rho).collect();
            let g = out.remainder_gradient(&u)?;
            best = best.max(hs_norm_unchecked(l, &g, cfg.s));
            let h = 1e-2 * rho;
            let shift = |sgn: f64| -> Vec<Complex64> { u.iter().zip(e).map(|(a, b)| a + b * (sgn * h)).collect() };
            let num = (out.remainder(&shift(1.0))? - out.remainder(&shift(-1.0))?) / (2.0 * h);
            let ana = crate::lattice::real_dot(&g, e);
            if ana != 0.0 || num != 0.0 {
                fd = fd.max((num - ana).abs() / ana.abs().max(num.abs()));
            }
        }
        rows.push(ScalingRow { radius: rho, gradient_norm: best, fd_discrepancy: fd });
    }
    let exact_zero = rows.iter().all(|r| r.gradient_norm == 0.0);
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.gradient_norm > 0.0).map(|r| (r.radius.ln(), r.gradient_norm.ln())).collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(ScalingReport { rows, slope, exact_zero, target: (cfg.effective_r() - 1) as f64 })
}
