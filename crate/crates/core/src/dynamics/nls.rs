//! NLS in a collocation eigenbasis (1D) and on the Fourier lattice of `𝕋²`.
//!
//! The 1D grid carries as many points as modes, so the map from
//! eigen-coordinates to grid values is a scaled orthogonal matrix and both
//! split substeps are exact `ℓ²` isometries.

use super::{DynamicsError, Ladder, LadderTerm, Model};
use crate::lattice::{Lattice, ModeIndex};
use crate::resonance::FrequencyFamily;
use crate::spectra::Potential;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlsBoundary {
    Dirichlet,
    Periodic,
}

/// One real orthonormal trigonometric basis function.
#[derive(Clone, Copy, Debug)]
enum Trig {
    Sin(usize),
    Cos(usize),
}

impl Trig {
    /// Continuum function, unit in `L²` of the domain.
    fn eval(self, x: f64, len: f64) -> f64 {
        match self {
            Trig::Sin(n) => (2.0 / len).sqrt() * (n as f64 * x).sin(),
            Trig::Cos(0) => (1.0 / len).sqrt(),
            Trig::Cos(n) => (2.0 / len).sqrt() * (n as f64 * x).cos(),
        }
    }

    fn freq(self) -> usize {
        match self {
            Trig::Sin(n) | Trig::Cos(n) => n,
        }
    }
}

/// One-dimensional NLS `i∂_t u = -∂²u + Vu + g(x, |u|²) u`.
///
/// The linear operator is collocated on the grid and diagonalized; with even
/// `V` on the circle the sine and cosine blocks decouple and are labelled
/// `1, 2, …` and `0, -1, -2, …` respectively.
#[derive(Clone, Debug)]
pub struct Nls1d {
    boundary: NlsBoundary,
    family: FrequencyFamily,
    terms_linear: bool,
    len: f64,
    ladder: Ladder,
    /// Grid values from eigen-coordinates: `ψ = T v`, with `TᵀT = (M/L) I`.
    t: DMatrix<f64>,
    scale: f64,
    /// Trigonometric coefficients from eigen-coordinates.
    q: DMatrix<f64>,
    basis: Vec<Trig>,
    fine: FineGrid,
}

#[derive(Clone, Debug)]
struct FineGrid {
    ladder: Ladder,
    weight: f64,
    low: DMatrix<f64>,
    high: DMatrix<f64>,
    high_freq: Vec<usize>,
}

fn grid(boundary: NlsBoundary, m: usize) -> (Vec<f64>, f64) {
    match boundary {
        NlsBoundary::Dirichlet => ((0..m).map(|j| (j as f64 + 0.5) * PI / m as f64).collect(), PI),
        NlsBoundary::Periodic => ((0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect(), 2.0 * PI),
    }
}

fn basis(boundary: NlsBoundary, k: usize) -> Vec<Trig> {
    match boundary {
        NlsBoundary::Dirichlet => (1..=k).map(Trig::Sin).collect(),
        NlsBoundary::Periodic => (1..=k).map(Trig::Sin).chain((0..=k).map(Trig::Cos)).collect(),
    }
}

/// `V` at `x`, reflecting into `[0, π]` on the circle (valid for even `V`).
fn potential_at(v: &Potential, boundary: NlsBoundary, x: f64) -> f64 {
    match boundary {
        NlsBoundary::Dirichlet => v.eval(x),
        NlsBoundary::Periodic => v.eval(x.min(2.0 * PI - x)),
    }
}

fn table(xs: &[f64], fns: &[Trig], len: f64) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), fns.len(), |j, c| fns[c].eval(xs[j], len))
}

impl Nls1d {
    pub fn new(boundary: NlsBoundary, v: &Potential, k: usize, terms: &[LadderTerm]) -> Result<Self, DynamicsError> {
        if k == 0 {
            return Err(DynamicsError::Invalid("at least one mode is required".into()));
        }
        let fns = basis(boundary, k);
        let m = fns.len();
        let (xs, len) = grid(boundary, m);
        // orthonormal collocation matrix B = sqrt(L/M) · table; the Dirichlet Nyquist column is rescaled
        let mut b = table(&xs, &fns, len) * (len / m as f64).sqrt();
        if boundary == NlsBoundary::Dirichlet {
            let c = b.column(m - 1).norm();
            b.column_mut(m - 1).scale_mut(1.0 / c);
        }
        let vx: Vec<f64> = xs.iter().map(|&x| potential_at(v, boundary, x)).collect();
        let mut a = b.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vx)) * &b;
        for (i, f) in fns.iter().enumerate() {
            a[(i, i)] += (f.freq() * f.freq()) as f64;
        }
        let blocks: Vec<(Vec<usize>, bool)> = match boundary {
            NlsBoundary::Dirichlet => vec![((0..k).collect(), true)],
            NlsBoundary::Periodic => vec![((0..k).collect(), true), ((k..m).collect(), false)],
        };
        let mut q = DMatrix::zeros(m, m);
        let mut labels = vec![];
        let mut lambdas = vec![];
        let mut col = 0;
        for (idx, positive) in blocks {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])]);
            let eig = SymmetricEigen::new(sub);
            let mut order: Vec<usize> = (0..idx.len()).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
            for (rank, &e) in order.iter().enumerate() {
                let mut vcol = eig.eigenvectors.column(e).into_owned();
                // sign convention: first nonzero entry positive
                if let Some(first) = vcol.iter().find(|x| x.abs() > 1e-12) {
                    if *first < 0.0 {
                        vcol.neg_mut();
                    }
                }
                for (r, &i) in idx.iter().enumerate() {
                    q[(i, col)] = vcol[r];
                }
                labels.push(if positive { rank as i32 + 1 } else { -(rank as i32) });
                lambdas.push(eig.eigenvalues[e]);
                col += 1;
            }
        }
        // lattice order is sorted by label; permute the columns accordingly
        let lattice = Arc::new(Lattice::from_modes(labels.iter().map(|&n| ModeIndex::d1(n)).collect())?);
        let mut qs = DMatrix::zeros(m, m);
        let mut omega = vec![0.0; m];
        for (c, &n) in labels.iter().enumerate() {
            let id = lattice.require(&ModeIndex::d1(n))?;
            qs.set_column(id, &q.column(c));
            omega[id] = lambdas[c];
        }
        let scale = (m as f64 / len).sqrt();
        let t = &b * &qs * scale;
        let name = match boundary {
            NlsBoundary::Dirichlet => "nls-dirichlet",
            NlsBoundary::Periodic => "nls-periodic",
        };
        let family = FrequencyFamily::new(name, lattice, omega)?;
        // fine grid: 2M points, forcing on trigonometric frequencies K+1..=2K
        let (fxs, _) = grid(boundary, 2 * m);
        let high_fns: Vec<Trig> = match boundary {
            NlsBoundary::Dirichlet => (k + 1..=2 * k).map(Trig::Sin).collect(),
            NlsBoundary::Periodic => (k + 1..=2 * k).flat_map(|n| [Trig::Sin(n), Trig::Cos(n)]).collect(),
        };
        let fine = FineGrid {
            ladder: Ladder::sample(terms, &fxs),
            weight: len / (2 * m) as f64,
            low: table(&fxs, &fns, len),
            high: table(&fxs, &high_fns, len),
            high_freq: high_fns.iter().map(|f| f.freq()).collect(),
        };
        Ok(Self {
            boundary,
            family,
            terms_linear: terms.iter().all(|t| t.value == 0.0),
            len,
            ladder: Ladder::sample(terms, &xs),
            t,
            scale,
            q: qs,
            basis: fns,
            fine,
        })
    }

    pub fn boundary(&self) -> NlsBoundary {
        self.boundary
    }

    /// Grid values `ψ(x_j)`.
    pub fn to_grid(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (re, im) = split(v);
        let (a, b) = (&self.t * re, &self.t * im);
        a.iter().zip(b.iter()).map(|(x, y)| Complex64::new(*x, *y)).collect()
    }

    pub fn from_grid(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let (re, im) = split(psi);
        let s2 = self.scale * self.scale;
        let (a, b) = (self.t.tr_mul(&re), self.t.tr_mul(&im));
        a.iter().zip(b.iter()).map(|(x, y)| Complex64::new(x / s2, y / s2)).collect()
    }

    /// Trigonometric-basis coefficients of the state.
    fn trig_coefficients(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (re, im) = split(v);
        let (a, b) = (&self.q * re, &self.q * im);
        a.iter().zip(b.iter()).map(|(x, y)| Complex64::new(*x, *y)).collect()
    }
}

fn split(v: &[Complex64]) -> (nalgebra::DVector<f64>, nalgebra::DVector<f64>) {
    (
        nalgebra::DVector::from_iterator(v.len(), v.iter().map(|z| z.re)),
        nalgebra::DVector::from_iterator(v.len(), v.iter().map(|z| z.im)),
    )
}

impl Model for Nls1d {
    fn name(&self) -> String {
        format!("{} K={}", self.family.label, self.basis.iter().map(|f| f.freq()).max().unwrap_or(0))
    }

    fn family(&self) -> &FrequencyFamily {
        &self.family
    }

    fn is_linear(&self) -> bool {
        self.terms_linear
    }

    fn kick(&self, u: &mut [Complex64], dt: f64) {
        let mut psi = self.to_grid(u);
        for (j, z) in psi.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, -dt * self.ladder.g(j, z.norm_sqr()));
        }
        u.copy_from_slice(&self.from_grid(&psi));
    }

    /// `½ Σ λ_n |u_n|² + ½ (L/M) Σ_j G(x_j, |ψ_j|²)`.
    fn hamiltonian(&self, u: &[Complex64]) -> f64 {
        let quad: f64 = 0.5 * u.iter().zip(self.family.omega()).map(|(z, w)| w * z.norm_sqr()).sum::<f64>();
        if self.terms_linear {
            return quad;
        }
        let psi = self.to_grid(u);
        let w = self.len / psi.len() as f64;
        quad + 0.5 * w * psi.iter().enumerate().map(|(j, z)| self.ladder.primitive(j, z.norm_sqr())).sum::<f64>()
    }

    fn mass(&self, u: &[Complex64]) -> Option<f64> {
        Some(u.iter().map(|z| z.norm_sqr()).sum())
    }

    fn forcing(&self, u: &[Complex64], s: f64) -> f64 {
        if self.terms_linear {
            return 0.0;
        }
        let c = self.trig_coefficients(u);
        let (re, im) = split(&c);
        let (a, b) = (&self.fine.low * re, &self.fine.low * im);
        let field: Vec<Complex64> = a
            .iter()
            .zip(b.iter())
            .enumerate()
            .map(|(j, (x, y))| {
                let z = Complex64::new(*x, *y);
                z * self.fine.ladder.g(j, z.norm_sqr())
            })
            .collect();
        let (re, im) = split(&field);
        let (pa, pb) = (self.fine.high.tr_mul(&re), self.fine.high.tr_mul(&im));
        pa.iter()
            .zip(pb.iter())
            .zip(&self.fine.high_freq)
            .map(|((x, y), &n)| {
                let w = self.fine.weight;
                (1.0 + (n * n) as f64).powf(-s) * w * w * (x * x + y * y)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Cubic-type NLS on `𝕋²` with a Fourier multiplier `V̂`: `ω_n = |n|² + V̂_n`.
///
/// Modes `|n|∞ ≤ K` on a `(2K+1)²` grid; `ψ = (1/2π) Σ u_n e^{in·x}`.
pub struct Nls2d {
    family: FrequencyFamily,
    k: usize,
    ladder: Ladder,
    linear: bool,
    /// FFT slot `(a, b)` of every lattice id.
    slots: Vec<(usize, usize)>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fine_fwd: Arc<dyn Fft<f64>>,
    fine_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Nls2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nls2d").field("k", &self.k).field("family", &self.family).finish()
    }
}

fn fft2(plan: &dyn Fft<f64>, data: &mut [Complex64], m: usize) {
    for row in data.chunks_mut(m) {
        plan.process(row);
    }
    let mut col = vec![Complex64::default(); m];
    for c in 0..m {
        for r in 0..m {
            col[r] = data[r * m + c];
        }
        plan.process(&mut col);
        for r in 0..m {
            data[r * m + c] = col[r];
        }
    }
}

fn wrap(n: i32, m: usize) -> usize {
    n.rem_euclid(m as i32) as usize
}

impl Nls2d {
    pub fn new(vhat: &[super::ConvolutionEntry], k: usize, terms: &[LadderTerm]) -> Result<Self, DynamicsError> {
        let lattice = Arc::new(Lattice::square(k as i32)?);
        let mut omega: Vec<f64> = lattice.modes().iter().map(|n| n.norm_sq() as f64).collect();
        for e in vhat {
            let n = ModeIndex::d2(e.n[0], e.n[1]);
            if let Some(id) = lattice.id(&n) {
                omega[id] += e.value;
            }
        }
        let m = 2 * k + 1;
        let slots = lattice.modes().iter().map(|n| (wrap(n.coords()[0], m), wrap(n.coords()[1], m))).collect();
        let family = FrequencyFamily::new("nls2d", lattice, omega)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            family,
            k,
            ladder: Ladder::sample(terms, &[0.0]),
            linear: terms.iter().all(|t| t.value == 0.0),
            slots,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
            fine_fwd: planner.plan_fft_forward(2 * m),
            fine_inv: planner.plan_fft_inverse(2 * m),
        })
    }

    fn grid_size(&self) -> usize {
        2 * self.k + 1
    }

    /// `ψ(x_j) = (1/2π) Σ_n u_n e^{in·x_j}`.
    pub fn to_grid(&self, u: &[Complex64]) -> Vec<Complex64> {
        let m = self.grid_size();
        let mut data = vec![Complex64::default(); m * m];
        for (z, &(a, b)) in u.iter().zip(&self.slots) {
            data[a * m + b] = *z / (2.0 * PI);
        }
        fft2(self.inv.as_ref(), &mut data, m);
        data
    }

    pub fn from_grid(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let m = self.grid_size();
        let mut data = psi.to_vec();
        fft2(self.fwd.as_ref(), &mut data, m);
        let w = 2.0 * PI / (m * m) as f64;
        self.slots.iter().map(|&(a, b)| data[a * m + b] * w).collect()
    }
}

impl Model for Nls2d {
    fn name(&self) -> String {
        format!("nls2d K={}", self.k)
    }

    fn family(&self) -> &FrequencyFamily {
        &self.family
    }

    fn is_linear(&self) -> bool {
        self.linear
    }

    fn kick(&self, u: &mut [Complex64], dt: f64) {
        let mut psi = self.to_grid(u);
        for z in &mut psi {
            *z *= Complex64::from_polar(1.0, -dt * self.ladder.g(0, z.norm_sqr()));
        }
        u.copy_from_slice(&self.from_grid(&psi));
    }

    fn hamiltonian(&self, u: &[Complex64]) -> f64 {
        let quad: f64 = 0.5 * u.iter().zip(self.family.omega()).map(|(z, w)| w * z.norm_sqr()).sum::<f64>();
        if self.linear {
            return quad;
        }
        let psi = self.to_grid(u);
        let w = 4.0 * PI * PI / psi.len() as f64;
        quad + 0.5 * w * psi.iter().map(|z| self.ladder.primitive(0, z.norm_sqr())).sum::<f64>()
    }

    fn mass(&self, u: &[Complex64]) -> Option<f64> {
        Some(u.iter().map(|z| z.norm_sqr()).sum())
    }

    fn forcing(&self, u: &[Complex64], s: f64) -> f64 {
        if self.linear {
            return 0.0;
        }
        let mf = 2 * self.grid_size();
        let mut data = vec![Complex64::default(); mf * mf];
        for (z, n) in u.iter().zip(self.family.lattice().modes()) {
            let (a, b) = (wrap(n.coords()[0], mf), wrap(n.coords()[1], mf));
            data[a * mf + b] = *z / (2.0 * PI);
        }
        fft2(self.fine_inv.as_ref(), &mut data, mf);
        for z in &mut data {
            *z *= self.ladder.g(0, z.norm_sqr());
        }
        fft2(self.fine_fwd.as_ref(), &mut data, mf);
        let w = 2.0 * PI / (mf * mf) as f64;
        let k = self.k as i32;
        let mut sum = 0.0;
        for a in -2 * k..=2 * k {
            for b in -2 * k..=2 * k {
                if a.abs().max(b.abs()) <= k {
                    continue;
                }
                let z = data[wrap(a, mf) * mf + wrap(b, mf)] * w;
                sum += (1.0 + (a * a + b * b) as f64).powf(-s) * z.norm_sqr();
            }
        }
        sum.sqrt()
    }
}
