//! Klein-Gordon on `(0, π)` in the complex variable `u = Ω Φ + i Ω^{-1} Ψ`.

use super::{DynamicsError, Ladder, LadderTerm, Model};
use crate::hamilton::{code, factorial, Key, PolyHamiltonian, QuadraticDiagonal, Sign};
use crate::lattice::Lattice;
use crate::resonance::FrequencyFamily;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

/// `u_n = ω_n^{1/2} Φ_n + i ω_n^{-1/2} Ψ_n` with `ω_n = sqrt(n² + m)`, on sine coefficients `n = 1, 2, …`.
pub fn kg_complexify(phi: &[f64], psi: &[f64], mass: f64) -> Result<Vec<Complex64>, DynamicsError> {
    check(phi, psi, mass)?;
    Ok(phi
        .iter()
        .zip(psi)
        .enumerate()
        .map(|(i, (a, b))| {
            let w = omega(i + 1, mass);
            Complex64::new(w.sqrt() * a, b / w.sqrt())
        })
        .collect())
}

/// Inverse of [`kg_complexify`].
pub fn kg_decomplexify(u: &[Complex64], mass: f64) -> Result<(Vec<f64>, Vec<f64>), DynamicsError> {
    if !(mass > -1.0) {
        return Err(DynamicsError::Invalid(format!("mass {mass} must exceed -1")));
    }
    Ok(u.iter()
        .enumerate()
        .map(|(i, z)| {
            let w = omega(i + 1, mass);
            (z.re / w.sqrt(), z.im * w.sqrt())
        })
        .unzip())
}

/// `E_n = ω_n (∫ sin(nx) Φ)² + ω_n^{-1} (∫ sin(nx) Ψ)²` from orthonormal sine coefficients;
/// equals `(π/2) |u_n|²`.
pub fn harmonic_energy(phi: &[f64], psi: &[f64], mass: f64, n: usize) -> Result<f64, DynamicsError> {
    check(phi, psi, mass)?;
    if n == 0 || n > phi.len() {
        return Err(DynamicsError::Invalid(format!("mode {n} outside 1..={}", phi.len())));
    }
    let w = omega(n, mass);
    // ∫₀^π sin(nx) e_n = sqrt(π/2)
    let a = (PI / 2.0).sqrt() * phi[n - 1];
    let b = (PI / 2.0).sqrt() * psi[n - 1];
    Ok(w * a * a + b * b / w)
}

fn check(phi: &[f64], psi: &[f64], mass: f64) -> Result<(), DynamicsError> {
    if !(mass > -1.0) {
        return Err(DynamicsError::Invalid(format!("mass {mass} must exceed -1")));
    }
    if phi.len() != psi.len() {
        return Err(DynamicsError::Invalid(format!("Φ has {} modes, Ψ {}", phi.len(), psi.len())));
    }
    Ok(())
}

fn omega(n: usize, mass: f64) -> f64 {
    ((n * n) as f64 + mass).sqrt()
}

/// Sine-Galerkin Klein-Gordon with the nonlinearity sampled at `M`
/// Gauss-Legendre nodes on `(0, π)`. Integrals are the quadrature sums
/// `Σ_j w_j f(x_j)`, which are at rounding level for the trigonometric
/// products of the model once `M` exceeds the highest frequency by a margin.
#[derive(Clone, Debug)]
pub struct KleinGordon {
    mass: f64,
    family: FrequencyFamily,
    terms: Vec<LadderTerm>,
    xs: Vec<f64>,
    ws: Vec<f64>,
    ladder: Ladder,
    /// `e_k(x_j)`, row `j`, column `k - 1`.
    basis: Vec<Vec<f64>>,
    inv_sqrt_omega: Vec<f64>,
    /// Fine grid of `2M` points with modes `1..=2K`, for the forcing estimate.
    fine_ws: Vec<f64>,
    fine_ladder: Ladder,
    fine_basis: Vec<Vec<f64>>,
}

/// Gauss-Legendre nodes and weights on `(0, π)` from the Jacobi matrix.
pub(crate) fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(m, m, |r, c| {
        if r.abs_diff(c) == 1 {
            let k = r.max(c) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> =
        (0..m).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().map(|(t, w)| (PI * (t + 1.0) / 2.0, PI * w / 2.0)).unzip()
}

fn sine_table(xs: &[f64], modes: usize) -> Vec<Vec<f64>> {
    let c = (2.0 / PI).sqrt();
    xs.iter().map(|x| (1..=modes).map(|k| c * (k as f64 * x).sin()).collect()).collect()
}

impl KleinGordon {
    pub fn new(mass: f64, modes: usize, terms: &[LadderTerm], grid: Option<usize>) -> Result<Self, DynamicsError> {
        if !(mass > -1.0) {
            return Err(DynamicsError::Invalid(format!("mass {mass} must exceed -1")));
        }
        let lattice = Arc::new(Lattice::range(1, modes as i32)?);
        let w: Vec<f64> = (1..=modes).map(|n| omega(n, mass)).collect();
        let family = FrequencyFamily::new(format!("klein-gordon m={mass}"), lattice, w.clone())?;
        let degree = terms.iter().map(|t| t.order + 1).max().unwrap_or(2);
        let band = terms.iter().map(|t| t.bandwidth()).max().unwrap_or(0);
        let m = grid.unwrap_or((degree * modes + band) / 2 + 16).max(modes);
        let (xs, ws) = gauss_legendre(m);
        let (fine_xs, fine_ws) = gauss_legendre(2 * m);
        Ok(Self {
            mass,
            family,
            terms: terms.to_vec(),
            ladder: Ladder::sample(terms, &xs),
            basis: sine_table(&xs, modes),
            inv_sqrt_omega: w.iter().map(|w| 1.0 / w.sqrt()).collect(),
            fine_ladder: Ladder::sample(terms, &fine_xs),
            fine_basis: sine_table(&fine_xs, 2 * modes),
            fine_ws,
            xs,
            ws,
        })
    }

    pub fn mass_parameter(&self) -> f64 {
        self.mass
    }

    pub fn grid_size(&self) -> usize {
        self.xs.len()
    }

    /// `Φ(x_j) = Σ_k ω_k^{-1/2} Re u_k e_k(x_j)`.
    fn field(&self, u: &[Complex64]) -> Vec<f64> {
        let phi: Vec<f64> = u.iter().zip(&self.inv_sqrt_omega).map(|(z, c)| z.re * c).collect();
        self.basis.iter().map(|row| row.iter().zip(&phi).map(|(e, p)| e * p).sum()).collect()
    }

    pub fn z2(&self) -> QuadraticDiagonal {
        QuadraticDiagonal::new(self.family.omega().to_vec())
    }

    /// The exact polynomial of the discrete nonlinearity,
    /// `P^{(D)}(u) = -(1/D!) Σ_j w_j g_{D-1}(x_j) (Ω^{-1} Re u)(x_j)^D`, for the
    /// rungs of the ladder. Coefficients below `1e-13` of the largest are dropped.
    pub fn perturbation(&self) -> Result<PolyHamiltonian, DynamicsError> {
        let lattice = self.family.lattice().clone();
        let k = lattice.len();
        let m = self.xs.len();
        // c_k(x_j) = ω_k^{-1/2} e_k(x_j) / 2, the weight of u_k and of ū_k
        let c: Vec<Vec<f64>> =
            self.basis.iter().map(|row| row.iter().zip(&self.inv_sqrt_omega).map(|(e, s)| e * s / 2.0).collect()).collect();
        let mut raw: Vec<(Vec<usize>, f64)> = vec![];
        for (t, &order) in self.ladder.orders.iter().enumerate() {
            let d = order + 1;
            if d < 3 {
                return Err(DynamicsError::Invalid(format!("rung of order {order} gives a quadratic term")));
            }
            let pref = -1.0 / factorial(d);
            let g = &self.ladder.table[t];
            let mut modes = vec![0usize; d];
            loop {
                let s: f64 = (0..m).map(|j| self.ws[j] * g[j] * modes.iter().map(|&i| c[j][i]).product::<f64>()).sum();
                raw.push((modes.clone(), pref * s));
                // next non-decreasing tuple
                let mut p = d;
                while p > 0 && modes[p - 1] == k - 1 {
                    p -= 1;
                }
                if p == 0 {
                    break;
                }
                let v = modes[p - 1] + 1;
                for x in &mut modes[p - 1..] {
                    *x = v;
                }
            }
        }
        let max = raw.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        let mut h = PolyHamiltonian::new(lattice);
        for (modes, c) in raw {
            if c.abs() <= 1e-13 * max {
                continue;
            }
            for key in sign_patterns(&modes) {
                h.add_raw(key, Complex64::new(c, 0.0));
            }
        }
        Ok(h)
    }

    /// `-Ω^{-1} g(·, Φ)` projected on modes `K+1..=2K` of the fine grid, in `h^{-s}`.
    fn tail_forcing(&self, u: &[Complex64], s: f64) -> f64 {
        let k = u.len();
        let phi: Vec<f64> = u.iter().zip(&self.inv_sqrt_omega).map(|(z, c)| z.re * c).collect();
        let mut f = vec![0.0; k];
        for (j, row) in self.fine_basis.iter().enumerate() {
            let y: f64 = row[..k].iter().zip(&phi).map(|(e, p)| e * p).sum();
            let gj = self.fine_ladder.g(j, y);
            for (q, fq) in f.iter_mut().enumerate() {
                *fq += self.fine_ws[j] * gj * row[k + q];
            }
        }
        f.iter()
            .enumerate()
            .map(|(q, fq)| {
                let n = (k + q + 1) as f64;
                let wn = (n * n + self.mass).sqrt();
                (1.0 + n * n).powf(-s) * fq * fq / wn
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// All sorted sign codes over a non-decreasing mode tuple.
fn sign_patterns(modes: &[usize]) -> Vec<Key> {
    let mut runs: Vec<(usize, usize)> = vec![];
    for &i in modes {
        match runs.last_mut() {
            Some((id, n)) if *id == i => *n += 1,
            _ => runs.push((i, 1)),
        }
    }
    let mut out: Vec<Key> = vec![Key::new()];
    for (id, n) in runs {
        let mut next = vec![];
        for base in &out {
            for plus in 0..=n {
                let mut k = base.clone();
                k.extend(std::iter::repeat_n(code(id, Sign::Minus), n - plus));
                k.extend(std::iter::repeat_n(code(id, Sign::Plus), plus));
                next.push(k);
            }
        }
        out = next;
    }
    for k in &mut out {
        k.sort_unstable();
    }
    out
}

impl Model for KleinGordon {
    fn name(&self) -> String {
        format!("klein-gordon m={} K={}", self.mass, self.family.lattice().len())
    }

    fn family(&self) -> &FrequencyFamily {
        &self.family
    }

    fn is_linear(&self) -> bool {
        self.ladder.is_empty() || self.terms.iter().all(|t| t.value == 0.0)
    }

    /// `Ψ` moves by `dt · g(·, Φ)` while `Φ` stays: `u_k += i dt ω_k^{-1/2} ⟨g(·, Φ), e_k⟩`.
    fn kick(&self, u: &mut [Complex64], dt: f64) {
        let field = self.field(u);
        let mut f = vec![0.0; u.len()];
        for (j, row) in self.basis.iter().enumerate() {
            let gj = self.ws[j] * self.ladder.g(j, field[j]);
            for (fk, e) in f.iter_mut().zip(row) {
                *fk += gj * e;
            }
        }
        for ((z, fk), c) in u.iter_mut().zip(f).zip(&self.inv_sqrt_omega) {
            z.im += dt * c * fk;
        }
    }

    fn hamiltonian(&self, u: &[Complex64]) -> f64 {
        let field = self.field(u);
        let pot: f64 = field.iter().enumerate().map(|(j, &y)| self.ws[j] * self.ladder.primitive(j, y)).sum();
        self.z2().evaluate(u) - pot
    }

    fn energies(&self, u: &[Complex64]) -> Vec<f64> {
        u.iter().map(|z| PI / 2.0 * z.norm_sqr()).collect()
    }

    fn forcing(&self, u: &[Complex64], s: f64) -> f64 {
        if self.is_linear() {
            return 0.0;
        }
        self.tail_forcing(u, s)
    }
}
