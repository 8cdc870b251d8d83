//! Sturm–Liouville spectra of `-y'' + V y = λ y` on `(0, π)`.
//!
//! Dirichlet problems are discretized in `e_m = sqrt(2/π) sin(m x)`, Neumann
//! problems in `c_0 = 1/sqrt(π)`, `c_m = sqrt(2/π) cos(m x)`. Potential matrix
//! elements come from the half-range cosine coefficients `a_j` of `V`:
//! `∫ V e_m e_k = ½(ã_{|m-k|} - a_{m+k})` with `ã_0 = 2 a_0`, and the same with
//! a plus sign for the cosine basis. Dirichlet eigenvalues are labelled
//! `n = 1, 2, …`, Neumann eigenvalues `n = 0, -1, -2, …`.

mod partial_fraction;
mod potential;

pub use partial_fraction::{partial_fraction_choice, second_derivative_separation, PartialFraction, Separation};
pub use potential::Potential;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectraError {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("potential is not even on the circle (tolerance {0:e})")]
    NotEven(f64),
    #[error("galerkin_dim {dim} is too small for {need} eigenvalues")]
    GalerkinTooSmall { dim: usize, need: usize },
    #[error("eigenvalue index {0} is not available")]
    BadIndex(i32),
    #[error("eigenvalue {0} is not simple (gap {1:e})")]
    NotSimple(i32, f64),
    #[error("state has {got} coefficients, expected at most {max}")]
    BadLength { got: usize, max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Galerkin discretization parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GalerkinOptions {
    pub galerkin_dim: usize,
    /// Eigenvalues reported per kind; the solve keeps all `galerkin_dim` pairs.
    pub n_max: usize,
}

impl GalerkinOptions {
    pub fn new(n_max: usize, galerkin_dim: usize) -> Self {
        Self { galerkin_dim, n_max }
    }
}

/// Eigenpairs of one boundary problem.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub boundary: Boundary,
    pub n_max: usize,
    eigenvalues: Vec<f64>,
    /// Column `i` holds the basis coefficients of the `i`-th eigenfunction.
    vectors: DMatrix<f64>,
    coeffs: Vec<f64>,
}

fn assemble(boundary: Boundary, a: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    let at = |j: usize| a.get(j).copied().unwrap_or(0.0);
    let tilde = |j: usize| if j == 0 { 2.0 * at(0) } else { at(j) };
    DMatrix::from_fn(rows, cols, |r, c| match boundary {
        Boundary::Dirichlet => {
            let (m, k) = (r + 1, c + 1);
            0.5 * (tilde(m.abs_diff(k)) - at(m + k))
        }
        Boundary::Neumann => {
            let (m, k) = (r, c);
            match (m, k) {
                (0, 0) => at(0),
                (0, k) => at(k) / 2f64.sqrt(),
                (m, 0) => at(m) / 2f64.sqrt(),
                _ => 0.5 * (tilde(m.abs_diff(k)) + at(m + k)),
            }
        }
    })
}

fn kinetic(boundary: Boundary, i: usize) -> f64 {
    let m = match boundary {
        Boundary::Dirichlet => i + 1,
        Boundary::Neumann => i,
    } as f64;
    m * m
}

/// Galerkin matrix of multiplication by `W` in the basis of `boundary`.
pub fn potential_matrix(boundary: Boundary, w: &Potential, dim: usize) -> DMatrix<f64> {
    let a = w.half_cosine_coefficients(2 * dim + 2);
    assemble(boundary, &a, dim, dim)
}

/// Solves one boundary problem for `V`.
pub fn solve(boundary: Boundary, v: &Potential, opts: &GalerkinOptions) -> Result<EigenSystem, SpectraError> {
    v.validate()?;
    let dim = opts.galerkin_dim;
    let need = match boundary {
        Boundary::Dirichlet => opts.n_max,
        Boundary::Neumann => opts.n_max + 1,
    };
    if dim < need.max(2) {
        return Err(SpectraError::GalerkinTooSmall { dim, need });
    }
    let coeffs = v.half_cosine_coefficients(3 * dim + 2);
    let mut m = assemble(boundary, &coeffs, dim, dim);
    for i in 0..dim {
        m[(i, i)] += kinetic(boundary, i);
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // sign: positive overlap with the matching unperturbed mode
        let pivot = if col[c].abs() > 1e-8 {
            col[c]
        } else {
            col.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0)
        };
        if pivot < 0.0 {
            col *= -1.0;
        }
        vectors.set_column(c, &col);
    }
    Ok(EigenSystem { boundary, n_max: opts.n_max, eigenvalues, vectors, coeffs })
}

pub fn solve_dirichlet(v: &Potential, opts: &GalerkinOptions) -> Result<EigenSystem, SpectraError> {
    solve(Boundary::Dirichlet, v, opts)
}

pub fn solve_neumann(v: &Potential, opts: &GalerkinOptions) -> Result<EigenSystem, SpectraError> {
    solve(Boundary::Neumann, v, opts)
}

impl EigenSystem {
    pub fn galerkin_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Position of label `n` in the ascending list.
    pub fn position(&self, n: i32) -> Result<usize, SpectraError> {
        let i = match self.boundary {
            Boundary::Dirichlet if n >= 1 => (n - 1) as usize,
            Boundary::Neumann if n <= 0 => (-n) as usize,
            _ => return Err(SpectraError::BadIndex(n)),
        };
        if i >= self.eigenvalues.len() {
            return Err(SpectraError::BadIndex(n));
        }
        Ok(i)
    }

    pub fn label(&self, position: usize) -> i32 {
        match self.boundary {
            Boundary::Dirichlet => position as i32 + 1,
            Boundary::Neumann => -(position as i32),
        }
    }

    /// Reported labels `n` (up to `n_max` in absolute value).
    pub fn labels(&self) -> Vec<i32> {
        match self.boundary {
            Boundary::Dirichlet => (1..=self.n_max as i32).collect(),
            Boundary::Neumann => (0..=self.n_max as i32).map(|k| -k).collect(),
        }
    }

    pub fn eigenvalue(&self, n: i32) -> Result<f64, SpectraError> {
        Ok(self.eigenvalues[self.position(n)?])
    }

    /// All Galerkin eigenvalues in ascending order.
    pub fn all_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Basis coefficients of `f_n`.
    pub fn coefficients(&self, n: i32) -> Result<DVector<f64>, SpectraError> {
        Ok(self.vectors.column(self.position(n)?).into_owned())
    }

    /// `∫ f_n · basis_k`: for Dirichlet `sqrt(2/π)∫ f_n sin(k x)`, `k ≥ 1`.
    pub fn overlap(&self, n: i32, k: usize) -> Result<f64, SpectraError> {
        let i = self.position(n)?;
        let row = match self.boundary {
            Boundary::Dirichlet => k.checked_sub(1).ok_or(SpectraError::BadIndex(k as i32))?,
            Boundary::Neumann => k,
        };
        if row >= self.galerkin_dim() {
            return Ok(0.0);
        }
        Ok(self.vectors[(row, i)])
    }

    pub fn eval(&self, n: i32, x: f64) -> Result<f64, SpectraError> {
        let i = self.position(n)?;
        let mut s = 0.0;
        for r in 0..self.galerkin_dim() {
            let c = self.vectors[(r, i)];
            s += c * basis_value(self.boundary, r, x);
        }
        Ok(s)
    }

    /// `f_n` at `x_j = jπ/points`, `j = 0..=points`.
    pub fn sample(&self, n: i32, points: usize) -> Result<Vec<f64>, SpectraError> {
        (0..=points).map(|j| self.eval(n, PI * j as f64 / points as f64)).collect()
    }

    /// `‖(-∂² + V - λ_n) f_n‖_{L²}` from the part of `V f_n` outside the Galerkin space.
    pub fn residual(&self, n: i32) -> Result<f64, SpectraError> {
        let i = self.position(n)?;
        let dim = self.galerkin_dim();
        let full = assemble(self.boundary, &self.coeffs, 3 * dim, dim);
        let col = self.vectors.column(i);
        let prod = full * col;
        let mut inside = 0.0;
        for r in 0..dim {
            let k = kinetic(self.boundary, r);
            let d = prod[r] + (k - self.eigenvalues[i]) * col[r];
            inside += d * d;
        }
        let tail: f64 = prod.rows(dim, 2 * dim).iter().map(|x| x * x).sum();
        Ok((inside + tail).sqrt())
    }

    fn matrix_element_all(&self, w: &Potential) -> DMatrix<f64> {
        let mw = potential_matrix(self.boundary, w, self.galerkin_dim());
        self.vectors.transpose() * mw * &self.vectors
    }

    /// `dλ_n(V)(W) = ∫ W f_n²`.
    pub fn derivative(&self, n: i32, w: &Potential) -> Result<f64, SpectraError> {
        w.validate()?;
        let i = self.position(n)?;
        let mw = potential_matrix(self.boundary, w, self.galerkin_dim());
        let a = self.vectors.column(i);
        Ok((a.transpose() * mw * a)[(0, 0)])
    }

    /// `d²λ_n(V)(W, W) = 2 Σ_{k≠n} (∫ W f_n f_k)² / (λ_n - λ_k)` over the same boundary kind.
    pub fn second_derivative(&self, n: i32, w: &Potential) -> Result<f64, SpectraError> {
        w.validate()?;
        let i = self.position(n)?;
        let lam = self.eigenvalues[i];
        for (j, l) in self.eigenvalues.iter().enumerate() {
            if j != i && (l - lam).abs() < 1e-10 * (1.0 + lam.abs()) {
                return Err(SpectraError::NotSimple(n, (l - lam).abs()));
            }
        }
        let g = self.matrix_element_all(w);
        let mut s = 0.0;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            if k != i {
                s += g[(i, k)] * g[(i, k)] / (lam - l);
            }
        }
        Ok(2.0 * s)
    }

    /// `sup_x |f_n - sqrt(2/π)(sin nx - 𝒱(x)/(2n) cos nx)|` on a grid (Dirichlet only).
    pub fn asymptotic_eigenfunction_error(&self, n: i32, v: &Potential, points: usize) -> Result<f64, SpectraError> {
        if self.boundary != Boundary::Dirichlet || n < 1 {
            return Err(SpectraError::BadIndex(n));
        }
        let terms = 2 * self.galerkin_dim() + 2;
        let c = (2.0 / PI).sqrt();
        let nf = n as f64;
        let mut worst: f64 = 0.0;
        for j in 0..=points {
            let x = PI * j as f64 / points as f64;
            let approx = c * ((nf * x).sin() - v.centered_primitive(x, terms) / (2.0 * nf) * (nf * x).cos());
            worst = worst.max((self.eval(n, x)? - approx).abs());
        }
        Ok(worst)
    }

    /// Sturm coefficients `w_n = ∫ u f_n` from basis coefficients of `u`.
    pub fn to_sturm(&self, basis_coeffs: &[f64]) -> Result<Vec<f64>, SpectraError> {
        let dim = self.galerkin_dim();
        if basis_coeffs.len() > dim {
            return Err(SpectraError::BadLength { got: basis_coeffs.len(), max: dim });
        }
        let mut u = DVector::zeros(dim);
        u.rows_mut(0, basis_coeffs.len()).copy_from_slice(basis_coeffs);
        Ok((self.vectors.transpose() * u).iter().copied().collect())
    }

    /// Inverse of [`EigenSystem::to_sturm`].
    pub fn from_sturm(&self, sturm: &[f64]) -> Result<Vec<f64>, SpectraError> {
        let dim = self.galerkin_dim();
        if sturm.len() > dim {
            return Err(SpectraError::BadLength { got: sturm.len(), max: dim });
        }
        let mut w = DVector::zeros(dim);
        w.rows_mut(0, sturm.len()).copy_from_slice(sturm);
        Ok((&self.vectors * w).iter().copied().collect())
    }

    /// Orthogonality defect `max |Vᵀ V - I|` of the eigenvector matrix.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - t).abs());
            }
        }
        worst
    }
}

fn basis_value(boundary: Boundary, row: usize, x: f64) -> f64 {
    match boundary {
        Boundary::Dirichlet => (2.0 / PI).sqrt() * ((row + 1) as f64 * x).sin(),
        Boundary::Neumann if row == 0 => 1.0 / PI.sqrt(),
        Boundary::Neumann => (2.0 / PI).sqrt() * (row as f64 * x).cos(),
    }
}

/// Sine coefficients `û_k = sqrt(2/π) ∫ u sin(k x)`, `k = 1..=count`, from samples on `x_j = jπ/N`.
pub fn sine_coefficients_from_samples(samples: &[f64], count: usize) -> Vec<f64> {
    let n = samples.len() - 1;
    let h = PI / n as f64;
    (1..=count)
        .map(|k| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .skip(1)
                .take(n.saturating_sub(1))
                .map(|(j, v)| v * (k as f64 * j as f64 * h).sin())
                .sum();
            (2.0 / PI).sqrt() * s * h
        })
        .collect()
}

/// Dirichlet and Neumann spectra of an even potential, merged as `λ_n`, `n ∈ ℤ`.
#[derive(Clone, Debug)]
pub struct PeriodicEvenSpectrum {
    pub dirichlet: EigenSystem,
    pub neumann: EigenSystem,
}

impl PeriodicEvenSpectrum {
    pub fn eigenvalue(&self, n: i32) -> Result<f64, SpectraError> {
        if n >= 1 {
            self.dirichlet.eigenvalue(n)
        } else {
            self.neumann.eigenvalue(n)
        }
    }

    /// `(n, λ_n)` for `|n| ≤ n_max`, sorted by `n`.
    pub fn merged(&self) -> Vec<(i32, f64)> {
        let m = self.dirichlet.n_max as i32;
        (-m..=m).filter_map(|n| self.eigenvalue(n).ok().map(|l| (n, l))).collect()
    }

    /// Residual of `f_n` extended to the circle, normalized to unit `L²(𝕋)`.
    pub fn residual(&self, n: i32) -> Result<f64, SpectraError> {
        // the odd or even extension doubles the squared norm, and so does the normalization
        if n >= 1 {
            self.dirichlet.residual(n)
        } else {
            self.neumann.residual(n)
        }
    }
}

pub fn solve_periodic_even(v: &Potential, opts: &GalerkinOptions, tol: f64) -> Result<PeriodicEvenSpectrum, SpectraError> {
    v.validate()?;
    if !v.is_even(tol) {
        return Err(SpectraError::NotEven(tol));
    }
    Ok(PeriodicEvenSpectrum { dirichlet: solve_dirichlet(v, opts)?, neumann: solve_neumann(v, opts)? })
}

/// One row of a spectrum report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub index: i32,
    pub lambda: f64,
    pub residual: f64,
}

pub fn spectrum_rows(sys: &EigenSystem) -> Result<Vec<SpectrumRow>, SpectraError> {
    sys.labels()
        .into_iter()
        .map(|n| Ok(SpectrumRow { index: n, lambda: sys.eigenvalue(n)?, residual: sys.residual(n)? }))
        .collect()
}
