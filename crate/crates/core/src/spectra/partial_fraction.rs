//! Exact choice of a separating cosine direction for linear combinations of eigenvalues.
//!
//! At `V = 0` the second derivative of `λ_n + λ_{-n}` along `cos(j x)` equals
//! `2/(4n² - j²)` whenever `j ∉ {n, 2n}`. A nontrivial combination
//! `Σ ℓ_k/(4n_k² - j²)` of distinct `n_k` cannot vanish for every `j`; the
//! admissible `j ≤ 5 r` with the largest modulus is picked with exact rationals.

use super::{solve_dirichlet, solve_neumann, GalerkinOptions, Potential, SpectraError};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialFraction {
    pub j: u32,
    /// Signed exact value as `numerator/denominator`.
    pub numerator: String,
    pub denominator: String,
    pub value: f64,
}

impl PartialFraction {
    pub fn abs_value(&self) -> f64 {
        self.value.abs()
    }
}

fn combination(ell: &[i64], n: &[u32], j: u32) -> BigRational {
    let mut s = BigRational::zero();
    for (l, nk) in ell.iter().zip(n) {
        let den = 4 * (*nk as i64) * (*nk as i64) - (j as i64) * (j as i64);
        s += BigRational::new(BigInt::from(*l), BigInt::from(den));
    }
    s
}

/// Maximizes `|Σ ℓ_k/(4n_k² - j²)|` over `j ∈ [1, 5 r] \ ⋃{n_k, 2n_k}`.
pub fn partial_fraction_choice(ell: &[i64], n: &[u32]) -> Result<PartialFraction, SpectraError> {
    if ell.is_empty() || ell.len() != n.len() {
        return Err(SpectraError::InvalidPotential("ℓ and n must be nonempty and of equal length".into()));
    }
    if ell.contains(&0) {
        return Err(SpectraError::InvalidPotential("ℓ entries must be nonzero".into()));
    }
    let mut sorted = n.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(SpectraError::InvalidPotential("n entries must be distinct".into()));
    }
    let r = n.len() as u32;
    let mut best: Option<(u32, BigRational)> = None;
    for j in 1..=5 * r {
        if n.iter().any(|&nk| j == nk || j == 2 * nk) {
            continue;
        }
        let v = combination(ell, n, j);
        let better = match &best {
            None => true,
            Some((_, b)) => v.abs() > b.abs(),
        };
        if better {
            best = Some((j, v));
        }
    }
    let (j, v) = best.ok_or_else(|| SpectraError::InvalidPotential("no admissible direction".into()))?;
    Ok(PartialFraction {
        j,
        numerator: v.numer().to_string(),
        denominator: v.denom().to_string(),
        value: v.to_f64().unwrap_or(f64::NAN),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub j: u32,
    /// `∂²_{cos(j·)} Σ ℓ_k (λ_{n_k} + λ_{-n_k})` at `V`.
    pub value: f64,
    /// The same quantity at `V = 0`: `2 Σ ℓ_k/(4n_k² - j²)`.
    pub free_value: f64,
}

/// Second derivative of `Σ ℓ_k (λ_{n_k} + λ_{-n_k})` along `cos(j x)`.
pub fn second_derivative_separation(
    v: &Potential,
    ell: &[i64],
    n: &[u32],
    j: u32,
    opts: &GalerkinOptions,
) -> Result<Separation, SpectraError> {
    let nmax = n.iter().copied().max().unwrap_or(0) as usize;
    let o = GalerkinOptions::new(nmax.max(1), opts.galerkin_dim);
    let dir = solve_dirichlet(v, &o)?;
    let neu = solve_neumann(v, &o)?;
    let w = Potential::cosine(j as usize);
    let mut value = 0.0;
    let mut free = 0.0;
    for (l, &nk) in ell.iter().zip(n) {
        let lf = *l as f64;
        let d_minus = neu.second_derivative(-(nk as i32), &w)?;
        let d_plus = if nk == 0 { d_minus } else { dir.second_derivative(nk as i32, &w)? };
        value += lf * (d_plus + d_minus);
        free += 2.0 * lf / (4.0 * (nk as f64).powi(2) - (j as f64).powi(2));
    }
    Ok(Separation { j, value, free_value: free })
}
