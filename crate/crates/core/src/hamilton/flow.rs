//! Time-`t` Lie flows `∂_t u = i ∇χ(u)` and their variational equations.

use super::{HamiltonError, PolyHamiltonian};
use crate::ode::{dopri5, OdeError, OdeOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Hamilton(#[from] HamiltonError),
}

pub type FlowOptions = OdeOptions;

/// `Φ^t_χ(u)`.
pub fn flow(chi: &PolyHamiltonian, u: &[Complex64], t: f64, opts: &FlowOptions) -> Result<Vec<Complex64>, FlowError> {
    if u.len() != chi.lattice().len() {
        return Err(HamiltonError::StateLength { expected: chi.lattice().len(), got: u.len() }.into());
    }
    let i = Complex64::i();
    let f = |y: &[Complex64]| -> Vec<Complex64> {
        chi.gradient(y).expect("length checked").into_iter().map(|g| g * i).collect()
    };
    Ok(dopri5(f, u, t, opts)?)
}

/// Flows `u` together with tangent vectors under `∂_t v = i d∇χ(u) v`.
pub fn flow_with_tangents(
    chi: &PolyHamiltonian,
    u: &[Complex64],
    tangents: &[Vec<Complex64>],
    t: f64,
    opts: &FlowOptions,
) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>), FlowError> {
    let n = chi.lattice().len();
    if u.len() != n {
        return Err(HamiltonError::StateLength { expected: n, got: u.len() }.into());
    }
    if let Some(bad) = tangents.iter().find(|v| v.len() != n) {
        return Err(HamiltonError::StateLength { expected: n, got: bad.len() }.into());
    }
    let mut y0 = u.to_vec();
    for v in tangents {
        y0.extend_from_slice(v);
    }
    let i = Complex64::i();
    let f = |y: &[Complex64]| -> Vec<Complex64> {
        let base = &y[..n];
        let mut out: Vec<Complex64> = chi.gradient(base).expect("length checked").into_iter().map(|g| g * i).collect();
        for chunk in y[n..].chunks(n) {
            out.extend(chi.gradient_directional(base, chunk).expect("length checked").into_iter().map(|g| g * i));
        }
        out
    };
    let y = dopri5(f, &y0, t, opts)?;
    let end = y[..n].to_vec();
    let tans = y[n..].chunks(n).map(|c| c.to_vec()).collect();
    Ok((end, tans))
}

/// Real Jacobian of `Φ^t_χ` at `u` in coordinates `(Re u, Im u)`.
pub fn flow_jacobian(
    chi: &PolyHamiltonian,
    u: &[Complex64],
    t: f64,
    opts: &FlowOptions,
) -> Result<(Vec<Complex64>, DMatrix<f64>), FlowError> {
    let n = u.len();
    let mut basis = Vec::with_capacity(2 * n);
    for unit in [Complex64::new(1.0, 0.0), Complex64::i()] {
        for k in 0..n {
            let mut v = vec![Complex64::default(); n];
            v[k] = unit;
            basis.push(v);
        }
    }
    let (end, tans) = flow_with_tangents(chi, u, &basis, t, opts)?;
    Ok((end, tangents_to_matrix(&tans)))
}

pub(crate) fn tangents_to_matrix(tans: &[Vec<Complex64>]) -> DMatrix<f64> {
    let n = tans.first().map(|v| v.len()).unwrap_or(0);
    let mut m = DMatrix::zeros(2 * n, tans.len());
    for (c, v) in tans.iter().enumerate() {
        for k in 0..n {
            m[(k, c)] = v[k].re;
            m[(n + k, c)] = v[k].im;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::lattice::{real_dot, Lattice};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn tight() -> FlowOptions {
        FlowOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() }
    }

    #[test]
    fn flow_is_invertible_and_preserves_chi() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let l = Arc::new(Lattice::range(1, 5).unwrap());
        let chi = random_hamiltonian(&mut rng, &l, &[3, 4], 12);
        let u = random_state(&mut rng, 5, 0.08);
        let v = flow(&chi, &u, 1.0, &tight()).unwrap();
        let back = flow(&chi, &v, -1.0, &tight()).unwrap();
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
        let (c0, c1) = (chi.evaluate(&u).unwrap(), chi.evaluate(&v).unwrap());
        assert!((c0 - c1).abs() < 1e-10 * (1.0 + c0.abs()));
    }

    #[test]
    fn jacobian_is_symplectic_and_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let l = Arc::new(Lattice::range(1, 4).unwrap());
        let chi = random_hamiltonian(&mut rng, &l, &[3], 8);
        let u = random_state(&mut rng, 4, 0.08);
        let (_, jac) = flow_jacobian(&chi, &u, 1.0, &tight()).unwrap();
        let n = 4;
        // (i a, b) as a real bilinear form
        let mut omega = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for k in 0..n {
            omega[(k, n + k)] = 1.0;
            omega[(n + k, k)] = -1.0;
        }
        let defect = (jac.transpose() * &omega * &jac - &omega).abs().max();
        assert!(defect < 1e-9, "{defect}");

        let v = random_state(&mut rng, 4, 1.0);
        let h = 1e-6;
        let up: Vec<_> = u.iter().zip(&v).map(|(a, b)| a + b * h).collect();
        let um: Vec<_> = u.iter().zip(&v).map(|(a, b)| a - b * h).collect();
        let fp = flow(&chi, &up, 1.0, &tight()).unwrap();
        let fm = flow(&chi, &um, 1.0, &tight()).unwrap();
        let (_, tans) = flow_with_tangents(&chi, &u, std::slice::from_ref(&v), 1.0, &tight()).unwrap();
        for k in 0..n {
            let fd = (fp[k] - fm[k]) / (2.0 * h);
            assert!((fd - tans[0][k]).norm() < 1e-6);
        }
        let w = random_state(&mut rng, 4, 1.0);
        let (_, tw) = flow_with_tangents(&chi, &u, &[v.clone(), w.clone()], 1.0, &tight()).unwrap();
        let itv: Vec<_> = tw[0].iter().map(|z| z * Complex64::i()).collect();
        let iv: Vec<_> = v.iter().map(|z| z * Complex64::i()).collect();
        assert!((real_dot(&itv, &tw[1]) - real_dot(&iv, &w)).abs() < 1e-9);
    }
}
