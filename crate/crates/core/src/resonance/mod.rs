//! Small divisors: frequency families, non-resonance certificates and random spectra.
//!
//! A query is a canonical key `(σ, n)` as used by [`crate::hamilton`]. Its divisor is
//! `Ω = Σ σ_j ω_{n_j}` and its scale is
//! `κ(σ, n) = min{⟨n_j⟩ : Σ_{k: ω_{n_k} = ω_{n_j}} σ_k ≠ 0}`, which is `+∞`
//! exactly when the monomial is paired (every frequency group carries as many
//! `+` as `-` signs). Paired monomials commute with all super-actions and are
//! never small divisors.

mod bootstrap;
mod certificate;
mod genericity;

pub use bootstrap::{
    bootstrap_strong, fit_accumulation, measure_weak, Accumulation, BootstrapCertificate, BootstrapLevel,
    WeakConstants,
};
pub use certificate::{
    fit_power_law, verify_limited_nonresonance, verify_strong_nonresonance, verify_strong_resumable, CertificateState, KappaBucket,
    NonResonanceCertificate, PowerLawFit, QueryRecord, VerifyOptions,
};
pub use genericity::{genericity_monte_carlo, GenericityOptions, GenericityReport, PotentialLaw, SampleSummary, MAX_REJECTIONS};

use crate::hamilton::{decode, Code, Sign};
use crate::lattice::{Lattice, LatticeError, ModeIndex};
use crate::spectra::SpectraError;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResonanceError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("frequency vector has {got} entries for a lattice of {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite frequency at {0}")]
    NonFinite(ModeIndex),
    #[error("weak non-resonance fails: {0}")]
    WeakFails(String),
    #[error("accumulation fit failed: {0}")]
    Accumulation(String),
    #[error("conditioning failed after {0} rejections")]
    Conditioning(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Relative tolerance used to group equal frequencies.
pub const GROUP_TOL: f64 = 1e-9;

/// Frequencies on a lattice with their equal-frequency groups.
#[derive(Clone, Debug)]
pub struct FrequencyFamily {
    pub label: String,
    lattice: Arc<Lattice>,
    omega: Vec<f64>,
    /// Integer values when every frequency is an exact integer; enables exact zero tests.
    exact: Option<Vec<i64>>,
    groups: Vec<usize>,
}

impl FrequencyFamily {
    pub fn new(label: impl Into<String>, lattice: Arc<Lattice>, omega: Vec<f64>) -> Result<Self, ResonanceError> {
        if omega.len() != lattice.len() {
            return Err(ResonanceError::Length { expected: lattice.len(), got: omega.len() });
        }
        if let Some(i) = omega.iter().position(|w| !w.is_finite()) {
            return Err(ResonanceError::NonFinite(lattice.mode(i)));
        }
        let exact = if omega.iter().all(|w| w.fract() == 0.0 && w.abs() < 2f64.powi(50)) {
            Some(omega.iter().map(|w| *w as i64).collect())
        } else {
            None
        };
        let groups = group_frequencies(&omega);
        Ok(Self { label: label.into(), lattice, omega, exact, groups })
    }

    /// `ω_n = sqrt(n² + m)` on `n = 1..=range`.
    pub fn klein_gordon(mass: f64, range: i32) -> Result<Self, ResonanceError> {
        if !(mass >= 0.0) {
            return Err(ResonanceError::Invalid(format!("mass {mass} must be non-negative")));
        }
        let lattice = Arc::new(Lattice::range(1, range)?);
        let omega = lattice.modes().iter().map(|m| ((m.first() as f64).powi(2) + mass).sqrt()).collect();
        Self::new(format!("klein-gordon m={mass}"), lattice, omega)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn group(&self, id: usize) -> usize {
        self.groups[id]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn max_abs(&self) -> f64 {
        self.omega.iter().map(|w| w.abs()).fold(0.0, f64::max)
    }

    /// Ids of every mode sharing the frequency of `id`.
    pub fn group_members(&self, id: usize) -> Vec<usize> {
        let g = self.groups[id];
        (0..self.groups.len()).filter(|&k| self.groups[k] == g).collect()
    }

    /// `Σ σ_j ω_{n_j}`.
    pub fn divisor(&self, key: &[Code]) -> f64 {
        crate::hamilton::divisor(key, &self.omega)
    }

    /// Exact integer divisor when available.
    pub fn exact_divisor(&self, key: &[Code]) -> Option<i64> {
        self.exact.as_ref().map(|w| {
            key.iter()
                .map(|&c| {
                    let (id, s) = decode(c);
                    s.value() as i64 * w[id]
                })
                .sum()
        })
    }

    /// `κ(σ, n)`, `None` for `+∞`.
    pub fn kappa(&self, key: &[Code]) -> Option<f64> {
        self.kappa_mode(key).map(|id| self.lattice.mode(id).bracket())
    }

    /// Mode id attaining `κ`.
    pub fn kappa_mode(&self, key: &[Code]) -> Option<usize> {
        let mut best: Option<(i64, usize)> = None;
        for &c in key {
            let (id, _) = decode(c);
            let g = self.groups[id];
            let sum: i32 = key
                .iter()
                .filter(|&&c2| self.groups[decode(c2).0] == g)
                .map(|&c2| decode(c2).1.value())
                .sum();
            if sum != 0 {
                let n2 = self.lattice.mode(id).norm_sq();
                if best.is_none_or(|(b, _)| n2 < b) {
                    best = Some((n2, id));
                }
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn is_paired(&self, key: &[Code]) -> bool {
        self.kappa_mode(key).is_none()
    }

    /// Near-resonance floor `1e-12 · r · max|ω|`.
    pub fn floor(&self, arity: usize) -> f64 {
        1e-12 * arity as f64 * self.max_abs().max(1.0)
    }
}

fn group_frequencies(omega: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..omega.len()).collect();
    order.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]));
    let mut groups = vec![0; omega.len()];
    let mut g = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 {
            let prev = omega[order[pos - 1]];
            if (omega[i] - prev).abs() > GROUP_TOL * omega[i].abs().max(1.0) {
                g += 1;
            }
        }
        groups[i] = g;
    }
    groups
}

/// Builds a key from `(mode, sign)` pairs.
pub fn key_of(lattice: &Lattice, slots: &[(ModeIndex, Sign)]) -> Result<crate::hamilton::Key, ResonanceError> {
    let mut k: crate::hamilton::Key = slots
        .iter()
        .map(|(m, s)| lattice.require(m).map(|id| crate::hamilton::code(id, *s)))
        .collect::<Result<_, _>>()?;
    k.sort_unstable();
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ModeIndex as M;

    #[test]
    fn kappa_and_pairing() {
        let f = FrequencyFamily::klein_gordon(1.0, 6).unwrap();
        let l = f.lattice().clone();
        let paired = key_of(&l, &[(M::d1(2), Sign::Plus), (M::d1(2), Sign::Minus), (M::d1(5), Sign::Plus), (M::d1(5), Sign::Minus)]).unwrap();
        assert!(f.is_paired(&paired));
        assert_eq!(f.kappa(&paired), None);
        let k = key_of(&l, &[(M::d1(2), Sign::Plus), (M::d1(2), Sign::Minus), (M::d1(5), Sign::Plus), (M::d1(3), Sign::Minus)]).unwrap();
        assert!((f.kappa(&k).unwrap() - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_groups_pair_across_modes() {
        // ω_n = n² on -3..3 groups ±n together
        let l = Arc::new(Lattice::range(-3, 3).unwrap());
        let w = l.modes().iter().map(|m| (m.first() * m.first()) as f64).collect();
        let f = FrequencyFamily::new("free", l.clone(), w).unwrap();
        assert!(f.is_exact());
        let k = key_of(&l, &[(M::d1(2), Sign::Plus), (M::d1(-2), Sign::Minus)]).unwrap();
        assert!(f.is_paired(&k));
        assert_eq!(f.exact_divisor(&k), Some(0));
    }

    #[test]
    fn massless_klein_gordon_is_exact() {
        assert!(FrequencyFamily::klein_gordon(0.0, 4).unwrap().is_exact());
        assert!(!FrequencyFamily::klein_gordon(1.0, 4).unwrap().is_exact());
    }
}
