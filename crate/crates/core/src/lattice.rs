//! Truncated index lattices, Japanese brackets and weighted sequence norms.
//!
//! Modes are labelled by integer vectors in dimension one or two. A [`Lattice`]
//! is a finite, lexicographically ordered set of modes; every other module
//! stores per-mode data in vectors aligned with the lattice ordering.

use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension {0} is not supported (expected 1 or 2)")]
    BadDimension(usize),
    #[error("empty lattice")]
    Empty,
    #[error("duplicate mode {0}")]
    Duplicate(ModeIndex),
    #[error("mode {0} is not in the lattice")]
    Unknown(ModeIndex),
    #[error("state has {got} entries but the lattice has {expected}")]
    Length { expected: usize, got: usize },
    #[error("harmonic mean of an empty collection")]
    EmptyMean,
    #[error("harmonic mean needs positive entries, got {0}")]
    NonPositive(f64),
}

/// `⟨x⟩ = sqrt(1 + |x|²)`.
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Harmonic mean `(|S|⁻¹ Σ 1/x)⁻¹` of strictly positive numbers.
pub fn hmean(xs: &[f64]) -> Result<f64, LatticeError> {
    if xs.is_empty() {
        return Err(LatticeError::EmptyMean);
    }
    let mut acc = 0.0;
    for &x in xs {
        if !(x > 0.0) {
            return Err(LatticeError::NonPositive(x));
        }
        acc += 1.0 / x;
    }
    Ok(xs.len() as f64 / acc)
}

/// An integer mode label in dimension one or two.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<i32>", try_from = "Vec<i32>")]
pub struct ModeIndex {
    coords: [i32; 2],
    dim: u8,
}

impl ModeIndex {
    pub fn d1(n: i32) -> Self {
        Self { coords: [n, 0], dim: 1 }
    }

    pub fn d2(n1: i32, n2: i32) -> Self {
        Self { coords: [n1, n2], dim: 2 }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    /// First coordinate; the mode number in dimension one.
    pub fn first(&self) -> i32 {
        self.coords[0]
    }

    pub fn norm_sq(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn bracket(&self) -> f64 {
        (1.0 + self.norm_sq() as f64).sqrt()
    }

    pub fn sup_norm(&self) -> i32 {
        self.coords().iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl From<ModeIndex> for Vec<i32> {
    fn from(m: ModeIndex) -> Self {
        m.coords().to_vec()
    }
}

impl TryFrom<Vec<i32>> for ModeIndex {
    type Error = LatticeError;
    fn try_from(v: Vec<i32>) -> Result<Self, Self::Error> {
        match v.as_slice() {
            [n] => Ok(Self::d1(*n)),
            [a, b] => Ok(Self::d2(*a, *b)),
            _ => Err(LatticeError::BadDimension(v.len())),
        }
    }
}

impl fmt::Debug for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dim {
            1 => write!(f, "{}", self.coords[0]),
            _ => write!(f, "({},{})", self.coords[0], self.coords[1]),
        }
    }
}

/// A finite ordered set of modes of a single dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    modes: Vec<ModeIndex>,
    ids: FxHashMap<ModeIndex, usize>,
    dim: usize,
}

impl Lattice {
    pub fn from_modes(mut modes: Vec<ModeIndex>) -> Result<Self, LatticeError> {
        let first = modes.first().ok_or(LatticeError::Empty)?;
        let dim = first.dim();
        if let Some(m) = modes.iter().find(|m| m.dim() != dim) {
            return Err(LatticeError::BadDimension(m.dim()));
        }
        modes.sort();
        let mut ids = FxHashMap::default();
        for (i, m) in modes.iter().enumerate() {
            if ids.insert(*m, i).is_some() {
                return Err(LatticeError::Duplicate(*m));
            }
        }
        Ok(Self { modes, ids, dim })
    }

    /// Modes `lo..=hi` on the line.
    pub fn range(lo: i32, hi: i32) -> Result<Self, LatticeError> {
        Self::from_modes((lo..=hi).map(ModeIndex::d1).collect())
    }

    /// Modes with `|n|∞ ≤ radius` in the plane.
    pub fn square(radius: i32) -> Result<Self, LatticeError> {
        let mut v = Vec::new();
        for a in -radius..=radius {
            for b in -radius..=radius {
                v.push(ModeIndex::d2(a, b));
            }
        }
        Self::from_modes(v)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn mode(&self, id: usize) -> ModeIndex {
        self.modes[id]
    }

    pub fn id(&self, m: &ModeIndex) -> Option<usize> {
        self.ids.get(m).copied()
    }

    pub fn require(&self, m: &ModeIndex) -> Result<usize, LatticeError> {
        self.id(m).ok_or(LatticeError::Unknown(*m))
    }

    /// `⟨n⟩` for every mode, in lattice order.
    pub fn brackets(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.bracket()).collect()
    }

    /// `⟨n⟩^{2s}` for every mode, in lattice order.
    pub fn weights(&self, s: f64) -> Vec<f64> {
        self.modes.iter().map(|m| m.bracket().powf(2.0 * s)).collect()
    }

    /// Largest Euclidean mode norm.
    pub fn radius(&self) -> f64 {
        self.modes.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

/// `‖u‖_{h^s} = (Σ ⟨n⟩^{2s} |u_n|²)^{1/2}`.
pub fn hs_norm(lattice: &Lattice, u: &[Complex64], s: f64) -> Result<f64, LatticeError> {
    if u.len() != lattice.len() {
        return Err(LatticeError::Length { expected: lattice.len(), got: u.len() });
    }
    Ok(hs_norm_unchecked(lattice, u, s))
}

pub(crate) fn hs_norm_unchecked(lattice: &Lattice, u: &[Complex64], s: f64) -> f64 {
    lattice
        .modes()
        .iter()
        .zip(u)
        .map(|(m, z)| m.bracket().powf(2.0 * s) * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Real scalar product `(u, v) = Σ Re(conj(u_k) v_k)`.
pub fn real_dot(u: &[Complex64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// One entry of a serialized state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub index: ModeIndex,
    pub re: f64,
    pub im: f64,
}

/// A lattice-aligned complex state serialized as a list of `{index, re, im}`.
pub fn state_to_entries(lattice: &Lattice, u: &[Complex64]) -> Vec<StateEntry> {
    lattice
        .modes()
        .iter()
        .zip(u)
        .map(|(m, z)| StateEntry { index: *m, re: z.re, im: z.im })
        .collect()
}

/// Inverse of [`state_to_entries`]; modes not listed are zero.
pub fn state_from_entries(
    lattice: &Lattice,
    entries: &[StateEntry],
) -> Result<Vec<Complex64>, LatticeError> {
    let mut u = vec![Complex64::new(0.0, 0.0); lattice.len()];
    for e in entries {
        let id = lattice.require(&e.index)?;
        u[id] = Complex64::new(e.re, e.im);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bracket_values() {
        assert_eq!(japanese(0.0), 1.0);
        assert!((ModeIndex::d2(3, 4).bracket() - 26f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hmean_of_two() {
        assert!((hmean(&[1.0, 3.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!(hmean(&[]).is_err());
        assert!(hmean(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn hs_norm_single_mode() {
        let lat = Lattice::range(0, 5).unwrap();
        let mut u = vec![Complex64::new(0.0, 0.0); 6];
        u[3] = Complex64::new(1.0, 0.0);
        let got = hs_norm(&lat, &u, 1.0).unwrap();
        assert!((got - 10f64.sqrt()).abs() < 1e-14);
        assert!(hs_norm(&lat, &u[..2], 1.0).is_err());
    }

    #[test]
    fn square_lattice_order() {
        let lat = Lattice::square(1).unwrap();
        assert_eq!(lat.len(), 9);
        assert_eq!(lat.mode(0), ModeIndex::d2(-1, -1));
        assert_eq!(lat.id(&ModeIndex::d2(0, 0)), Some(4));
    }

    #[test]
    fn state_json_round_trip() {
        let lat = Lattice::square(1).unwrap();
        let u: Vec<_> = (0..9).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
        let s = serde_json::to_string(&state_to_entries(&lat, &u)).unwrap();
        let back: Vec<StateEntry> = serde_json::from_str(&s).unwrap();
        assert_eq!(state_from_entries(&lat, &back).unwrap(), u);
    }

    proptest! {
        #[test]
        fn hmean_between_min_and_max(xs in proptest::collection::vec(0.01f64..100.0, 1..20)) {
            let h = hmean(&xs).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(0.0, f64::max);
            prop_assert!(h >= lo * (1.0 - 1e-12) && h <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn hs_norm_monotone_in_s(re in proptest::collection::vec(-1.0f64..1.0, 7), s in 0.0f64..2.0) {
            let lat = Lattice::range(-3, 3).unwrap();
            let u: Vec<_> = re.iter().map(|&x| Complex64::new(x, 0.5 * x)).collect();
            prop_assert!(hs_norm(&lat, &u, s).unwrap() <= hs_norm(&lat, &u, s + 0.5).unwrap() + 1e-14);
        }
    }
}
