//! Formal polynomial Hamiltonians with symmetric coefficients.
//!
//! A homogeneous Hamiltonian of degree `r` is
//! `H(u) = Σ_{σ ∈ {±1}^r} Σ_n H^σ_n u_{n_1}^{σ_1} ⋯ u_{n_r}^{σ_r}` with `u^{-1} = conj(u)`.
//! The coefficient tensor is symmetric under simultaneous permutation of
//! `(σ, n)`, so only one canonical key per orbit is stored: the multiset of
//! `(n, σ)` pairs sorted by mode then sign. Evaluation multiplies each stored
//! value by the orbit size `r! / Π (repeat counts)!`.
//!
//! Reality means `H^{-σ}_n = conj(H^σ_n)`; every public constructor keeps it.
//! The gradient is `∇H = 2 ∂_{ū} H` and the Poisson bracket is
//! `{H, K} = (i∇H, ∇K)` for the real scalar product `(u, v) = Σ Re(ū v)`.

mod bracket;
mod flow;

pub use bracket::{poisson_bracket, poisson_bracket_truncated, poisson_with_quadratic_form, poisson_with_z2};
pub use flow::{flow, flow_jacobian, flow_with_tangents, FlowError, FlowOptions};

use crate::lattice::{Lattice, LatticeError, ModeIndex};
use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HamiltonError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("degree {0} is below 3; quadratic parts are carried separately")]
    LowDegree(usize),
    #[error("sign vector has length {signs} but there are {modes} modes")]
    ArityMismatch { signs: usize, modes: usize },
    #[error("self-conjugate monomial {key} needs a real coefficient, got {value}")]
    Reality { key: String, value: Complex64 },
    #[error("reality defect {defect:.3e} exceeds tolerance at {key}")]
    RealityDefect { key: String, defect: f64 },
    #[error("duplicate key {0} in input")]
    Duplicate(String),
    #[error("the two Hamiltonians live on different lattices")]
    LatticeMismatch,
    #[error("state length {got} does not match lattice size {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("{0}")]
    Format(String),
}

/// Sign of a slot: `Plus` selects `u`, `Minus` selects `conj(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> i32 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }

    pub fn from_value(v: i32) -> Option<Self> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        }
    }
}

/// A slot code packs a lattice id and a sign: `2 * id + (sign == Plus)`.
/// Sorting codes sorts by mode, then `Minus` before `Plus`.
pub type Code = u32;

/// Canonical key: sorted slot codes.
pub type Key = SmallVec<[Code; 8]>;

pub fn code(id: usize, sign: Sign) -> Code {
    (id as Code) << 1 | (sign == Sign::Plus) as Code
}

pub fn decode(c: Code) -> (usize, Sign) {
    ((c >> 1) as usize, if c & 1 == 1 { Sign::Plus } else { Sign::Minus })
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Orbit size `r! / Π m_i!` of a sorted key.
pub fn multiplicity(key: &[Code]) -> f64 {
    let mut denom = 1.0;
    let mut run = 1usize;
    for w in key.windows(2) {
        if w[0] == w[1] {
            run += 1;
            denom *= run as f64;
        } else {
            run = 1;
        }
    }
    factorial(key.len()) / denom
}

/// Key of the conjugate monomial.
pub fn conjugate_key(key: &[Code]) -> Key {
    let mut k: Key = key.iter().map(|c| c ^ 1).collect();
    k.sort_unstable();
    k
}

/// Signed frequency sum `Σ σ_j ω_{n_j}` of a key.
pub fn divisor(key: &[Code], omega: &[f64]) -> f64 {
    key.iter()
        .map(|&c| {
            let (id, s) = decode(c);
            s.value() as f64 * omega[id]
        })
        .sum()
}

pub(crate) fn merge(a: &[Code], b: &[Code]) -> Key {
    let mut out = Key::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// A diagonal quadratic Hamiltonian `Z₂(u) = ½ Σ ω_n |u_n|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticDiagonal {
    pub omega: Vec<f64>,
}

impl QuadraticDiagonal {
    pub fn new(omega: Vec<f64>) -> Self {
        Self { omega }
    }

    pub fn evaluate(&self, u: &[Complex64]) -> f64 {
        0.5 * self.omega.iter().zip(u).map(|(w, z)| w * z.norm_sqr()).sum::<f64>()
    }

    pub fn gradient(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.omega.iter().zip(u).map(|(w, z)| z * *w).collect()
    }
}

/// A real polynomial Hamiltonian with homogeneous parts of degree at least 3.
#[derive(Clone, Debug)]
pub struct PolyHamiltonian {
    lattice: Arc<Lattice>,
    terms: BTreeMap<usize, FxHashMap<Key, Complex64>>,
}

impl PartialEq for PolyHamiltonian {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.sorted_terms() == other.sorted_terms()
    }
}

impl PolyHamiltonian {
    pub fn new(lattice: Arc<Lattice>) -> Self {
        Self { lattice, terms: BTreeMap::new() }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn key_for(&self, signs: &[Sign], modes: &[ModeIndex]) -> Result<Key, HamiltonError> {
        if signs.len() != modes.len() {
            return Err(HamiltonError::ArityMismatch { signs: signs.len(), modes: modes.len() });
        }
        let mut key = Key::with_capacity(modes.len());
        for (s, m) in signs.iter().zip(modes) {
            key.push(code(self.lattice.require(m)?, *s));
        }
        key.sort_unstable();
        Ok(key)
    }

    pub fn describe_key(&self, key: &[Code]) -> String {
        let parts: Vec<String> = key
            .iter()
            .map(|&c| {
                let (id, s) = decode(c);
                format!("({},{})", self.lattice.mode(id), if s == Sign::Plus { "+" } else { "-" })
            })
            .collect();
        format!("[{}]", parts.join(","))
    }

    /// Adds `c` to the symmetric coefficient at `(σ, n)` and `conj(c)` at `(-σ, n)`.
    pub fn add_monomial(
        &mut self,
        signs: &[Sign],
        modes: &[ModeIndex],
        c: Complex64,
    ) -> Result<(), HamiltonError> {
        if modes.len() < 3 {
            return Err(HamiltonError::LowDegree(modes.len()));
        }
        let key = self.key_for(signs, modes)?;
        let conj = conjugate_key(&key);
        if conj == key {
            if c.im.abs() > 1e-14 * c.norm().max(1.0) {
                return Err(HamiltonError::Reality { key: self.describe_key(&key), value: c });
            }
            self.add_raw(key, Complex64::new(c.re, 0.0));
        } else {
            self.add_raw(key, c);
            self.add_raw(conj, c.conj());
        }
        Ok(())
    }

    /// Symmetric coefficient `H^σ_n` (zero when absent).
    pub fn coefficient(&self, signs: &[Sign], modes: &[ModeIndex]) -> Result<Complex64, HamiltonError> {
        let key = self.key_for(signs, modes)?;
        Ok(self.get(&key))
    }

    pub fn get(&self, key: &[Code]) -> Complex64 {
        self.terms
            .get(&key.len())
            .and_then(|t| t.get(key))
            .copied()
            .unwrap_or_default()
    }

    /// Raw accumulation without reality bookkeeping; callers keep the pair.
    pub(crate) fn add_raw(&mut self, key: Key, c: Complex64) {
        *self.terms.entry(key.len()).or_default().entry(key).or_default() += c;
    }

    pub(crate) fn set_raw(&mut self, key: Key, c: Complex64) {
        self.terms.entry(key.len()).or_default().insert(key, c);
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.terms.iter().filter(|(_, t)| !t.is_empty()).map(|(d, _)| *d).collect()
    }

    pub fn nnz(&self) -> usize {
        self.terms.values().map(|t| t.len()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|t| t.values().all(|c| *c == Complex64::default()))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Key, &Complex64)> {
        self.terms.values().flat_map(|t| t.iter())
    }

    pub fn terms_of_degree(&self, d: usize) -> impl Iterator<Item = (&Key, &Complex64)> {
        self.terms.get(&d).into_iter().flat_map(|t| t.iter())
    }

    /// Terms in canonical order, for output and comparisons.
    pub fn sorted_terms(&self) -> Vec<(Key, Complex64)> {
        let mut v: Vec<(Key, Complex64)> = self
            .terms()
            .filter(|(_, c)| **c != Complex64::default())
            .map(|(k, c)| (k.clone(), *c))
            .collect();
        v.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn degree_part(&self, d: usize) -> Self {
        let mut out = Self::new(self.lattice.clone());
        if let Some(t) = self.terms.get(&d) {
            out.terms.insert(d, t.clone());
        }
        out
    }

    pub fn filter(&self, mut keep: impl FnMut(&Key, &Complex64) -> bool) -> Self {
        let mut out = Self::new(self.lattice.clone());
        for (k, c) in self.terms() {
            if keep(k, c) {
                out.set_raw(k.clone(), *c);
            }
        }
        out
    }

    pub fn map_coefficients(&self, mut f: impl FnMut(&Key, Complex64) -> Complex64) -> Self {
        let mut out = Self::new(self.lattice.clone());
        for (k, c) in self.terms() {
            out.set_raw(k.clone(), f(k, *c));
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_coefficients(|_, c| c * s)
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: f64) -> Result<(), HamiltonError> {
        if !Arc::ptr_eq(&self.lattice, &other.lattice) && self.lattice != other.lattice {
            return Err(HamiltonError::LatticeMismatch);
        }
        for (k, c) in other.terms() {
            self.add_raw(k.clone(), c * s);
        }
        Ok(())
    }

    /// Drops stored zeros.
    pub fn prune(&mut self) {
        for t in self.terms.values_mut() {
            t.retain(|_, c| *c != Complex64::default());
        }
        self.terms.retain(|_, t| !t.is_empty());
    }

    /// `max |H^{-σ}_n - conj(H^σ_n)|` over stored keys.
    pub fn reality_defect(&self) -> f64 {
        self.terms()
            .map(|(k, c)| (self.get(&conjugate_key(k)) - c.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Sup of absolute coefficients.
    pub fn max_abs(&self) -> f64 {
        self.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }

    /// `Σ mult · |coefficient|`, the value of `H` on the all-ones modulus state.
    pub fn l1_mass(&self) -> f64 {
        self.terms().map(|(k, c)| multiplicity(k) * c.norm()).sum()
    }

    fn check_state(&self, u: &[Complex64]) -> Result<(), HamiltonError> {
        if u.len() != self.lattice.len() {
            return Err(HamiltonError::StateLength { expected: self.lattice.len(), got: u.len() });
        }
        Ok(())
    }

    /// Full complex value; the imaginary part vanishes up to rounding for real Hamiltonians.
    pub fn evaluate_complex(&self, u: &[Complex64]) -> Result<Complex64, HamiltonError> {
        self.check_state(u)?;
        let ubar: Vec<Complex64> = u.iter().map(|z| z.conj()).collect();
        let mut acc = Complex64::default();
        for (k, c) in self.terms() {
            let mut p = Complex64::new(multiplicity(k), 0.0) * c;
            for &code in k.iter() {
                let (id, s) = decode(code);
                p *= if s == Sign::Plus { u[id] } else { ubar[id] };
            }
            acc += p;
        }
        Ok(acc)
    }

    pub fn evaluate(&self, u: &[Complex64]) -> Result<f64, HamiltonError> {
        Ok(self.evaluate_complex(u)?.re)
    }

    /// `(∇H)_k = 2 ∂H/∂ū_k`.
    pub fn gradient(&self, u: &[Complex64]) -> Result<Vec<Complex64>, HamiltonError> {
        self.check_state(u)?;
        let ubar: Vec<Complex64> = u.iter().map(|z| z.conj()).collect();
        let mut g = vec![Complex64::default(); u.len()];
        let mut slots: SmallVec<[Complex64; 8]> = SmallVec::new();
        for (k, c) in self.terms() {
            if !k.iter().any(|&code| code & 1 == 0) {
                continue;
            }
            slots.clear();
            slots.extend(k.iter().map(|&code| {
                let (id, s) = decode(code);
                if s == Sign::Plus {
                    u[id]
                } else {
                    ubar[id]
                }
            }));
            let pref = c * (2.0 * multiplicity(k));
            for (s, &code) in k.iter().enumerate() {
                if code & 1 == 1 {
                    continue;
                }
                // repeated slots are visited once each, which produces the power rule
                let mut p = pref;
                for (t, x) in slots.iter().enumerate() {
                    if t != s {
                        p *= x;
                    }
                }
                g[(code >> 1) as usize] += p;
            }
        }
        Ok(g)
    }

    /// Directional derivative `d(∇H)(u) · v` of the gradient.
    pub fn gradient_directional(
        &self,
        u: &[Complex64],
        v: &[Complex64],
    ) -> Result<Vec<Complex64>, HamiltonError> {
        self.check_state(u)?;
        self.check_state(v)?;
        let mut g = vec![Complex64::default(); u.len()];
        let mut x: SmallVec<[Complex64; 8]> = SmallVec::new();
        let mut dx: SmallVec<[Complex64; 8]> = SmallVec::new();
        for (k, c) in self.terms() {
            x.clear();
            dx.clear();
            for &code in k.iter() {
                let (id, s) = decode(code);
                if s == Sign::Plus {
                    x.push(u[id]);
                    dx.push(v[id]);
                } else {
                    x.push(u[id].conj());
                    dx.push(v[id].conj());
                }
            }
            let pref = c * (2.0 * multiplicity(k));
            for (s, &code) in k.iter().enumerate() {
                if code & 1 == 1 {
                    continue;
                }
                let mut acc = Complex64::default();
                for t in 0..x.len() {
                    if t == s {
                        continue;
                    }
                    let mut p = dx[t];
                    for (q, xq) in x.iter().enumerate() {
                        if q != s && q != t {
                            p *= xq;
                        }
                    }
                    acc += p;
                }
                g[(code >> 1) as usize] += pref * acc;
            }
        }
        Ok(g)
    }

    /// `‖H‖_{q,α} = sup_keys hmean_ν ⟨Σ ν_ℓ ⋄ n_ℓ⟩^α · Π ⟨n_j⟩^q · |H^σ_n|`.
    pub fn norm(&self, q: f64, alpha: f64) -> f64 {
        let mut cache: FxHashMap<SmallVec<[u32; 8]>, f64> = FxHashMap::default();
        let mut best: f64 = 0.0;
        for (k, c) in self.terms() {
            let a = c.norm();
            if a == 0.0 {
                continue;
            }
            let ids: SmallVec<[u32; 8]> = k.iter().map(|c| c >> 1).collect();
            let w = *cache.entry(ids.clone()).or_insert_with(|| {
                let modes: Vec<ModeIndex> = ids.iter().map(|&i| self.lattice.mode(i as usize)).collect();
                key_weight(&modes, q, alpha)
            });
            best = best.max(w * a);
        }
        best
    }

    pub fn to_document(&self) -> HamiltonianDocument {
        let terms = self
            .sorted_terms()
            .into_iter()
            .map(|(k, c)| TermEntry {
                degree: k.len(),
                key: k
                    .iter()
                    .map(|&code| {
                        let (id, s) = decode(code);
                        (self.lattice.mode(id), s.value())
                    })
                    .collect(),
                re: c.re,
                im: c.im,
            })
            .collect();
        HamiltonianDocument { lattice: self.lattice.modes().to_vec(), terms }
    }

    /// Loads a document, rejecting degree below 3, duplicates and reality violations.
    pub fn from_document(doc: &HamiltonianDocument, tol: f64) -> Result<Self, HamiltonError> {
        let lattice = Arc::new(Lattice::from_modes(doc.lattice.clone())?);
        let mut h = Self::new(lattice);
        for t in &doc.terms {
            if t.degree < 3 {
                return Err(HamiltonError::LowDegree(t.degree));
            }
            if t.key.len() != t.degree {
                return Err(HamiltonError::Format(format!(
                    "degree {} but key has {} entries",
                    t.degree,
                    t.key.len()
                )));
            }
            let mut signs = Vec::with_capacity(t.degree);
            let mut modes = Vec::with_capacity(t.degree);
            for (m, s) in &t.key {
                signs.push(Sign::from_value(*s).ok_or_else(|| HamiltonError::Format(format!("bad sign {s}")))?);
                modes.push(*m);
            }
            let key = h.key_for(&signs, &modes)?;
            if h.get(&key) != Complex64::default() {
                return Err(HamiltonError::Duplicate(h.describe_key(&key)));
            }
            h.set_raw(key, Complex64::new(t.re, t.im));
        }
        let scale = h.max_abs().max(1e-300);
        for (k, c) in h.terms() {
            let defect = (h.get(&conjugate_key(k)) - c.conj()).norm();
            if defect > tol * scale {
                return Err(HamiltonError::RealityDefect { key: h.describe_key(k), defect });
            }
        }
        Ok(h)
    }
}

/// `hmean_ν ⟨Σ ν_ℓ ⋄ n_ℓ⟩^α · Π ⟨n_j⟩^q` for one list of modes.
pub fn key_weight(modes: &[ModeIndex], q: f64, alpha: f64) -> f64 {
    let prod: f64 = modes.iter().map(|m| m.bracket().powf(q)).product();
    if alpha == 0.0 {
        return prod;
    }
    let d = modes.first().map(|m| m.dim()).unwrap_or(1);
    let bits = d * modes.len();
    let count = 1usize << bits;
    let mut inv_sum = 0.0;
    let mut sum = [0i64; 2];
    for mask in 0..count {
        sum[0] = 0;
        sum[1] = 0;
        for (l, m) in modes.iter().enumerate() {
            for (a, &c) in m.coords().iter().enumerate() {
                let bit = (mask >> (l * d + a)) & 1;
                sum[a] += if bit == 1 { -(c as i64) } else { c as i64 };
            }
        }
        let n2 = (sum[0] * sum[0] + sum[1] * sum[1]) as f64;
        inv_sum += (1.0 + n2).powf(-alpha / 2.0);
    }
    count as f64 / inv_sum * prod
}

/// One serialized coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub degree: usize,
    pub key: Vec<(ModeIndex, i32)>,
    pub re: f64,
    pub im: f64,
}

/// A serialized Hamiltonian together with its lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianDocument {
    pub lattice: Vec<ModeIndex>,
    pub terms: Vec<TermEntry>,
}
