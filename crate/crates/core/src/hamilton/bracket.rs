//! Symbolic Poisson brackets on symmetric coefficient maps.
//!
//! For canonical storage the bracket coefficient at an output key `c''` is
//! `S(c'') / mult(c'')`, where
//! `S(c'') = 2i r r' Σ_k Σ mult(a) mult(b) (H[a+(k,-)] K[b+(k,+)] - H[a+(k,+)] K[b+(k,-)])`
//! runs over reduced keys `a`, `b` with `a ∪ b = c''`. Partners are found with an
//! inverted index from slot code to the reduced keys of `K`.

use super::{decode, merge, multiplicity, Code, HamiltonError, Key, PolyHamiltonian, QuadraticDiagonal, Sign};
use crate::lattice::ModeIndex;
use num_complex::Complex64;
use rustc_hash::FxHashMap;
use std::sync::Arc;

fn remove_one(key: &[Code], pos: usize) -> Key {
    let mut k = Key::with_capacity(key.len() - 1);
    k.extend_from_slice(&key[..pos]);
    k.extend_from_slice(&key[pos + 1..]);
    k
}

/// `{H, K}` with outputs restricted to keys whose modes all satisfy `keep`.
/// Returns the bracket and the total absolute coefficient mass that was dropped.
pub fn poisson_bracket_truncated(
    h: &PolyHamiltonian,
    k: &PolyHamiltonian,
    keep: Option<&dyn Fn(ModeIndex) -> bool>,
) -> Result<(PolyHamiltonian, f64), HamiltonError> {
    if !Arc::ptr_eq(h.lattice(), k.lattice()) && h.lattice() != k.lattice() {
        return Err(HamiltonError::LatticeMismatch);
    }
    let lattice = h.lattice().clone();
    let allowed: Option<Vec<bool>> = keep.map(|f| lattice.modes().iter().map(|m| f(*m)).collect());
    let mut acc: FxHashMap<Key, Complex64> = FxHashMap::default();

    for (&rk, tk) in k.terms.iter() {
        // inverted index: slot code -> (reduced key, its multiplicity, coefficient)
        let mut index: FxHashMap<Code, Vec<(Key, f64, Complex64)>> = FxHashMap::default();
        for (key, c) in tk {
            for pos in 0..key.len() {
                if pos > 0 && key[pos] == key[pos - 1] {
                    continue;
                }
                let b = remove_one(key, pos);
                let mb = multiplicity(&b);
                index.entry(key[pos]).or_default().push((b, mb, *c));
            }
        }
        for (&rh, th) in h.terms.iter() {
            let pref = Complex64::new(0.0, 2.0 * rh as f64 * rk as f64);
            for (key, c) in th {
                for pos in 0..key.len() {
                    if pos > 0 && key[pos] == key[pos - 1] {
                        continue;
                    }
                    let slot = key[pos];
                    let (_, sign) = decode(slot);
                    let partner = slot ^ 1;
                    let Some(list) = index.get(&partner) else { continue };
                    let a = remove_one(key, pos);
                    let ma = multiplicity(&a);
                    let s = if sign == Sign::Minus { 1.0 } else { -1.0 };
                    let base = pref * c * (s * ma);
                    for (b, mb, kc) in list {
                        let merged = merge(&a, b);
                        *acc.entry(merged).or_default() += base * kc * *mb;
                    }
                }
            }
        }
    }

    let mut out = PolyHamiltonian::new(lattice.clone());
    let mut dropped = 0.0;
    for (key, s) in acc {
        let v = s / multiplicity(&key);
        if v == Complex64::default() {
            continue;
        }
        if let Some(ok) = &allowed {
            if key.iter().any(|&c| !ok[(c >> 1) as usize]) {
                dropped += v.norm();
                continue;
            }
        }
        out.set_raw(key, v);
    }
    Ok((out, dropped))
}

/// `{H, K}` on the full lattice.
pub fn poisson_bracket(h: &PolyHamiltonian, k: &PolyHamiltonian) -> Result<PolyHamiltonian, HamiltonError> {
    poisson_bracket_truncated(h, k, None).map(|(p, _)| p)
}

/// `{H, Z₂}` for `Z₂ = ½ Σ ω |u|²`: each coefficient times `-i (σ · ω)`.
pub fn poisson_with_z2(h: &PolyHamiltonian, z2: &QuadraticDiagonal) -> PolyHamiltonian {
    h.map_coefficients(|key, c| c * Complex64::new(0.0, -super::divisor(key, &z2.omega)))
}

/// `{H, Σ w |u|²}`: each coefficient times `-2i (σ · w)`.
pub fn poisson_with_quadratic_form(h: &PolyHamiltonian, w: &[f64]) -> PolyHamiltonian {
    h.map_coefficients(|key, c| c * Complex64::new(0.0, -2.0 * super::divisor(key, w)))
}
