//! From weak non-resonance and accumulation to small-divisor bounds in the smallest index.
//!
//! Queries are injective tuples `n_1, …, n_{r⋆}` ordered by `⟨n⟩` with nonzero
//! integer weights `ℓ`, `|ℓ|₁ ≤ r`. Weak non-resonance asks
//! `|k + hμ + Σ ℓ_j ω_{n_j}| ≥ γ ⟨n_{r⋆}⟩^{-α}` for all `k ∈ ℤ`, `|h| ≤ r`;
//! accumulation asks `|ω_n - k_n - μ| ≤ C ⟨n⟩^{-ν}`. Induction on the length
//! of the tuple then gives `|Σ ℓ_j ω_{n_j}| ≥ η ⟨n_1⟩^{-β}` with
//! `(β, η)` updated at each level by the worse of two branches:
//! `(β, η/2)` when the tail index is large, `(αβ/ν, γ (η/(2Cr))^{α/ν})` otherwise.

use super::certificate::fit_power_law;
use super::{FrequencyFamily, ResonanceError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub r: usize,
    pub queries: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accumulation {
    pub c: f64,
    pub nu: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapLevel {
    /// Tuple length certified at this level.
    pub length: usize,
    pub beta: f64,
    pub eta: f64,
    /// Scanned queries of this length handled by each branch.
    pub near_branch: u64,
    pub far_branch: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCertificate {
    pub weak: WeakConstants,
    pub accumulation: Accumulation,
    pub levels: Vec<BootstrapLevel>,
    pub beta: f64,
    pub eta: f64,
    pub scanned: u64,
    /// `min |Σℓω| / (η ⟨n_1⟩^{-β})` over scanned queries; at least 1 when certified.
    pub min_ratio: f64,
    pub failures: u64,
}

impl BootstrapCertificate {
    pub fn certified(&self) -> bool {
        self.failures == 0
    }
}

/// Mode ids sorted by `⟨n⟩`, ties broken by lattice order.
fn ordered_ids(family: &FrequencyFamily) -> Vec<usize> {
    let l = family.lattice();
    let mut ids: Vec<usize> = (0..l.len()).collect();
    ids.sort_by_key(|&i| (l.mode(i).norm_sq(), i));
    ids
}

/// All `ℓ ∈ (ℤ∖{0})^len` with `|ℓ|₁ ≤ r`.
fn weights(len: usize, r: usize) -> Vec<Vec<i64>> {
    fn rec(len: usize, budget: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        let left = (len - cur.len() - 1) as i64;
        for a in 1..=(budget - left) {
            for s in [-1, 1] {
                cur.push(s * a);
                rec(len, budget - a, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = vec![];
    if len <= r {
        rec(len, r as i64, &mut vec![], &mut out);
    }
    out
}

/// Visits every query `(positions in the ⟨n⟩ order, ℓ, Σℓω)` of length `len`.
fn for_each_query(family: &FrequencyFamily, order: &[usize], len: usize, r: usize, mut f: impl FnMut(&[usize], &[i64], f64)) {
    let ws = weights(len, r);
    if ws.is_empty() || len > order.len() {
        return;
    }
    let omega = family.omega();
    let mut pos: Vec<usize> = (0..len).collect();
    let mut ids = vec![0usize; len];
    loop {
        for (k, p) in pos.iter().enumerate() {
            ids[k] = order[*p];
        }
        for l in &ws {
            let x: f64 = l.iter().zip(&ids).map(|(a, &i)| *a as f64 * omega[i]).sum();
            f(&ids, l, x);
        }
        // next combination
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if pos[i] < order.len() - len + i {
                pos[i] += 1;
                for j in i + 1..len {
                    pos[j] = pos[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn dist_to_integers(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Measures `(α, γ)` of weak non-resonance on every query of length `≤ r`.
pub fn measure_weak(family: &FrequencyFamily, r: usize, mu: f64) -> Result<WeakConstants, ResonanceError> {
    if r == 0 {
        return Err(ResonanceError::Invalid("r must be at least 1".into()));
    }
    let order = ordered_ids(family);
    let l = family.lattice();
    let mut minima: std::collections::BTreeMap<i64, (f64, f64)> = Default::default();
    let mut queries = 0u64;
    let mut zero: Option<String> = None;
    for len in 1..=r {
        for_each_query(family, &order, len, r, |ids, ell, x| {
            queries += 1;
            let mut d = f64::INFINITY;
            for h in -(r as i64)..=(r as i64) {
                d = d.min(dist_to_integers(x + h as f64 * mu));
            }
            let last = l.mode(*ids.last().expect("nonempty"));
            if d == 0.0 && zero.is_none() {
                let modes: Vec<String> = ids.iter().map(|&i| l.mode(i).to_string()).collect();
                zero = Some(format!("ℓ = {ell:?} at n = [{}]", modes.join(",")));
            }
            let e = minima.entry(last.norm_sq()).or_insert((last.bracket(), f64::INFINITY));
            e.1 = e.1.min(d);
        });
    }
    if let Some(z) = zero {
        return Err(ResonanceError::WeakFails(z));
    }
    let pts: Vec<(f64, f64)> = minima.values().copied().collect();
    let (gamma, alpha) = fit_power_law(&pts).ok_or_else(|| ResonanceError::WeakFails("no queries".into()))?;
    Ok(WeakConstants { alpha, gamma, mu, r, queries })
}

/// Fits `|ω_n - k_n - μ| ≤ C ⟨n⟩^{-ν}` with `k_n` the nearest integer.
pub fn fit_accumulation(family: &FrequencyFamily, mu: f64) -> Result<Accumulation, ResonanceError> {
    let l = family.lattice();
    let pts: Vec<(f64, f64)> = family
        .omega()
        .iter()
        .enumerate()
        .map(|(i, w)| (l.mode(i).bracket(), dist_to_integers(w - mu)))
        .collect();
    let pos: Vec<(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0).copied().collect();
    if pos.len() < 2 {
        return Err(ResonanceError::Accumulation("fewer than two non-integer frequencies".into()));
    }
    let n = pos.len() as f64;
    let xs: Vec<f64> = pos.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pos.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let nu = if sxx > 0.0 { -sxy / sxx } else { 0.0 };
    if !(nu > 0.0) {
        return Err(ResonanceError::Accumulation(format!("fitted decay exponent {nu} is not positive")));
    }
    let c = pts.iter().map(|(k, a)| a * k.powf(nu)).fold(0.0, f64::max);
    Ok(Accumulation { c, nu, mu })
}

/// Runs the induction on the tuple length and checks the result on every scanned query.
pub fn bootstrap_strong(
    family: &FrequencyFamily,
    weak: &WeakConstants,
    acc: &Accumulation,
    r: usize,
) -> Result<BootstrapCertificate, ResonanceError> {
    if r == 0 || r > weak.r {
        return Err(ResonanceError::Invalid(format!("r = {r} must lie in 1..={}", weak.r)));
    }
    let (alpha, gamma, c, nu) = (weak.alpha, weak.gamma, acc.c, acc.nu);
    let rf = r as f64;
    let order = ordered_ids(family);
    let l = family.lattice();
    let mut levels = vec![BootstrapLevel { length: 1, beta: alpha, eta: gamma, near_branch: 0, far_branch: 0 }];
    for len in 2..=r {
        let prev = levels.last().expect("nonempty").clone();
        let far = (prev.beta, prev.eta / 2.0);
        let near = (alpha * prev.beta / nu, gamma * (prev.eta / (2.0 * c * rf)).powf(alpha / nu));
        let mut lvl = BootstrapLevel {
            length: len,
            beta: far.0.max(near.0),
            eta: far.1.min(near.1),
            near_branch: 0,
            far_branch: 0,
        };
        for_each_query(family, &order, len, r, |ids, _, _| {
            let first = l.mode(ids[0]).bracket();
            let last = l.mode(ids[len - 1]).bracket();
            if 2.0 * c * rf * last.powf(-nu) <= prev.eta * first.powf(-prev.beta) {
                lvl.far_branch += 1;
            } else {
                lvl.near_branch += 1;
            }
        });
        levels.push(lvl);
    }
    let last = levels.last().expect("nonempty");
    let (beta, eta) = (last.beta, last.eta);
    let mut scanned = 0u64;
    let mut failures = 0u64;
    let mut min_ratio = f64::INFINITY;
    for len in 1..=r {
        for_each_query(family, &order, len, r, |ids, _, x| {
            scanned += 1;
            let bound = eta * l.mode(ids[0]).bracket().powf(-beta);
            let ratio = x.abs() / bound;
            min_ratio = min_ratio.min(ratio);
            if ratio < 1.0 {
                failures += 1;
            }
        });
    }
    Ok(BootstrapCertificate {
        weak: weak.clone(),
        accumulation: acc.clone(),
        levels,
        beta,
        eta,
        scanned,
        min_ratio,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_vectors() {
        assert_eq!(weights(1, 3).len(), 6);
        assert_eq!(weights(2, 3).len(), 12);
        assert_eq!(weights(3, 3).len(), 8);
        assert!(weights(4, 3).is_empty());
    }

    #[test]
    fn first_level_is_weak_constants() {
        let f = FrequencyFamily::klein_gordon(1.0, 24).unwrap();
        let weak = measure_weak(&f, 3, 0.0).unwrap();
        let acc = fit_accumulation(&f, 0.0).unwrap();
        assert!((acc.nu - 1.0).abs() < 0.1, "{}", acc.nu);
        let cert = bootstrap_strong(&f, &weak, &acc, 3).unwrap();
        assert_eq!(cert.levels[0].beta, weak.alpha);
        assert_eq!(cert.levels[0].eta, weak.gamma);
        assert!(cert.certified(), "min ratio {}", cert.min_ratio);
    }

    #[test]
    fn branch_updates() {
        let f = FrequencyFamily::klein_gordon(1.0, 12).unwrap();
        let weak = WeakConstants { alpha: 2.0, gamma: 0.1, mu: 0.0, r: 3, queries: 0 };
        let acc = Accumulation { c: 0.6, nu: 1.0, mu: 0.0 };
        let cert = bootstrap_strong(&f, &weak, &acc, 2).unwrap();
        let l2 = &cert.levels[1];
        assert_eq!(l2.beta, 4.0);
        let near = 0.1 * (0.1f64 / (2.0 * 0.6 * 2.0)).powf(2.0);
        assert_eq!(l2.eta, near.min(0.05));
    }

    #[test]
    fn integer_spectrum_fails_weak() {
        let f = FrequencyFamily::klein_gordon(0.0, 6).unwrap();
        assert!(matches!(measure_weak(&f, 2, 0.0), Err(ResonanceError::WeakFails(_))));
    }
}
