//! Strong non-resonance: exhaustive scan of canonical keys with resumable state.
//!
//! Keys of arity `1..=r` are visited arity-major, each arity in lexicographic
//! order of sorted slot codes. Paired keys and keys with `κ > κ_max` are
//! skipped. Per-`(arity, κ)` minima of `|Ω|` feed a power-law fit
//! `|Ω| ≥ γ κ^{-β}`: least squares in log-log, then the intercept is lowered
//! until every bucket lies on or above the line.

use super::{FrequencyFamily, ResonanceError};
use crate::hamilton::{decode, Code};
use crate::lattice::ModeIndex;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Maximal arity.
    pub r: usize,
    /// Upper bound on `κ`; `None` scans all scales.
    pub kappa_max: Option<f64>,
    /// Examples kept per violation and near-resonance list.
    pub max_records: usize,
    /// Queries between checkpoint callbacks (0 disables).
    pub checkpoint_every: u64,
}

impl VerifyOptions {
    pub fn new(r: usize) -> Self {
        Self { r, kappa_max: None, max_records: 100_000, checkpoint_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub key: Vec<(ModeIndex, i32)>,
    pub divisor: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaBucket {
    pub arity: usize,
    /// `|n|²` of the mode attaining `κ`.
    pub kappa_sq: i64,
    pub kappa: f64,
    pub count: u64,
    pub min_divisor: f64,
    pub argmin: Vec<(ModeIndex, i32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// `None` when pooled over every arity.
    pub arity: Option<usize>,
    pub gamma: f64,
    pub beta: f64,
    pub buckets: usize,
}

/// Serializable progress of a scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateState {
    pub family: String,
    pub lattice_size: usize,
    pub r: usize,
    pub kappa_max: Option<f64>,
    /// Next key to visit, `None` once finished.
    pub next: Option<Vec<Code>>,
    pub processed: u64,
    pub paired_skipped: u64,
    pub kappa_skipped: u64,
    pub violations: Vec<QueryRecord>,
    pub violations_total: u64,
    pub near_resonances: Vec<QueryRecord>,
    pub near_total: u64,
    pub buckets: Vec<KappaBucket>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonResonanceCertificate {
    pub family: String,
    pub r: usize,
    pub kappa_max: Option<f64>,
    pub exact_arithmetic: bool,
    pub queries: u64,
    pub paired_skipped: u64,
    pub kappa_skipped: u64,
    pub violations_total: u64,
    pub violations: Vec<QueryRecord>,
    pub near_total: u64,
    pub near_resonances: Vec<QueryRecord>,
    /// Smallest `|Ω|` over queries that are not certified violations.
    pub min_divisor: f64,
    pub argmin: Vec<(ModeIndex, i32)>,
    pub buckets: Vec<KappaBucket>,
    pub fits: Vec<PowerLawFit>,
}

impl NonResonanceCertificate {
    pub fn is_resonant(&self) -> bool {
        self.violations_total > 0
    }

    /// Pooled fit over all arities.
    pub fn overall(&self) -> Option<&PowerLawFit> {
        self.fits.iter().find(|f| f.arity.is_none())
    }

    pub fn fit_for(&self, arity: usize) -> Option<&PowerLawFit> {
        self.fits.iter().find(|f| f.arity == Some(arity))
    }

    /// `γ N^{-β}` from the pooled fit.
    pub fn threshold(&self, n: f64) -> Option<f64> {
        self.overall().map(|f| f.gamma * n.powf(-f.beta))
    }
}

fn describe(family: &FrequencyFamily, key: &[Code]) -> Vec<(ModeIndex, i32)> {
    key.iter()
        .map(|&c| {
            let (id, s) = decode(c);
            (family.lattice().mode(id), s.value())
        })
        .collect()
}

/// Advances to the next nondecreasing sequence over `0..alphabet`.
fn next_multiset(key: &mut [Code], alphabet: Code) -> bool {
    let r = key.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if key[i] + 1 < alphabet {
            let v = key[i] + 1;
            for k in key.iter_mut().skip(i) {
                *k = v;
            }
            return true;
        }
    }
    false
}

/// Least squares in log-log, then the intercept is lowered onto the lowest bucket.
pub fn fit_power_law(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(k, m)| *k > 0.0 && *m > 0.0).copied().collect();
    if pts.is_empty() {
        return None;
    }
    let beta = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as f64;
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx > 0.0 {
            (-sxy / sxx).max(0.0)
        } else {
            0.0
        }
    };
    let gamma = pts.iter().map(|(k, m)| m * k.powf(beta)).fold(f64::INFINITY, f64::min);
    Some((gamma, beta))
}

impl CertificateState {
    pub fn fresh(family: &FrequencyFamily, opts: &VerifyOptions) -> Self {
        Self {
            family: family.label.clone(),
            lattice_size: family.lattice().len(),
            r: opts.r,
            kappa_max: opts.kappa_max,
            next: if opts.r >= 1 && !family.lattice().is_empty() { Some(vec![0]) } else { None },
            processed: 0,
            paired_skipped: 0,
            kappa_skipped: 0,
            violations: vec![],
            violations_total: 0,
            near_resonances: vec![],
            near_total: 0,
            buckets: vec![],
        }
    }

    fn compatible(&self, family: &FrequencyFamily, opts: &VerifyOptions) -> Result<(), ResonanceError> {
        if self.family != family.label
            || self.lattice_size != family.lattice().len()
            || self.r != opts.r
            || self.kappa_max != opts.kappa_max
        {
            return Err(ResonanceError::Checkpoint("checkpoint was written for a different scan".into()));
        }
        Ok(())
    }

    pub fn finish(&self, family: &FrequencyFamily) -> NonResonanceCertificate {
        let mut min_divisor = f64::INFINITY;
        let mut argmin = vec![];
        for b in &self.buckets {
            if b.min_divisor < min_divisor {
                min_divisor = b.min_divisor;
                argmin = b.argmin.clone();
            }
        }
        for q in &self.near_resonances {
            if q.divisor.abs() < min_divisor {
                min_divisor = q.divisor.abs();
                argmin = q.key.clone();
            }
        }
        let mut fits = vec![];
        let mut pooled: FxHashMap<i64, (f64, f64)> = FxHashMap::default();
        for a in 1..=self.r {
            let pts: Vec<(f64, f64)> =
                self.buckets.iter().filter(|b| b.arity == a).map(|b| (b.kappa, b.min_divisor)).collect();
            if let Some((gamma, beta)) = fit_power_law(&pts) {
                fits.push(PowerLawFit { arity: Some(a), gamma, beta, buckets: pts.len() });
            }
        }
        for b in &self.buckets {
            let e = pooled.entry(b.kappa_sq).or_insert((b.kappa, f64::INFINITY));
            e.1 = e.1.min(b.min_divisor);
        }
        let mut pts: Vec<(i64, (f64, f64))> = pooled.into_iter().collect();
        pts.sort_by_key(|p| p.0);
        let pts: Vec<(f64, f64)> = pts.into_iter().map(|p| p.1).collect();
        if let Some((gamma, beta)) = fit_power_law(&pts) {
            fits.push(PowerLawFit { arity: None, gamma, beta, buckets: pts.len() });
        }
        NonResonanceCertificate {
            family: self.family.clone(),
            r: self.r,
            kappa_max: self.kappa_max,
            exact_arithmetic: family.is_exact(),
            queries: self.processed,
            paired_skipped: self.paired_skipped,
            kappa_skipped: self.kappa_skipped,
            violations_total: self.violations_total,
            violations: self.violations.clone(),
            near_total: self.near_total,
            near_resonances: self.near_resonances.clone(),
            min_divisor,
            argmin,
            buckets: self.buckets.clone(),
            fits,
        }
    }
}

/// Scans all keys of arity `≤ r`, optionally resuming and reporting checkpoints.
pub fn verify_strong_resumable(
    family: &FrequencyFamily,
    opts: &VerifyOptions,
    resume: Option<CertificateState>,
    mut on_checkpoint: Option<&mut dyn FnMut(&CertificateState) -> Result<(), ResonanceError>>,
) -> Result<NonResonanceCertificate, ResonanceError> {
    if opts.r == 0 {
        return Err(ResonanceError::Invalid("r must be at least 1".into()));
    }
    let mut state = match resume {
        Some(s) => {
            s.compatible(family, opts)?;
            s
        }
        None => CertificateState::fresh(family, opts),
    };
    let mut index: FxHashMap<(usize, i64), usize> = state
        .buckets
        .iter()
        .enumerate()
        .map(|(i, b)| ((b.arity, b.kappa_sq), i))
        .collect();
    let alphabet = 2 * family.lattice().len() as Code;
    let mut since = 0u64;
    while let Some(mut key) = state.next.take() {
        let arity = key.len();
        let kappa_id = family.kappa_mode(&key);
        match kappa_id {
            None => state.paired_skipped += 1,
            Some(id) => {
                let mode = family.lattice().mode(id);
                let kappa = mode.bracket();
                if opts.kappa_max.is_some_and(|n| kappa > n) {
                    state.kappa_skipped += 1;
                } else {
                    state.processed += 1;
                    let omega = family.divisor(&key);
                    let violation = family.exact_divisor(&key).is_some_and(|d| d == 0);
                    if violation {
                        state.violations_total += 1;
                        if state.violations.len() < opts.max_records {
                            state.violations.push(QueryRecord { key: describe(family, &key), divisor: 0.0, kappa });
                        }
                    } else if omega.abs() < family.floor(arity) {
                        state.near_total += 1;
                        if state.near_resonances.len() < opts.max_records {
                            state.near_resonances.push(QueryRecord { key: describe(family, &key), divisor: omega, kappa });
                        }
                    } else {
                        let slot = *index.entry((arity, mode.norm_sq())).or_insert_with(|| {
                            state.buckets.push(KappaBucket {
                                arity,
                                kappa_sq: mode.norm_sq(),
                                kappa,
                                count: 0,
                                min_divisor: f64::INFINITY,
                                argmin: vec![],
                            });
                            state.buckets.len() - 1
                        });
                        let b = &mut state.buckets[slot];
                        b.count += 1;
                        if omega.abs() < b.min_divisor {
                            b.min_divisor = omega.abs();
                            b.argmin = describe(family, &key);
                        }
                    }
                }
            }
        }
        state.next = if next_multiset(&mut key, alphabet) {
            Some(key)
        } else if arity < opts.r {
            Some(vec![0; arity + 1])
        } else {
            None
        };
        since += 1;
        if opts.checkpoint_every > 0 && since >= opts.checkpoint_every {
            since = 0;
            if let Some(cb) = on_checkpoint.as_deref_mut() {
                cb(&state)?;
            }
        }
    }
    state.buckets.sort_by_key(|b| (b.arity, b.kappa_sq));
    if let Some(cb) = on_checkpoint {
        cb(&state)?;
    }
    Ok(state.finish(family))
}

pub fn verify_strong_nonresonance(
    family: &FrequencyFamily,
    opts: &VerifyOptions,
) -> Result<NonResonanceCertificate, ResonanceError> {
    verify_strong_resumable(family, opts, None, None)
}

/// Uniform bound up to order `r` for queries with `κ ≤ n`: every fit has `β = 0`.
pub fn verify_limited_nonresonance(
    family: &FrequencyFamily,
    r: usize,
    n: f64,
) -> Result<NonResonanceCertificate, ResonanceError> {
    let opts = VerifyOptions { kappa_max: Some(n), ..VerifyOptions::new(r) };
    let mut cert = verify_strong_nonresonance(family, &opts)?;
    for f in &mut cert.fits {
        f.beta = 0.0;
        f.gamma = cert
            .buckets
            .iter()
            .filter(|b| f.arity.is_none_or(|a| a == b.arity))
            .map(|b| b.min_divisor)
            .fold(f64::INFINITY, f64::min);
    }
    Ok(cert)
}
