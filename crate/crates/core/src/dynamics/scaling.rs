//! Drift-versus-amplitude experiments.

use super::{integrate, random_state, track_superactions, DynamicsError, IntegrateOptions, ModelSpec};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingOptions {
    pub eps: Vec<f64>,
    pub r: usize,
    pub p: usize,
    pub seeds: Vec<u64>,
    pub dt: f64,
    /// Upper bound on the horizon `ε^{-(r-p)}`.
    #[serde(default = "default_cap")]
    pub t_cap: f64,
    /// Groups with smallest `⟨n⟩` at most this are measured.
    pub track: f64,
    /// Initial data lives on modes with `⟨n⟩` at most this.
    pub support: f64,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Repeat every cell with twice as many modes.
    #[serde(default)]
    pub compare_doubled: bool,
}

fn default_cap() -> f64 {
    f64::INFINITY
}

fn default_stride() -> usize {
    10
}

impl ScalingOptions {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.eps.len() < 3 || self.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(DynamicsError::Invalid("need at least 3 positive amplitudes".into()));
        }
        let ratios: Vec<f64> = self.eps.windows(2).map(|w| w[1] / w[0]).collect();
        if ratios.iter().any(|q| (q - ratios[0]).abs() > 1e-9 * ratios[0].abs() || *q == 1.0) {
            return Err(DynamicsError::Invalid("amplitudes must form a geometric sequence".into()));
        }
        if self.r <= self.p || self.seeds.is_empty() || !(self.dt > 0.0) || self.stride == 0 {
            return Err(DynamicsError::Invalid("need r > p, a seed, dt > 0 and stride ≥ 1".into()));
        }
        Ok(())
    }

    pub fn horizon(&self, eps: f64) -> f64 {
        eps.powi(-((self.r - self.p) as i32)).min(self.t_cap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub eps: f64,
    pub seed: u64,
    pub t_end: f64,
    pub steps: usize,
    /// Largest tracked `sup_t |ΔJ|`.
    pub drift: f64,
    pub per_group: Vec<f64>,
    pub doubled_drift: Option<f64>,
    pub aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub model: String,
    pub options: ScalingOptions,
    pub group_labels: Vec<String>,
    pub cells: Vec<ScalingCell>,
    /// Seed-averaged drift per amplitude.
    pub mean_drift: Vec<f64>,
    /// Slope of `log drift` against `log ε`.
    pub slope: Option<f64>,
    pub exact_zero: bool,
    /// Largest `|drift(2K) - drift(K)| / drift(K)` over cells.
    pub truncation_change: Option<f64>,
    /// Some cell aborted; its drift covers only the completed part.
    pub partial: bool,
}

pub(crate) fn log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

struct Run {
    per_group: Vec<f64>,
    labels: Vec<String>,
    steps: usize,
    aborted: bool,
}

fn run(spec: &ModelSpec, opts: &ScalingOptions, eps: f64, seed: u64) -> Result<Run, DynamicsError> {
    let model = spec.build()?;
    let s = opts.s.unwrap_or_else(|| spec.default_s());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = random_state(&mut rng, model.family(), s, eps, opts.support)?;
    let io = IntegrateOptions { stride: opts.stride, s, forcing: false };
    let (trace, aborted) = match integrate(model.as_ref(), &u0, opts.horizon(eps), opts.dt, &io) {
        Ok((t, _)) => (t, false),
        Err(DynamicsError::Aborted { trace, .. }) => (*trace, true),
        Err(e) => return Err(e),
    };
    let rows = track_superactions(&trace, 0.0, 0.0);
    let keep: Vec<usize> = (0..rows.len()).filter(|&g| rows[g].bracket <= opts.track).collect();
    Ok(Run {
        per_group: keep.iter().map(|&g| rows[g].sup_drift).collect(),
        labels: keep.iter().map(|&g| rows[g].label.clone()).collect(),
        steps: trace.steps,
        aborted,
    })
}

/// For every `ε` and seed: random data of `h^s` norm `ε` on the support, fixed
/// direction per seed, integrated to `min(ε^{-(r-p)}, t_cap)`; the largest
/// tracked super-action drift is fitted against `ε`.
pub fn scaling_experiment(spec: &ModelSpec, opts: &ScalingOptions) -> Result<ScalingReport, DynamicsError> {
    scaling_experiment_parallel(spec, opts, 1)
}

/// [`scaling_experiment`] with cells spread over `threads` workers; the report
/// does not depend on `threads`.
pub fn scaling_experiment_parallel(
    spec: &ModelSpec,
    opts: &ScalingOptions,
    threads: usize,
) -> Result<ScalingReport, DynamicsError> {
    spec.validate()?;
    opts.validate()?;
    let doubled = opts.compare_doubled.then(|| spec.with_modes(2 * spec.modes()));
    let jobs: Vec<(f64, u64)> = opts.eps.iter().flat_map(|&e| opts.seeds.iter().map(move |&s| (e, s))).collect();
    let cell = |&(eps, seed): &(f64, u64)| -> Result<(ScalingCell, Vec<String>), DynamicsError> {
        let base = run(spec, opts, eps, seed)?;
        let drift = base.per_group.iter().copied().fold(0.0, f64::max);
        let (doubled_drift, dab) = match &doubled {
            Some(d) => {
                let r = run(d, opts, eps, seed)?;
                (Some(r.per_group.iter().copied().fold(0.0, f64::max)), r.aborted)
            }
            None => (None, false),
        };
        let c = ScalingCell {
            eps,
            seed,
            t_end: opts.horizon(eps),
            steps: base.steps,
            drift,
            per_group: base.per_group,
            doubled_drift,
            aborted: base.aborted || dab,
        };
        Ok((c, base.labels))
    };
    let results = parallel_map(&jobs, threads, cell);
    let mut cells = Vec::with_capacity(jobs.len());
    let mut labels = vec![];
    for r in results {
        let (c, l) = r?;
        labels = l;
        cells.push(c);
    }
    let mean_drift: Vec<f64> = opts
        .eps
        .iter()
        .map(|&e| {
            let d: Vec<f64> = cells.iter().filter(|c| c.eps == e).map(|c| c.drift).collect();
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    let exact_zero = spec.order().is_none();
    let slope = if exact_zero { None } else { log_slope(&opts.eps, &mean_drift) };
    let truncation_change = doubled.as_ref().map(|_| {
        cells
            .iter()
            .filter_map(|c| c.doubled_drift.map(|d| if c.drift > 0.0 { (d - c.drift).abs() / c.drift } else { 0.0 }))
            .fold(0.0, f64::max)
    });
    Ok(ScalingReport {
        model: spec.name().to_string(),
        options: opts.clone(),
        group_labels: labels,
        partial: cells.iter().any(|c| c.aborted),
        cells,
        mean_drift,
        slope,
        exact_zero,
        truncation_change,
    })
}

/// Order-preserving map over `threads` scoped workers pulling from a shared counter.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("unpoisoned") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("unpoisoned").expect("every slot filled")).collect()
}
