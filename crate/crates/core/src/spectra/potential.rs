//! Real potentials on `(0, π)` or the circle.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::SpectraError;

/// A real potential.
///
/// `Fourier` is `Σ_{m≥0} cos[m] cos(m x) + Σ_{m≥1} sin[m-1] sin(m x)` on the circle.
/// `Grid` holds samples at `x_j = jπ/(N-1)` over `[0, π]`; `PeriodicGrid` holds
/// samples at `x_j = 2πj/N` over `[0, 2π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum Potential {
    Fourier {
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    Grid {
        samples: Vec<f64>,
    },
    PeriodicGrid {
        samples: Vec<f64>,
    },
}

impl Potential {
    pub fn zero() -> Self {
        Potential::Fourier { cos: vec![], sin: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Potential::Fourier { cos: vec![c], sin: vec![] }
    }

    /// `cos(j x)`.
    pub fn cosine(j: usize) -> Self {
        let mut cos = vec![0.0; j + 1];
        cos[j] = 1.0;
        Potential::Fourier { cos, sin: vec![] }
    }

    pub fn validate(&self) -> Result<(), SpectraError> {
        let vals: &[f64] = match self {
            Potential::Fourier { cos, sin } => {
                if cos.iter().chain(sin).any(|x| !x.is_finite()) {
                    return Err(SpectraError::InvalidPotential("non-finite coefficient".into()));
                }
                return Ok(());
            }
            Potential::Grid { samples } => {
                if samples.len() < 3 {
                    return Err(SpectraError::InvalidPotential("grid needs at least 3 samples".into()));
                }
                samples
            }
            Potential::PeriodicGrid { samples } => {
                if samples.len() < 4 || samples.len() % 2 != 0 {
                    return Err(SpectraError::InvalidPotential(
                        "periodic grid needs an even number (≥ 4) of samples".into(),
                    ));
                }
                samples
            }
        };
        if vals.iter().any(|x| !x.is_finite()) {
            return Err(SpectraError::InvalidPotential("non-finite sample".into()));
        }
        Ok(())
    }

    fn half_grid(&self) -> Option<Vec<f64>> {
        match self {
            Potential::Grid { samples } => Some(samples.clone()),
            Potential::PeriodicGrid { samples } => Some(samples[..=samples.len() / 2].to_vec()),
            Potential::Fourier { .. } => None,
        }
    }

    /// Value at `x ∈ [0, π]` (grids interpolate linearly).
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Fourier { cos, sin } => {
                let mut v = 0.0;
                for (m, a) in cos.iter().enumerate() {
                    v += a * (m as f64 * x).cos();
                }
                for (m, b) in sin.iter().enumerate() {
                    v += b * ((m + 1) as f64 * x).sin();
                }
                v
            }
            _ => {
                let g = self.half_grid().expect("grid");
                let h = PI / (g.len() - 1) as f64;
                let t = (x / h).clamp(0.0, (g.len() - 1) as f64);
                let i = (t.floor() as usize).min(g.len() - 2);
                let f = t - i as f64;
                g[i] * (1.0 - f) + g[i + 1] * f
            }
        }
    }

    /// Coefficients `a_0, …, a_{count-1}` with `V = Σ a_j cos(j x)` on `(0, π)`.
    pub fn half_cosine_coefficients(&self, count: usize) -> Vec<f64> {
        let mut a = vec![0.0; count];
        match self {
            Potential::Fourier { cos, sin } => {
                for (m, c) in cos.iter().enumerate() {
                    if m < count {
                        a[m] += c;
                    }
                }
                for (i, b) in sin.iter().enumerate() {
                    if *b == 0.0 {
                        continue;
                    }
                    let m = (i + 1) as i64;
                    if count > 0 && m % 2 == 1 {
                        a[0] += b * 2.0 / (m as f64 * PI);
                    }
                    for (j, aj) in a.iter_mut().enumerate().skip(1) {
                        let j = j as i64;
                        if j != m && (m + j) % 2 == 1 {
                            *aj += b * (2.0 / PI) * 2.0 * m as f64 / ((m * m - j * j) as f64);
                        }
                    }
                }
            }
            _ => {
                let g = self.half_grid().expect("grid");
                let n = g.len() - 1;
                let h = PI / n as f64;
                for (j, aj) in a.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (k, v) in g.iter().enumerate() {
                        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                        s += w * v * (j as f64 * k as f64 * h).cos();
                    }
                    *aj = s * h * if j == 0 { 1.0 / PI } else { 2.0 / PI };
                }
            }
        }
        a
    }

    /// `π⁻¹ ∫₀^π V`.
    pub fn mean(&self) -> f64 {
        self.half_cosine_coefficients(1)[0]
    }

    /// Whether the circle extension is even (sine part vanishes).
    pub fn is_even(&self, tol: f64) -> bool {
        match self {
            Potential::Fourier { sin, .. } => sin.iter().all(|b| b.abs() <= tol),
            Potential::Grid { .. } => true,
            Potential::PeriodicGrid { samples } => {
                let n = samples.len();
                (1..n).all(|j| (samples[j] - samples[n - j]).abs() <= tol * (1.0 + samples[j].abs()))
            }
        }
    }

    /// `‖V‖_{H¹}` on the circle for Fourier potentials, on `(0, π)` otherwise.
    pub fn h1_norm(&self) -> f64 {
        match self {
            Potential::Fourier { cos, sin } => {
                let mut s = 0.0;
                for (m, a) in cos.iter().enumerate() {
                    let w = if m == 0 { 2.0 * PI } else { PI * (1.0 + (m * m) as f64) };
                    s += w * a * a;
                }
                for (i, b) in sin.iter().enumerate() {
                    let m = (i + 1) as f64;
                    s += PI * (1.0 + m * m) * b * b;
                }
                s.sqrt()
            }
            _ => {
                let g = self.half_grid().expect("grid");
                let n = g.len() - 1;
                let h = PI / n as f64;
                let mut s = 0.0;
                for k in 0..=n {
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    s += w * h * g[k] * g[k];
                }
                for k in 0..n {
                    let d = (g[k + 1] - g[k]) / h;
                    s += h * d * d;
                }
                s.sqrt()
            }
        }
    }

    /// Sup over a uniform grid of `[0, π]`.
    pub fn sup_norm(&self, points: usize) -> f64 {
        (0..=points)
            .map(|k| self.eval(PI * k as f64 / points as f64).abs())
            .fold(0.0, f64::max)
    }

    /// `𝒱(x) = ∫₀ˣ (V - π⁻¹∫V)` from the half-range cosine series.
    pub fn centered_primitive(&self, x: f64, terms: usize) -> f64 {
        let a = self.half_cosine_coefficients(terms);
        a.iter()
            .enumerate()
            .skip(1)
            .map(|(j, aj)| aj * (j as f64 * x).sin() / j as f64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_term_expansion_matches_quadrature() {
        let v = Potential::Fourier { cos: vec![0.1, 0.0, 0.3], sin: vec![0.0, 0.0, 0.5] };
        let exact = v.half_cosine_coefficients(12);
        let n = 4000;
        let g = Potential::Grid { samples: (0..=n).map(|k| v.eval(PI * k as f64 / n as f64)).collect() };
        let quad = g.half_cosine_coefficients(12);
        for (a, b) in exact.iter().zip(&quad) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn h1_norm_of_cosine() {
        let v = Potential::cosine(2);
        assert!((v.h1_norm() - (5.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn evenness() {
        let n = 16;
        let even = Potential::PeriodicGrid { samples: (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).cos()).collect() };
        let odd = Potential::PeriodicGrid { samples: (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect() };
        assert!(even.is_even(1e-12));
        assert!(!odd.is_even(1e-12));
    }

    #[test]
    fn json_tagging() {
        let v: Potential = serde_json::from_str(r#"{"basis":"fourier","cos":[1.0]}"#).unwrap();
        assert_eq!(v, Potential::constant(1.0));
    }
}
