//! Adaptive Dormand–Prince 5(4) for complex vector fields.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {0} exhausted")]
    MaxSteps(usize),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-10, max_steps: 200_000 }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(y: &[Complex64], h: f64, parts: &[(f64, &[Complex64])]) -> Vec<Complex64> {
    let mut out = y.to_vec();
    for (c, k) in parts {
        let w = h * c;
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += v * w;
        }
    }
    out
}

/// Integrates `y' = f(y)` from 0 to `t_end` (which may be negative).
pub fn dopri5<F>(mut f: F, y0: &[Complex64], t_end: f64, opts: &OdeOptions) -> Result<Vec<Complex64>, OdeError>
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let mut y = y0.to_vec();
    if t_end == 0.0 || y.is_empty() {
        return Ok(y);
    }
    let dir = t_end.signum();
    let span = t_end.abs();
    let mut t = 0.0;
    let mut k1 = f(&y);
    let scale0 = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let speed = k1.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut h = if speed > 0.0 {
        (0.01 * (scale0 + opts.atol) / speed).min(span)
    } else {
        span
    };
    h = h.max(span * 1e-12);
    let mut steps = 0usize;
    while t < span {
        if steps >= opts.max_steps {
            return Err(OdeError::MaxSteps(opts.max_steps));
        }
        steps += 1;
        let hh = h.min(span - t);
        let hs = hh * dir;
        let k2 = f(&combo(&y, hs, &[(A21, &k1)]));
        let k3 = f(&combo(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&combo(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&combo(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(&combo(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let yn = combo(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(&yn);
        let mut err: f64 = 0.0;
        for i in 0..y.len() {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
            let sc = opts.atol + opts.rtol * y[i].norm().max(yn[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            return Err(OdeError::NonFinite { t: t * dir });
        }
        if err <= 1.0 {
            t += hh;
            y = yn;
            k1 = k7;
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(OdeError::NonFinite { t: t * dir });
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = hh * fac;
        if h < span * 1e-14 && t < span {
            return Err(OdeError::StepUnderflow { t: t * dir });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_exact_to_tolerance() {
        let y0 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)];
        let w = [1.0, -3.0];
        let f = |y: &[Complex64]| y.iter().zip(w).map(|(z, w)| z * Complex64::new(0.0, w)).collect();
        let opts = OdeOptions { rtol: 1e-12, atol: 1e-12, ..Default::default() };
        let y = dopri5(f, &y0, 2.0, &opts).unwrap();
        for (i, z) in y.iter().enumerate() {
            let exact = y0[i] * Complex64::new(0.0, w[i] * 2.0).exp();
            assert!((z - exact).norm() < 1e-10);
        }
        let back = dopri5(f, &y, -2.0, &opts).unwrap();
        assert!((back[1] - y0[1]).norm() < 1e-10);
    }
}
