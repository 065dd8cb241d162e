//! Scalar root finding and adaptive Runge-Kutta integration.

use crate::error::{Error, Result};

/// Brent's method on a sign-changing bracket `[lo, hi]`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NoBracket(format!("f({lo}) = {fa:e}, f({hi}) = {fb:e}")));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::NoBracket(format!("no convergence after {max_iter} iterations near {b}")))
}

/// Tolerances and limits for [`dopri5`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeControls<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    /// Clamp small negative components to zero and reject larger ones.
    pub nonneg: bool,
}

impl<const N: usize> OdeControls<N> {
    pub fn new(rtol: f64, atol: [f64; N]) -> Self {
        OdeControls { rtol, atol, h0: None, h_max: f64::INFINITY, max_steps: 50_000_000, nonneg: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) {
            return Err(Error::param("rtol", "must be positive"));
        }
        if self.atol.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::param("atol", "must be positive"));
        }
        if !(self.h_max > 0.0) {
            return Err(Error::param("h_max", "must be positive"));
        }
        Ok(())
    }
}

/// Integrator counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub clamps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
// Differences between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

/// Dormand-Prince 5(4) integration from `(t0, y0)` reporting the state at
/// each time in `t_out` (increasing, all `>= t0`). Steps are shortened to
/// land on output times exactly.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_out: &[f64],
    ctrl: &OdeControls<N>,
) -> Result<(Vec<[f64; N]>, OdeStats)>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    ctrl.validate()?;
    if t_out.windows(2).any(|w| !(w[1] >= w[0])) || t_out.first().map_or(false, |&t| t < t0) {
        return Err(Error::Precondition("output times must be increasing and >= t0".into()));
    }
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    stats.evaluations += 1;
    let err_norm = |e: &[f64; N], ya: &[f64; N], yb: &[f64; N]| {
        let mut s = 0.0;
        for i in 0..N {
            let sc = ctrl.atol[i] + ctrl.rtol * ya[i].abs().max(yb[i].abs());
            s += (e[i] / sc).powi(2);
        }
        (s / N as f64).sqrt()
    };
    let t_end = t_out.last().copied().unwrap_or(t0);
    let mut h = match ctrl.h0 {
        Some(h) => h,
        None => {
            let d0 = err_norm(&y, &y, &y);
            let d1 = err_norm(&k1, &y, &y);
            let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h.min(ctrl.h_max).min((t_end - t0).max(f64::MIN_POSITIVE))
        }
    };
    let mut err_prev: f64 = 1e-4;
    let mut next_out = 0;
    while next_out < t_out.len() && t_out[next_out] <= t {
        out.push(y);
        next_out += 1;
    }
    while next_out < t_out.len() {
        if stats.accepted + stats.rejected >= ctrl.max_steps {
            return Err(Error::TooManySteps { max_steps: ctrl.max_steps, t });
        }
        let target = t_out[next_out];
        let mut landing = false;
        let mut h_try = h.min(ctrl.h_max);
        if t + h_try >= target {
            h_try = target - t;
            landing = true;
        }
        if h_try <= 1e-14 * t.abs().max(1.0) {
            if landing {
                out.push(y);
                next_out += 1;
                continue;
            }
            return Err(Error::StepSizeUnderflow { t });
        }
        let k2 = f(t + C2 * h_try, &axpy(&y, h_try, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * h_try, &axpy(&y, h_try, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h_try, &axpy(&y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h_try, &axpy(&y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(
            t + h_try,
            &axpy(&y, h_try, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let mut y_new = axpy(&y, h_try, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let t_new = if landing { target } else { t + h_try };
        let k7 = f(t_new, &y_new)?;
        stats.evaluations += 6;
        let mut e = [0.0; N];
        for i in 0..N {
            e[i] = h_try * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let mut err = err_norm(&e, &y, &y_new);
        if !err.is_finite() {
            err = f64::INFINITY;
        }
        let mut negative = false;
        if ctrl.nonneg && err <= 1.0 {
            for i in 0..N {
                if y_new[i] < -ctrl.atol[i] {
                    negative = true;
                }
            }
        }
        if err <= 1.0 && !negative {
            let mut clamped = false;
            if ctrl.nonneg {
                for v in y_new.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                        clamped = true;
                    }
                }
            }
            stats.accepted += 1;
            t = t_new;
            y = y_new;
            k1 = if clamped {
                stats.clamps += 1;
                stats.evaluations += 1;
                f(t, &y)?
            } else {
                k7
            };
            // PI step-size controller.
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0)
            };
            err_prev = err.max(1e-4);
            if !landing || h_try >= 0.5 * h {
                h = h_try * fac;
            }
            if landing {
                out.push(y);
                next_out += 1;
                while next_out < t_out.len() && t_out[next_out] <= t {
                    out.push(y);
                    next_out += 1;
                }
            }
        } else {
            stats.rejected += 1;
            let fac = if negative { 0.5 } else { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) };
            h = h_try * fac;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t });
            }
        }
    }
    Ok((out, stats))
}

/// `n + 1` equally spaced points on `[t0, t1]`.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return vec![t0];
    }
    (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}
