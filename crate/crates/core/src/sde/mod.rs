//! Langevin versions of the chemostat with multiplicative (general) noise or
//! dilution-rate noise, integrated with fixed-step Euler-Maruyama or Milstein.

mod ensemble;
mod order;
mod path;

pub use ensemble::{simulate_ensemble, Ensemble, EnsembleSummary, PathFailure, SurvivorTally};
pub use order::{strong_order_study, OrderStudy, OrderStudyConfig};
pub use path::{
    deficit_diagnostic, default_dt, simulate, simulate_path, stable_dt, ClampEvent, ExtinctionEvent, PathOutcome,
    Population, SdeControls, Trajectory,
};

use serde::{Deserialize, Serialize};

use crate::deterministic::{rhs, State};
use crate::error::{Error, Result};
use crate::model::{ChemostatParams, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    Milstein,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler-maruyama",
            Scheme::Milstein => "milstein",
        }
    }
}

/// Drift and one diffusion column per driving Wiener process.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift: [f64; 3],
    pub columns: Vec<[f64; 3]>,
}

/// Drift (the deterministic right-hand side) and diffusion columns.
pub fn drift_diffusion(params: &ChemostatParams, s: &State) -> DriftDiffusion {
    let drift = rhs(params, s);
    let columns = match params.noise {
        NoiseSpec::None => Vec::new(),
        NoiseSpec::General { sigma1, sigma2, sigma3 } => vec![
            [sigma1 * s.x, 0.0, 0.0],
            [0.0, sigma2 * s.y, 0.0],
            [0.0, 0.0, sigma3 * s.z],
        ],
        NoiseSpec::DilutionRate { sigma } => vec![[-sigma * s.x, -sigma * s.y, sigma * (params.z_f - s.z)]],
    };
    DriftDiffusion { drift, columns }
}

fn check_increments(params: &ChemostatParams, dt: f64, dw: &[f64]) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    let n = params.noise.channels();
    if dw.len() != n {
        return Err(Error::Precondition(format!("noise needs {n} Wiener increments, got {}", dw.len())));
    }
    Ok(())
}

/// Raw Euler-Maruyama update; `dw` holds as many entries as noise channels.
#[inline]
pub(crate) fn em_raw(params: &ChemostatParams, s: [f64; 3], dt: f64, dw: &[f64; 3]) -> [f64; 3] {
    let [x, y, z] = s;
    let f = params.f(z);
    let g = params.g(z);
    let th = params.theta;
    let mut out = [
        x + x * (f - th) * dt,
        y + y * (g - th) * dt,
        z + (th * (params.z_f - z) - x * f - y * g) * dt,
    ];
    match params.noise {
        NoiseSpec::None => {}
        NoiseSpec::General { sigma1, sigma2, sigma3 } => {
            out[0] += sigma1 * x * dw[0];
            out[1] += sigma2 * y * dw[1];
            out[2] += sigma3 * z * dw[2];
        }
        NoiseSpec::DilutionRate { sigma } => {
            let w = dw[0];
            out[0] -= sigma * x * w;
            out[1] -= sigma * y * w;
            out[2] += sigma * (params.z_f - z) * w;
        }
    }
    out
}

/// Raw Milstein update.
#[inline]
pub(crate) fn milstein_raw(params: &ChemostatParams, s: [f64; 3], dt: f64, dw: &[f64; 3]) -> [f64; 3] {
    let mut out = em_raw(params, s, dt, dw);
    let [x, y, z] = s;
    match params.noise {
        NoiseSpec::None => {}
        NoiseSpec::General { sigma1, sigma2, sigma3 } => {
            out[0] += 0.5 * sigma1 * sigma1 * x * (dw[0] * dw[0] - dt);
            out[1] += 0.5 * sigma2 * sigma2 * y * (dw[1] * dw[1] - dt);
            out[2] += 0.5 * sigma3 * sigma3 * z * (dw[2] * dw[2] - dt);
        }
        NoiseSpec::DilutionRate { sigma } => {
            // One driving process: the iterated integral is (dW^2 - dt)/2.
            let c = 0.5 * sigma * sigma * (dw[0] * dw[0] - dt);
            out[0] += c * x;
            out[1] += c * y;
            out[2] -= c * (params.z_f - z);
        }
    }
    out
}

fn pad(dw: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..dw.len()].copy_from_slice(dw);
    out
}

/// One Euler-Maruyama step without the negativity policy.
pub fn step_euler_maruyama(params: &ChemostatParams, s: &State, dt: f64, dw: &[f64]) -> Result<State> {
    check_increments(params, dt, dw)?;
    Ok(State::from_array(em_raw(params, s.to_array(), dt, &pad(dw))))
}

/// One Milstein step without the negativity policy.
pub fn step_milstein(params: &ChemostatParams, s: &State, dt: f64, dw: &[f64]) -> Result<State> {
    check_increments(params, dt, dw)?;
    Ok(State::from_array(milstein_raw(params, s.to_array(), dt, &pad(dw))))
}

#[inline]
pub(crate) fn step_raw(scheme: Scheme, params: &ChemostatParams, s: [f64; 3], dt: f64, dw: &[f64; 3]) -> [f64; 3] {
    match scheme {
        Scheme::EulerMaruyama => em_raw(params, s, dt, dw),
        Scheme::Milstein => milstein_raw(params, s, dt, dw),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dilution(sigma: f64) -> ChemostatParams {
        ChemostatParams::table1(1.0, NoiseSpec::DilutionRate { sigma }).unwrap()
    }

    #[test]
    fn dilution_column_at_unit_state() {
        let p = dilution(0.001);
        let dd = drift_diffusion(&p, &State::new(1.0, 1.0, 1.0));
        assert_eq!(dd.columns.len(), 1);
        let c = dd.columns[0];
        assert_relative_eq!(c[0], -0.001);
        assert_relative_eq!(c[1], -0.001);
        assert_relative_eq!(c[2], 14.999, max_relative = 1e-14);
        let full = drift_diffusion(&p, &State::new(1.0, 1.0, p.z_f));
        assert_eq!(full.columns[0][2], 0.0);
    }

    #[test]
    fn general_columns_vanish_on_axis() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::General { sigma1: 0.1, sigma2: 0.2, sigma3: 9.0 }).unwrap();
        let dd = drift_diffusion(&p, &State::new(0.0, 2.0, 3.0));
        assert_eq!(dd.columns.len(), 3);
        assert_eq!(dd.columns[0][0], 0.0);
        assert_relative_eq!(dd.columns[2][2], 27.0);
        assert_eq!(dd.drift, rhs(&p, &State::new(0.0, 2.0, 3.0)));
    }

    #[test]
    fn zero_noise_is_explicit_euler() {
        let p = dilution(0.0);
        let s = State::new(3.0, 4.0, 2.0);
        let d = rhs(&p, &s);
        let em = step_euler_maruyama(&p, &s, 0.01, &[0.7]).unwrap();
        assert_relative_eq!(em.x, s.x + 0.01 * d[0]);
        assert_relative_eq!(em.z, s.z + 0.01 * d[2]);
        let mil = step_milstein(&p, &s, 0.01, &[0.7]).unwrap();
        assert_eq!(em, mil);
    }

    #[test]
    fn milstein_correction_vanishes_when_dw_squared_is_dt() {
        let p = dilution(0.3);
        let s = State::new(3.0, 4.0, 2.0);
        let dt: f64 = 0.04;
        let dw = [dt.sqrt()];
        let em = step_euler_maruyama(&p, &s, dt, &dw).unwrap();
        let mil = step_milstein(&p, &s, dt, &dw).unwrap();
        assert_relative_eq!(em.x, mil.x, epsilon = 1e-12);
        assert_relative_eq!(em.z, mil.z, epsilon = 1e-10);
    }

    #[test]
    fn general_single_channel_perturbs_only_x() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::General { sigma1: 0.2, sigma2: 0.3, sigma3: 0.4 }).unwrap();
        let calm = p.with_noise(NoiseSpec::None).unwrap();
        let s = State::new(3.0, 4.0, 2.0);
        let h = 0.05;
        let a = step_euler_maruyama(&p, &s, 0.01, &[h, 0.0, 0.0]).unwrap();
        let b = step_euler_maruyama(&calm, &s, 0.01, &[]).unwrap();
        assert_relative_eq!(a.x - b.x, 0.2 * 3.0 * h, max_relative = 1e-12);
        assert_eq!(a.y, b.y);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn deficit_update_is_exact() {
        let p = dilution(0.02);
        let s = State::new(300.0, 400.0, 2.0);
        let (dt, dw) = (1e-3, -0.013);
        let w0 = p.z_f - s.total();
        let n = step_euler_maruyama(&p, &s, dt, &[dw]).unwrap();
        let w1 = p.z_f - n.total();
        assert!((w1 - w0 * (1.0 - p.theta * dt - 0.02 * dw)).abs() < 1e-9 * p.z_f);
    }

    #[test]
    fn rejects_wrong_increment_count() {
        let p = dilution(0.02);
        assert!(step_euler_maruyama(&p, &State::new(1.0, 1.0, 1.0), 0.1, &[0.1, 0.2]).is_err());
        assert!(step_milstein(&p, &State::new(1.0, 1.0, 1.0), 0.0, &[0.1]).is_err());
    }
}
