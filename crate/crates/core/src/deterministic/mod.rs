//! Deterministic dynamics of the dimensionless chemostat.

mod stability;
mod sweep;

pub use stability::{
    eigenvalue_coexistence_line, eigenvalues_single_survivor, eigenvalues_washout, reduced_jacobian,
    single_survivor_state, stability_report, SteadyState, StabilityEntry, StabilityReport, Survivor, Verdict,
    LINE_THETA_TOL,
};
pub use sweep::{classify_final, survivor_sweep, SweepAxis, SweepCell, SweepGrid, SweepInitial, SweepParam, SurvivorLabel, SurvivorMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChemostatParams;
use crate::numeric::{dopri5, linspace, OdeControls, OdeStats};
use crate::table::{Table, ToTable};

/// Populations `x`, `y` and substrate `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        State { x, y, z }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(v: [f64; 3]) -> Self {
        State { x: v[0], y: v[1], z: v[2] }
    }

    pub fn total(&self) -> f64 {
        self.x + self.y + self.z
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Point on the coexistence line with substrate at the break-even level,
    /// splitting the populations as `(z_f/2 - 1, z_f/2)`.
    pub fn on_line_split(z_f: f64) -> Self {
        State { x: z_f / 2.0 - 1.0, y: z_f / 2.0, z: 1.0 }
    }
}

/// Right-hand side of the deterministic system.
#[inline]
pub fn rhs(params: &ChemostatParams, s: &State) -> [f64; 3] {
    let f = params.f(s.z);
    let g = params.g(s.z);
    [
        s.x * (f - params.theta),
        s.y * (g - params.theta),
        params.theta * (params.z_f - s.z) - s.x * f - s.y * g,
    ]
}

/// Integration settings for [`integrate_ode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationControls {
    pub rtol: f64,
    /// Absolute tolerance as a multiple of `z_f`.
    pub atol_scale: f64,
    /// Number of output intervals on a uniform grid.
    pub n_out: usize,
    /// Explicit output times overriding `n_out`.
    pub output_times: Option<Vec<f64>>,
    pub max_steps: usize,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        IntegrationControls { rtol: 1e-9, atol_scale: 1e-9, n_out: 200, output_times: None, max_steps: 200_000_000 }
    }
}

impl IntegrationControls {
    pub fn with_tolerances(rtol: f64, atol_scale: f64) -> Self {
        IntegrationControls { rtol, atol_scale, ..Default::default() }
    }

    pub(crate) fn ode_controls(&self, z_f: f64) -> OdeControls<3> {
        let mut c = OdeControls::new(self.rtol, [self.atol_scale * z_f; 3]);
        c.nonneg = true;
        c.max_steps = self.max_steps;
        c
    }
}

/// Deterministic path sampled on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub stats: OdeStats,
}

impl OdeTrajectory {
    pub fn last(&self) -> State {
        *self.states.last().expect("trajectory has at least one state")
    }
}

impl ToTable for OdeTrajectory {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "x", "y", "z"]);
        for (ti, s) in self.times.iter().zip(&self.states) {
            t.push(vec![(*ti).into(), s.x.into(), s.y.into(), s.z.into()]);
        }
        t
    }
}

/// Adaptive Dormand-Prince integration of the full system.
pub fn integrate_ode(
    params: &ChemostatParams,
    s0: State,
    t_end: f64,
    controls: &IntegrationControls,
) -> Result<OdeTrajectory> {
    params.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::param("t_end", format!("must be positive, got {t_end}")));
    }
    if !(s0.x >= 0.0 && s0.y >= 0.0 && s0.z >= 0.0 && s0.is_finite()) {
        return Err(Error::Domain(format!("initial state must be finite and non-negative, got {s0:?}")));
    }
    let times = match &controls.output_times {
        Some(t) => t.clone(),
        None => linspace(0.0, t_end, controls.n_out.max(1)),
    };
    let ctrl = controls.ode_controls(params.z_f);
    let (ys, stats) = dopri5(|_, y| Ok(rhs(params, &State::from_array(*y))), 0.0, s0.to_array(), &times, &ctrl)?;
    Ok(OdeTrajectory { times, states: ys.into_iter().map(State::from_array).collect(), stats })
}

/// `y = z_f - x - 1`, the one-parameter family of steady states at `theta = 1`.
pub fn coexistence_line(params: &ChemostatParams, x: f64) -> Result<f64> {
    if !(x >= 0.0 && x <= params.z_f - 1.0) {
        return Err(Error::Domain(format!("x = {x} outside [0, z_f - 1] = [0, {}]", params.z_f - 1.0)));
    }
    Ok(params.z_f - x - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;
    use approx::assert_relative_eq;

    fn table1(theta: f64) -> ChemostatParams {
        ChemostatParams::table1(theta, NoiseSpec::None).unwrap()
    }

    #[test]
    fn washout_with_full_feed_is_fixed() {
        let p = table1(1.3);
        let d = rhs(&p, &State::new(0.0, 0.0, p.z_f));
        assert_eq!(d, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn line_points_are_fixed() {
        let p = table1(1.0);
        let d = rhs(&p, &State::new(7000.0, p.z_f - 7001.0, 1.0));
        for v in d {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn unit_state_substitution() {
        let p = table1(1.0);
        let d = rhs(&p, &State::new(1.0, 1.0, 1.0));
        assert!(d[0].abs() < 1e-12 && d[1].abs() < 1e-12);
        assert_relative_eq!(d[2], p.z_f - 1.0 - 2.0, max_relative = 1e-14);
    }

    #[test]
    fn coexistence_line_endpoints() {
        let p = table1(1.0);
        assert_eq!(coexistence_line(&p, 0.0).unwrap(), p.z_f - 1.0);
        assert_eq!(coexistence_line(&p, p.z_f - 1.0).unwrap(), 0.0);
        assert_eq!(coexistence_line(&p, 7499.0).unwrap(), 7500.0);
        assert!(coexistence_line(&p, -1.0).is_err());
        assert!(coexistence_line(&p, p.z_f).is_err());
    }

    #[test]
    fn start_on_line_stays_put() {
        let p = table1(1.0);
        let s0 = State::on_line_split(p.z_f);
        let tr = integrate_ode(&p, s0, 50.0, &IntegrationControls::default()).unwrap();
        for s in &tr.states {
            assert_relative_eq!(s.x, s0.x, max_relative = 1e-9);
            assert_relative_eq!(s.y, s0.y, max_relative = 1e-9);
            // z is controlled to the absolute tolerance 1e-9 z_f.
            assert!((s.z - 1.0).abs() < 10.0 * 1e-9 * p.z_f);
        }
    }

    #[test]
    fn mass_relaxes_exponentially() {
        let p = table1(1.0).with_z_f(1500.0).unwrap();
        let tr = integrate_ode(&p, State::new(1.0, 1.0, 0.0), 20.0, &IntegrationControls::default()).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = p.z_f - (p.z_f - 2.0) * (-t).exp();
            assert_relative_eq!(s.total(), exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = table1(1.0);
        assert!(integrate_ode(&p, State::new(-1.0, 0.0, 0.0), 1.0, &IntegrationControls::default()).is_err());
        assert!(integrate_ode(&p, State::new(1.0, 0.0, 0.0), 0.0, &IntegrationControls::default()).is_err());
    }
}
