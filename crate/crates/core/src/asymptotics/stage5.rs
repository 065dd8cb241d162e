use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{stable_quadratic_roots, ChemostatParams};
use crate::numeric::{brent, dopri5, linspace, OdeControls};
use crate::table::{Table, ToTable};

/// Closest approach to the singularity line (measured along `y_bar`)
/// before reduced integration aborts.
pub const SINGULARITY_GUARD: f64 = 1e-2;

/// `theta - x a1 - y a2`, with net asymptotes `a_i - gamma_i` under death
/// rates. The substrate balance has a finite positive root iff this is negative.
pub fn growth_margin(params: &ChemostatParams, x_bar: f64, y_bar: f64) -> f64 {
    params.theta - x_bar * params.curve_x.asymptote() - y_bar * params.curve_y.asymptote()
}

/// `y_bar` on the line where the substrate balance degenerates.
pub fn singularity_line(params: &ChemostatParams, x_bar: f64) -> f64 {
    let (ax, ay) = (params.curve_x.asymptote(), params.curve_y.asymptote());
    params.theta / ay - ax / ay * x_bar
}

fn has_death(params: &ChemostatParams) -> bool {
    params.curve_x.gamma != 0.0 || params.curve_y.gamma != 0.0
}

fn check_point(params: &ChemostatParams, x_bar: f64, y_bar: f64) -> Result<()> {
    if !(x_bar >= 0.0 && y_bar >= 0.0 && x_bar.is_finite() && y_bar.is_finite()) {
        return Err(Error::Domain(format!("reduced populations must be finite and non-negative, got ({x_bar}, {y_bar})")));
    }
    if growth_margin(params, x_bar, y_bar) >= 0.0 {
        return Err(Error::Singularity { x_bar, y_bar });
    }
    Ok(())
}

/// Both roots of the cleared substrate balance (no death rates), positive
/// root first.
pub fn stage5_roots(params: &ChemostatParams, x_bar: f64, y_bar: f64) -> Result<(f64, f64)> {
    check_point(params, x_bar, y_bar)?;
    if has_death(params) {
        return Err(Error::Precondition("the quadratic form needs zero death rates".into()));
    }
    let (a1, b1, a2, b2, th) = (params.curve_x.a, params.curve_x.b, params.curve_y.a, params.curve_y.b, params.theta);
    let qa = th - x_bar * a1 - y_bar * a2;
    let qb = th * (b1 + b2) - x_bar * a1 * b2 - y_bar * a2 * b1;
    let qc = th * b1 * b2;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::NoPhysicalRoot { x_bar, y_bar });
    }
    let (r1, r2) = stable_quadratic_roots(qa, qb, qc, disc);
    Ok(if r1 > 0.0 { (r1, r2) } else { (r2, r1) })
}

/// Substrate solving `theta = x_bar f(z) + y_bar g(z)`.
pub fn stage5_zbar(params: &ChemostatParams, x_bar: f64, y_bar: f64) -> Result<f64> {
    if !has_death(params) {
        let (z, _) = stage5_roots(params, x_bar, y_bar)?;
        if !(z > 0.0) {
            return Err(Error::NoPhysicalRoot { x_bar, y_bar });
        }
        return Ok(z);
    }
    check_point(params, x_bar, y_bar)?;
    let h = |z: f64| x_bar * params.f(z) + y_bar * params.g(z) - params.theta;
    let mut hi = 10f64.max(10.0 * params.curve_x.b).max(10.0 * params.curve_y.b);
    while h(hi) <= 0.0 {
        hi *= 4.0;
        if !hi.is_finite() {
            return Err(Error::NoPhysicalRoot { x_bar, y_bar });
        }
    }
    brent(h, 0.0, hi, 1e-15 * hi, 300)
}

/// Scaled populations `(x/z_f, y/z_f)` with the balancing substrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedState {
    pub x_bar: f64,
    pub y_bar: f64,
    pub z_bar: f64,
}

impl ReducedState {
    pub fn new(params: &ChemostatParams, x_bar: f64, y_bar: f64) -> Result<Self> {
        Ok(ReducedState { x_bar, y_bar, z_bar: stage5_zbar(params, x_bar, y_bar)? })
    }

    /// Height above the singularity line.
    pub fn clearance(&self, params: &ChemostatParams) -> f64 {
        self.y_bar - singularity_line(params, self.x_bar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ReducedState>,
}

impl ReducedTrajectory {
    pub fn last(&self) -> ReducedState {
        *self.states.last().expect("reduced trajectory has at least one state")
    }
}

impl ToTable for ReducedTrajectory {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "x_bar", "y_bar", "z_bar"]);
        for (ti, s) in self.times.iter().zip(&self.states) {
            t.push(vec![(*ti).into(), s.x_bar.into(), s.y_bar.into(), s.z_bar.into()]);
        }
        t
    }
}

fn guarded(params: &ChemostatParams, x: f64, y: f64) -> Result<()> {
    let line = singularity_line(params, x);
    if y - line < SINGULARITY_GUARD {
        return Err(Error::Singularity { x_bar: x, y_bar: y });
    }
    Ok(())
}

/// Evolves the reduced populations, recomputing the substrate from the
/// algebraic balance at every stage evaluation.
pub fn stage5_integrate(
    params: &ChemostatParams,
    reduced0: ReducedState,
    t_end: f64,
    n_out: usize,
) -> Result<ReducedTrajectory> {
    params.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::param("t_end", "must be positive"));
    }
    let (x0, y0) = (reduced0.x_bar, reduced0.y_bar);
    guarded(params, x0, y0)?;
    let z0 = stage5_zbar(params, x0, y0)?;
    if (z0 - reduced0.z_bar).abs() > 1e-8 * z0.max(1.0) {
        return Err(Error::Precondition(format!(
            "initial substrate {} does not balance the populations (expected {z0})",
            reduced0.z_bar
        )));
    }
    let times = linspace(0.0, t_end, n_out.max(1));
    let mut ctrl = OdeControls::new(1e-11, [1e-13; 2]);
    ctrl.nonneg = true;
    let th = params.theta;
    let (ys, _) = dopri5(
        |_, s: &[f64; 2]| {
            guarded(params, s[0], s[1])?;
            let z = stage5_zbar(params, s[0], s[1])?;
            Ok([s[0] * (params.f(z) - th), s[1] * (params.g(z) - th)])
        },
        0.0,
        [x0, y0],
        &times,
        &ctrl,
    )?;
    let states = ys
        .into_iter()
        .map(|s| ReducedState::new(params, s[0], s[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedTrajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthCurve, NoiseSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table1(theta: f64) -> ChemostatParams {
        ChemostatParams::table1(theta, NoiseSpec::None).unwrap()
    }

    fn residual(p: &ChemostatParams, x: f64, y: f64, z: f64) -> f64 {
        (x * p.f(z) + y * p.g(z) - p.theta).abs()
    }

    #[test]
    fn balance_reference_points() {
        let p = table1(1.0);
        assert_relative_eq!(stage5_zbar(&p, 0.5, 0.5).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(stage5_zbar(&p, 1.0, 0.0).unwrap(), 1.0, max_relative = 1e-12);
        let (z, other) = stage5_roots(&p, 0.8, 0.4).unwrap();
        assert_relative_eq!(z, 0.737668, epsilon = 1e-6);
        assert_relative_eq!(other, -0.830788, epsilon = 1e-6);
    }

    #[test]
    fn brute_force_scan_agrees() {
        let p = table1(1.0);
        let h = |z: f64| 0.8 * p.f(z) + 0.4 * p.g(z) - 1.0;
        let mut z = 0.0;
        while h(z + 1e-6) < 0.0 {
            z += 1e-6;
        }
        assert!((stage5_zbar(&p, 0.8, 0.4).unwrap() - z).abs() < 2e-6);
    }

    #[test]
    fn singularity_line_values() {
        let p = table1(1.0);
        assert_relative_eq!(singularity_line(&p, 0.0), 1.0 / 1.636, max_relative = 1e-14);
        assert!(singularity_line(&p, 1.0 / 2.911).abs() < 1e-15);
        let x = 0.1;
        let y = singularity_line(&p, x);
        assert!(growth_margin(&p, x, y).abs() < 1e-14);
        assert!(matches!(stage5_zbar(&p, x, y), Err(Error::Singularity { .. })));
        assert!(matches!(stage5_zbar(&p, 0.1, 0.1), Err(Error::Singularity { .. })));
    }

    #[test]
    fn death_rates_use_the_scalar_solve() {
        let x = GrowthCurve::new(2.512, 0.041, 1.41306).unwrap();
        let y = GrowthCurve::new(1.411, 0.204, 0.171927).unwrap();
        let p = ChemostatParams::new(1.0, 1500.0, x, y, NoiseSpec::None).unwrap();
        let z = stage5_zbar(&p, 0.7, 0.9).unwrap();
        assert!(residual(&p, 0.7, 0.9, z) < 1e-10);
        assert!(stage5_roots(&p, 0.7, 0.9).is_err());
        // Net asymptotes set the singular line.
        let ys = singularity_line(&p, 0.3);
        assert!(stage5_zbar(&p, 0.3, ys - 1e-3).is_err());
        assert!(stage5_zbar(&p, 0.3, ys + 1e-3).is_ok());
    }

    #[test]
    fn balanced_split_is_stationary() {
        let p = table1(1.0);
        let r = stage5_integrate(&p, ReducedState::new(&p, 0.5, 0.5).unwrap(), 10.0, 10).unwrap();
        let end = r.last();
        assert!((end.x_bar - 0.5).abs() < 1e-12 && (end.y_bar - 0.5).abs() < 1e-12);
        assert_relative_eq!(end.z_bar, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn relaxes_onto_unit_total() {
        let p = table1(1.0);
        let r = stage5_integrate(&p, ReducedState::new(&p, 0.8, 0.4).unwrap(), 40.0, 400).unwrap();
        let end = r.last();
        assert!((end.x_bar + end.y_bar - 1.0).abs() < 1e-9);
        assert!(end.x_bar > 0.0 && end.y_bar > 0.0);
        assert_relative_eq!(end.z_bar, 1.0, epsilon = 1e-8);
        for (i, s) in r.states.iter().enumerate().skip(1).take(100) {
            let prev = r.states[i - 1];
            let d = (s.x_bar + s.y_bar) - (prev.x_bar + prev.y_bar);
            let side = 1.0 - prev.x_bar - prev.y_bar;
            assert!(d * side >= 0.0);
        }
    }

    #[test]
    fn higher_dilution_loses_y() {
        let p = table1(1.02);
        let r = stage5_integrate(&p, ReducedState::new(&p, 0.5, 0.6).unwrap(), 2000.0, 40).unwrap();
        assert!(r.last().y_bar < 1e-3 * r.last().x_bar);
    }

    #[test]
    fn start_inside_guard_is_rejected() {
        let p = table1(1.0);
        let x = 0.1;
        let y = singularity_line(&p, x) + 0.5 * SINGULARITY_GUARD;
        let s = ReducedState::new(&p, x, y).unwrap();
        assert!(matches!(stage5_integrate(&p, s, 1.0, 4), Err(Error::Singularity { .. })));
    }

    #[test]
    fn inconsistent_substrate_rejected() {
        let p = table1(1.0);
        let s = ReducedState { x_bar: 0.8, y_bar: 0.4, z_bar: 1.0 };
        assert!(matches!(stage5_integrate(&p, s, 1.0, 4), Err(Error::Precondition(_))));
    }

    proptest! {
        #[test]
        fn balance_residual_and_discarded_root(x in 0.0f64..3.0, y in 0.0f64..3.0) {
            let p = table1(1.0);
            prop_assume!(growth_margin(&p, x, y) < -1e-9);
            let (z, other) = stage5_roots(&p, x, y).unwrap();
            prop_assert!(z > 0.0);
            prop_assert!(other <= 0.0);
            prop_assert!(residual(&p, x, y, z) <= 1e-10);
        }

        #[test]
        fn depletion_and_reduced_conditions_coincide(x in 0.0f64..2.0, y in 0.0f64..2.0, theta in 0.2f64..1.5) {
            let p = table1(theta);
            let depletes = growth_margin(&p, x, y) < 0.0;
            let reduced_ok = stage5_zbar(&p, x, y).is_ok();
            prop_assert_eq!(depletes, reduced_ok);
        }
    }
}
