//! Large-feed reduction: exponential growth under saturated substrate,
//! depletion, the fast substrate collapse and the slow reduced system.

mod composite;
mod stage5;

pub use composite::{composite_trajectory, composite_vs_full, CompositeReport, LadderRow, StagedTrajectory};
pub use stage5::{
    growth_margin, singularity_line, stage5_integrate, stage5_roots, stage5_zbar, ReducedState, ReducedTrajectory,
    SINGULARITY_GUARD,
};

use serde::Serialize;

use crate::deterministic::State;
use crate::error::{Error, Result};
use crate::model::ChemostatParams;
use crate::numeric::{brent, dopri5, OdeControls};

/// Net exponential rates under saturated substrate, `a_i - gamma_i - theta`.
pub fn saturated_rates(params: &ChemostatParams) -> Result<[f64; 2]> {
    let r = [params.curve_x.asymptote() - params.theta, params.curve_y.asymptote() - params.theta];
    for (i, &ri) in r.iter().enumerate() {
        if !(ri > 0.0) {
            return Err(Error::Precondition(format!(
                "population {} cannot grow under saturated substrate (net rate {ri})",
                ["x", "y"][i]
            )));
        }
    }
    Ok(r)
}

/// Populations growing freely while substrate relaxes to the feed; `z0` is
/// the substrate at the start of the phase.
pub fn stage2_solution(params: &ChemostatParams, m1: f64, m2: f64, z0: f64, t: f64) -> Result<State> {
    let [r1, r2] = saturated_rates(params)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t = {t} must be non-negative")));
    }
    let c0 = 1.0 - z0 / params.z_f;
    Ok(State::new(
        m1 * (r1 * t).exp(),
        m2 * (r2 * t).exp(),
        params.z_f * (1.0 - c0 * (-params.theta * t).exp()),
    ))
}

/// Time offset and depletion-phase coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Matching {
    pub l: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// `L` implied by `M2` minus `L` implied by `M1`.
    pub m2_residual: f64,
}

pub fn matching_constants(params: &ChemostatParams, m1: f64, m2: f64) -> Result<Matching> {
    let [r1, r2] = saturated_rates(params)?;
    if !(m1 > 0.0 && m2 >= 0.0) {
        return Err(Error::param("M1", "need M1 > 0 and M2 >= 0"));
    }
    if !(params.z_f > m1 && params.z_f > m2) {
        return Err(Error::Precondition(format!("z_f = {} must exceed M1 and M2", params.z_f)));
    }
    let l = (params.z_f / m1).ln() / r1;
    let m2_residual = if m2 > 0.0 { (params.z_f / m2).ln() / r2 - l } else { f64::INFINITY };
    Ok(Matching {
        l,
        mu1: m1 * (r1 * l).exp() / params.z_f,
        mu2: m2 * (r2 * l).exp() / params.z_f,
        m2_residual,
    })
}

/// Constants tying the stages together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StagePlan {
    pub m1: f64,
    pub m2: f64,
    pub l: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub m2_residual: f64,
    pub t0_prime: f64,
    pub x0_prime: f64,
    pub y0_prime: f64,
    pub z_infinity: f64,
}

impl StagePlan {
    pub fn new(params: &ChemostatParams, m1: f64, m2: f64) -> Result<Self> {
        let m = matching_constants(params, m1, m2)?;
        Self::from_mu(params, m1, m2, m)
    }

    /// Plan driven directly by the depletion-phase coefficients.
    pub fn from_coefficients(params: &ChemostatParams, mu1: f64, mu2: f64) -> Result<Self> {
        saturated_rates(params)?;
        let m = Matching { l: f64::NAN, mu1, mu2, m2_residual: f64::NAN };
        Self::from_mu(params, f64::NAN, f64::NAN, m)
    }

    fn from_mu(params: &ChemostatParams, m1: f64, m2: f64, m: Matching) -> Result<Self> {
        let mut plan = StagePlan {
            m1,
            m2,
            l: m.l,
            mu1: m.mu1,
            mu2: m.mu2,
            m2_residual: m.m2_residual,
            t0_prime: f64::NAN,
            x0_prime: f64::NAN,
            y0_prime: f64::NAN,
            z_infinity: f64::NAN,
        };
        let (t0, x0, y0) = find_t0_prime(&plan, params)?;
        plan.t0_prime = t0;
        plan.x0_prime = x0;
        plan.y0_prime = y0;
        plan.z_infinity = z_infinity(params, x0, y0)?;
        Ok(plan)
    }

    /// `theta - x0' a1 - y0' a2` (with net asymptotes under death rates);
    /// negative when substrate reaches zero from above.
    pub fn depletion_margin(&self, params: &ChemostatParams) -> f64 {
        growth_margin(params, self.x0_prime, self.y0_prime)
    }
}

/// Scaled populations and substrate `(x', y', z')` during depletion.
pub fn stage3_solution(plan: &StagePlan, params: &ChemostatParams, t_prime: f64) -> Result<[f64; 3]> {
    let [r1, r2] = saturated_rates(params)?;
    let x = plan.mu1 * (r1 * t_prime).exp();
    let y = plan.mu2 * (r2 * t_prime).exp();
    Ok([x, y, 1.0 - x - y])
}

const T0_HORIZON: f64 = 1e4;

/// Root of `z'(t') = 0` and the populations there. `z'` is strictly
/// decreasing, so the root is unique.
pub fn find_t0_prime(plan: &StagePlan, params: &ChemostatParams) -> Result<(f64, f64, f64)> {
    let [r1, r2] = saturated_rates(params)?;
    let (mu1, mu2) = (plan.mu1, plan.mu2);
    if !(mu1 >= 0.0 && mu2 >= 0.0 && mu1 + mu2 > 0.0) || !(mu1 + mu2).is_finite() {
        return Err(Error::param("mu", format!("need non-negative coefficients with a positive sum, got ({mu1}, {mu2})")));
    }
    let zp = |t: f64| 1.0 - mu1 * (r1 * t).exp() - mu2 * (r2 * t).exp();
    let (mut lo, mut hi) = (0.0, 0.0);
    if zp(0.0) > 0.0 {
        hi = 1.0;
        while zp(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > T0_HORIZON {
                return Err(Error::NoBracket(format!("z' stays positive up to t' = {T0_HORIZON}")));
            }
        }
    } else {
        lo = -1.0;
        while zp(lo) <= 0.0 {
            hi = lo;
            lo *= 2.0;
            if lo < -T0_HORIZON {
                return Err(Error::NoBracket(format!("z' stays non-positive down to t' = {}", -T0_HORIZON)));
            }
        }
    }
    let t0 = brent(zp, lo, hi, 1e-15, 200)?;
    Ok((t0, mu1 * (r1 * t0).exp(), mu2 * (r2 * t0).exp()))
}

/// Solves `x0 f(Z) + y0 g(Z) = theta` on a bracket starting at
/// `[0, max(10, 10 b1, 10 b2)]`.
pub fn z_infinity(params: &ChemostatParams, x0: f64, y0: f64) -> Result<f64> {
    if growth_margin(params, x0, y0) >= 0.0 {
        return Err(Error::NoPhysicalRoot { x_bar: x0, y_bar: y0 });
    }
    let h = |z: f64| x0 * params.f(z) + y0 * params.g(z) - params.theta;
    let mut hi = 10f64.max(10.0 * params.curve_x.b).max(10.0 * params.curve_y.b);
    while h(hi) <= 0.0 {
        hi *= 10.0;
        if !hi.is_finite() {
            return Err(Error::NoPhysicalRoot { x_bar: x0, y_bar: y0 });
        }
    }
    brent(h, 0.0, hi, 1e-15 * hi.max(1.0), 300)
}

/// Fast substrate collapse at frozen populations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage4Path {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    /// Root of the algebraic balance from the bracketed solve.
    pub z_infinity: f64,
}

impl Stage4Path {
    pub fn terminal(&self) -> f64 {
        *self.z.last().expect("stage-4 path has at least one point")
    }
}

/// Integrates `dZ/dT = theta - x0' f(Z) - y0' g(Z)` from `Z(0) = z_start`.
pub fn stage4_evolve(plan: &StagePlan, params: &ChemostatParams, z_start: f64, times: &[f64]) -> Result<Stage4Path> {
    let z_inf = z_infinity(params, plan.x0_prime, plan.y0_prime)?;
    if !(z_start > 0.0) {
        return Err(Error::param("z_start", "must be positive"));
    }
    let (x0, y0, th) = (plan.x0_prime, plan.y0_prime, params.theta);
    let mut ctrl = OdeControls::new(1e-12, [1e-13 * z_start.max(1.0)]);
    ctrl.nonneg = true;
    let (zs, _) = dopri5(|_, z: &[f64; 1]| Ok([th - x0 * params.f(z[0]) - y0 * params.g(z[0])]), 0.0, [z_start], times, &ctrl)?;
    Ok(Stage4Path { times: times.to_vec(), z: zs.into_iter().map(|z| z[0]).collect(), z_infinity: z_inf })
}

/// Relaxation rate of the substrate collapse near its root.
pub fn stage4_rate(params: &ChemostatParams, x0: f64, y0: f64, z: f64) -> f64 {
    x0 * params.curve_x.slope(z) + y0 * params.curve_y.slope(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthCurve, NoiseSpec};
    use crate::numeric::linspace;
    use approx::assert_relative_eq;

    fn table1(theta: f64) -> ChemostatParams {
        ChemostatParams::table1(theta, NoiseSpec::None).unwrap()
    }

    #[test]
    fn stage2_initial_value_and_ratio() {
        let p = table1(1.0);
        let s = stage2_solution(&p, 1.0, 1.0, 3.0, 0.0).unwrap();
        assert_eq!((s.x, s.y), (1.0, 1.0));
        assert_relative_eq!(s.z, 3.0, max_relative = 1e-12);
        let s = stage2_solution(&p, 1.0, 1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(s.x / s.y, (1.275f64 * 2.0).exp(), max_relative = 1e-12);
        let late = stage2_solution(&p, 1.0, 1.0, 0.0, 60.0).unwrap();
        assert_relative_eq!(late.z, p.z_f, max_relative = 1e-15);
    }

    #[test]
    fn stage2_rejects_no_growth() {
        assert!(stage2_solution(&table1(1.7), 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(matching_constants(&table1(3.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn matching_reference_values() {
        let p = table1(1.0);
        let m = matching_constants(&p, 1.0, 2.0).unwrap();
        assert_relative_eq!(m.l, 15000f64.ln() / 1.911, max_relative = 1e-14);
        assert_relative_eq!(m.l, 5.03182, epsilon = 1e-5);
        assert_relative_eq!(m.mu1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(m.mu2, 2.0 * 15000f64.powf(0.636 / 1.911 - 1.0), max_relative = 1e-10);
        let m2 = p.z_f * (-0.636 * m.l).exp();
        let back = matching_constants(&p, 1.0, m2).unwrap();
        assert_relative_eq!(back.mu2, 1.0, max_relative = 1e-12);
        assert!(back.m2_residual.abs() < 1e-9);
    }

    #[test]
    fn stage3_limits() {
        let p = table1(1.0);
        let plan = StagePlan::from_coefficients(&p, 0.4, 0.6).unwrap();
        let early = stage3_solution(&plan, &p, -80.0).unwrap();
        assert!(early[0] < 1e-60 && early[1] < 1e-20);
        assert_relative_eq!(early[2], 1.0, epsilon = 1e-20);
        assert!(stage3_solution(&plan, &p, 0.0).unwrap()[2].abs() < 1e-15);
        assert!(plan.t0_prime.abs() < 1e-14);
        assert_relative_eq!(plan.x0_prime, 0.4, max_relative = 1e-12);
    }

    #[test]
    fn depletion_root_for_equal_coefficients() {
        let p = table1(1.0);
        let plan = StagePlan::from_coefficients(&p, 0.3, 0.3).unwrap();
        assert!(plan.t0_prime > 0.0);
        assert!(stage3_solution(&plan, &p, plan.t0_prime).unwrap()[2].abs() <= 1e-12);
        assert!(plan.depletion_margin(&p) < 0.0);
        assert_relative_eq!(plan.x0_prime + plan.y0_prime, 1.0, epsilon = 1e-12);
        // Substrate falls monotonically on either side of the root.
        for t in linspace(-5.0, 2.0, 70) {
            let a = stage3_solution(&plan, &p, t).unwrap()[2];
            let b = stage3_solution(&plan, &p, t + 0.1).unwrap()[2];
            assert!(b < a);
        }
        assert_relative_eq!(plan.z_infinity, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_coefficients_rejected() {
        assert!(StagePlan::from_coefficients(&table1(1.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn collapse_roots() {
        let p = table1(1.0);
        assert_relative_eq!(z_infinity(&p, 1.0, 0.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(z_infinity(&p, 0.3, 0.7).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(z_infinity(&p, 0.8, 0.4).unwrap(), 0.737668, epsilon = 1e-6);
        assert!(z_infinity(&p, 0.1, 0.1).is_err());
    }

    #[test]
    fn collapse_integration_agrees_with_root() {
        let p = table1(1.0);
        let mut plan = StagePlan::from_coefficients(&p, 0.3, 0.3).unwrap();
        plan.x0_prime = 0.8;
        plan.y0_prime = 0.4;
        let path = stage4_evolve(&plan, &p, 500.0, &linspace(0.0, 320.0, 160)).unwrap();
        assert!(path.z.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!((path.terminal() - path.z_infinity).abs() < 1e-8);
    }

    #[test]
    fn collapse_with_death_rates() {
        let x = GrowthCurve::new(2.512, 0.041, 1.41306).unwrap();
        let y = GrowthCurve::new(1.411, 0.204, 0.171927).unwrap();
        let p = ChemostatParams::new(0.5, 1500.0, x, y, NoiseSpec::None).unwrap();
        let z = z_infinity(&p, 0.6, 0.4).unwrap();
        assert!((0.6 * p.f(z) + 0.4 * p.g(z) - 0.5).abs() < 1e-12);
    }
}
