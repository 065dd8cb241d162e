//! Linear stability of the reduced two-dimensional system, in which the
//! substrate is eliminated through the attractor `z = z_f - x - y`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ChemostatParams;

/// `|theta - 1|` below which the coexistence line exists.
pub const LINE_THETA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Survivor {
    X,
    Y,
}

/// Jacobian of `(x(f(z) - theta), y(g(z) - theta))` with `z = z_f - x - y`.
pub fn reduced_jacobian(params: &ChemostatParams, x: f64, y: f64) -> [[f64; 2]; 2] {
    let z = params.z_f - x - y;
    let (f, g) = (params.f(z), params.g(z));
    let (fp, gp) = (params.curve_x.slope(z), params.curve_y.slope(z));
    let th = params.theta;
    [[f - th - x * fp, -x * fp], [-y * gp, g - th - y * gp]]
}

/// Eigenvalues at washout, ordered as `(g(z_f) - theta, f(z_f) - theta)`.
pub fn eigenvalues_washout(params: &ChemostatParams) -> (f64, f64) {
    let (cx, cy) = (&params.curve_x, &params.curve_y);
    let (zf, th) = (params.z_f, params.theta);
    (
        (cy.a * zf - (cy.b + zf) * (cy.gamma + th)) / (cy.b + zf),
        (cx.a * zf - (cx.b + zf) * (cx.gamma + th)) / (cx.b + zf),
    )
}

/// Steady state with only `which` present: `(x, y, z)`.
pub fn single_survivor_state(params: &ChemostatParams, which: Survivor) -> Result<[f64; 3]> {
    let curve = match which {
        Survivor::X => &params.curve_x,
        Survivor::Y => &params.curve_y,
    };
    let s = params.theta + curve.gamma;
    if s >= curve.a {
        return Err(Error::SteadyStateAbsent(format!(
            "theta + gamma = {s} >= a = {}: no finite substrate balances growth",
            curve.a
        )));
    }
    let z = curve.b * s / (curve.a - s);
    if !(z < params.z_f) {
        return Err(Error::SteadyStateAbsent(format!("break-even substrate {z} exceeds z_f = {}", params.z_f)));
    }
    let n = params.z_f - z;
    Ok(match which {
        Survivor::X => [n, 0.0, z],
        Survivor::Y => [0.0, n, z],
    })
}

/// Closed-form eigenvalues at a single-survivor steady state. The first
/// eigenvalue belongs to the surviving population, the second measures
/// invasion by the absent one.
pub fn eigenvalues_single_survivor(params: &ChemostatParams, which: Survivor) -> Result<(f64, f64)> {
    single_survivor_state(params, which)?;
    let (a1, b1, g1) = (params.curve_x.a, params.curve_x.b, params.curve_x.gamma);
    let (a2, b2, g2) = (params.curve_y.a, params.curve_y.b, params.curve_y.gamma);
    let (zf, th) = (params.z_f, params.theta);
    Ok(match which {
        Survivor::Y => (
            -(a2 - g2 - th) * (a2 * zf - (b2 + zf) * (g2 + th)) / (a2 * b2),
            ((g2 + th) * (a1 * b2 + (b1 - b2) * (g1 + th)) - a2 * b1 * (g1 + th))
                / (a2 * b1 - (b1 - b2) * (g2 + th)),
        ),
        Survivor::X => (
            -(a1 - g1 - th) * (a1 * zf - (b1 + zf) * (g1 + th)) / (a1 * b1),
            ((g2 + th) * (b2 * (-a1 + g1 + th) - b1 * (g1 + th)) + a2 * b1 * (g1 + th))
                / (a1 * b2 + (b1 - b2) * (g1 + th)),
        ),
    })
}

/// Nonzero eigenvalue on the coexistence line at the point whose
/// `y`-coordinate is `a` (so `x = z_f - 1 - a`); the other eigenvalue is 0.
pub fn eigenvalue_coexistence_line(params: &ChemostatParams, a: f64) -> Result<(f64, f64)> {
    if (params.theta - 1.0).abs() > LINE_THETA_TOL {
        return Err(Error::Precondition(format!(
            "line exists only at theta = 1, got theta = {}",
            params.theta
        )));
    }
    let zf = params.z_f;
    if !(a > 0.0 && a < zf - 1.0) {
        return Err(Error::Domain(format!("line position {a} outside (0, z_f - 1)")));
    }
    let (a1, b1) = (params.curve_x.a, params.curve_x.b);
    let (a2, b2) = (params.curve_y.a, params.curve_y.b);
    let (p1, p2) = ((b1 + 1.0).powi(2), (b2 + 1.0).powi(2));
    let l1 = (2.0 * a1 * b1 * p2 * (a - zf + 1.0) - 2.0 * a * a2 * p1 * b2) / (2.0 * p1 * p2);
    Ok((l1, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyState {
    Washout,
    YSurvivor,
    XSurvivor,
    CoexistenceLine,
}

impl SteadyState {
    pub fn label(&self) -> &'static str {
        match self {
            SteadyState::Washout => "washout",
            SteadyState::YSurvivor => "y-survivor",
            SteadyState::XSurvivor => "x-survivor",
            SteadyState::CoexistenceLine => "coexistence-line",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    NeutrallyStableAlongLine,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityEntry {
    pub state: SteadyState,
    pub eigenvalues: Option<(f64, f64)>,
    pub verdict: Verdict,
    /// Conditions that hold at this parameter point.
    pub conditions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub entries: Vec<StabilityEntry>,
}

impl StabilityReport {
    pub fn get(&self, state: SteadyState) -> &StabilityEntry {
        self.entries.iter().find(|e| e.state == state).expect("all four states are reported")
    }
}

fn verdict(l: (f64, f64)) -> Verdict {
    if l.0 < 0.0 && l.1 < 0.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    }
}

/// Stability of all four steady states. The line is evaluated at its midpoint.
pub fn stability_report(params: &ChemostatParams) -> StabilityReport {
    let (zf, th) = (params.z_f, params.theta);
    let cmp = |name: &str, v: f64| {
        if v < th {
            format!("{name}(z_f) < theta")
        } else {
            format!("{name}(z_f) >= theta")
        }
    };
    let theta_side = if th < 1.0 {
        "theta < 1"
    } else if th > 1.0 {
        "theta > 1"
    } else {
        "theta = 1"
    };

    let mut entries = Vec::with_capacity(4);
    let w = eigenvalues_washout(params);
    entries.push(StabilityEntry {
        state: SteadyState::Washout,
        eigenvalues: Some(w),
        verdict: verdict(w),
        conditions: vec![cmp("f", params.f(zf)), cmp("g", params.g(zf))],
    });
    for (state, which) in [(SteadyState::YSurvivor, Survivor::Y), (SteadyState::XSurvivor, Survivor::X)] {
        let entry = match eigenvalues_single_survivor(params, which) {
            Ok(l) => StabilityEntry {
                state,
                eigenvalues: Some(l),
                verdict: verdict(l),
                conditions: vec![
                    match which {
                        Survivor::Y => cmp("g", params.g(zf)),
                        Survivor::X => cmp("f", params.f(zf)),
                    },
                    theta_side.to_string(),
                ],
            },
            Err(e) => StabilityEntry { state, eigenvalues: None, verdict: Verdict::Absent, conditions: vec![e.to_string()] },
        };
        entries.push(entry);
    }
    let line = match eigenvalue_coexistence_line(params, 0.5 * (zf - 1.0)) {
        Ok(l) => StabilityEntry {
            state: SteadyState::CoexistenceLine,
            eigenvalues: Some(l),
            verdict: if l.0 < 0.0 { Verdict::NeutrallyStableAlongLine } else { Verdict::Unstable },
            conditions: vec!["z_f > 1".into(), "theta = 1".into()],
        },
        Err(e) => StabilityEntry {
            state: SteadyState::CoexistenceLine,
            eigenvalues: None,
            verdict: Verdict::Absent,
            conditions: vec![e.to_string()],
        },
    };
    entries.push(line);
    StabilityReport { entries }
}
