//! Survivor maps over parameter grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{integrate_ode, IntegrationControls, State, LINE_THETA_TOL};
use crate::error::{Error, Result};
use crate::model::ChemostatParams;
use crate::table::{Table, ToTable};

/// Population size below which a population counts as extinct, relative to `z_f`.
pub const EXTINCTION_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Theta,
    ZF,
    A1,
    B1,
    Gamma1,
    A2,
    B2,
    Gamma2,
}

impl SweepParam {
    pub fn apply(&self, p: &mut ChemostatParams, v: f64) {
        match self {
            SweepParam::Theta => p.theta = v,
            SweepParam::ZF => p.z_f = v,
            SweepParam::A1 => p.curve_x.a = v,
            SweepParam::B1 => p.curve_x.b = v,
            SweepParam::Gamma1 => p.curve_x.gamma = v,
            SweepParam::A2 => p.curve_y.a = v,
            SweepParam::B2 => p.curve_y.b = v,
            SweepParam::Gamma2 => p.curve_y.gamma = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Cartesian grid of one or two swept parameters around a base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: ChemostatParams,
    pub axis1: SweepAxis,
    #[serde(default)]
    pub axis2: Option<SweepAxis>,
}

/// Equal initial populations, as in the survivor maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepInitial {
    pub population: f64,
    /// Initial substrate; `None` starts at the feed level.
    #[serde(default)]
    pub substrate: Option<f64>,
}

impl Default for SweepInitial {
    fn default() -> Self {
        SweepInitial { population: 1.0, substrate: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivorLabel {
    X,
    Y,
    BothWashout,
    /// Both persist at `theta = 1` (the coexistence line).
    Coexist,
    /// Both still present at the horizon away from `theta = 1`.
    Undetermined,
    NumericalFailure,
}

impl SurvivorLabel {
    pub fn label(&self) -> &'static str {
        match self {
            SurvivorLabel::X => "x",
            SurvivorLabel::Y => "y",
            SurvivorLabel::BothWashout => "both-washout",
            SurvivorLabel::Coexist => "coexist",
            SurvivorLabel::Undetermined => "undetermined",
            SurvivorLabel::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub param1: f64,
    pub param2: Option<f64>,
    pub label: SurvivorLabel,
    pub final_state: Option<State>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivorMap {
    pub cells: Vec<SweepCell>,
}

impl ToTable for SurvivorMap {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["param1", "param2", "survivor_label", "final_x", "final_y", "final_z"]);
        for c in &self.cells {
            let s = c.final_state.unwrap_or(State::new(f64::NAN, f64::NAN, f64::NAN));
            t.push(vec![
                c.param1.into(),
                c.param2.unwrap_or(f64::NAN).into(),
                c.label.label().into(),
                s.x.into(),
                s.y.into(),
                s.z.into(),
            ]);
        }
        t
    }
}

/// Extinct: below the threshold and not growing.
pub(crate) fn is_extinct(value: f64, rate: f64, z_f: f64) -> bool {
    value < EXTINCTION_FRACTION * z_f && (value == 0.0 || rate < 0.0)
}

/// Labels the final state of a deterministic run.
pub fn classify_final(params: &ChemostatParams, s: &State) -> SurvivorLabel {
    let x_gone = is_extinct(s.x, params.f(s.z) - params.theta, params.z_f);
    let y_gone = is_extinct(s.y, params.g(s.z) - params.theta, params.z_f);
    match (x_gone, y_gone) {
        (true, true) => SurvivorLabel::BothWashout,
        (true, false) => SurvivorLabel::Y,
        (false, true) => SurvivorLabel::X,
        (false, false) if (params.theta - 1.0).abs() <= LINE_THETA_TOL => SurvivorLabel::Coexist,
        (false, false) => SurvivorLabel::Undetermined,
    }
}

/// Integrates every grid cell to `t_end` and labels the survivor.
pub fn survivor_sweep(
    grid: &SweepGrid,
    initial: &SweepInitial,
    t_end: f64,
    controls: &IntegrationControls,
) -> Result<SurvivorMap> {
    if grid.axis1.values.is_empty() || grid.axis2.as_ref().map_or(false, |a| a.values.is_empty()) {
        return Err(Error::param("axis", "sweep axes must be non-empty"));
    }
    if !(initial.population > 0.0) {
        return Err(Error::param("population", "initial population must be positive"));
    }
    let mut points = Vec::new();
    for &v1 in &grid.axis1.values {
        match &grid.axis2 {
            Some(ax) => points.extend(ax.values.iter().map(|&v2| (v1, Some(v2)))),
            None => points.push((v1, None)),
        }
    }
    let mut controls = controls.clone();
    controls.n_out = 1;
    controls.output_times = None;
    let cells = points
        .par_iter()
        .map(|&(v1, v2)| {
            let mut p = grid.base;
            grid.axis1.param.apply(&mut p, v1);
            if let (Some(ax), Some(v2)) = (&grid.axis2, v2) {
                ax.param.apply(&mut p, v2);
            }
            let run = p.validate().and_then(|_| {
                let s0 = State::new(initial.population, initial.population, initial.substrate.unwrap_or(p.z_f));
                integrate_ode(&p, s0, t_end, &controls)
            });
            match run {
                Ok(tr) => {
                    let s = tr.last();
                    SweepCell { param1: v1, param2: v2, label: classify_final(&p, &s), final_state: Some(s), failure: None }
                }
                Err(e) => SweepCell {
                    param1: v1,
                    param2: v2,
                    label: SurvivorLabel::NumericalFailure,
                    final_state: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SurvivorMap { cells })
}
