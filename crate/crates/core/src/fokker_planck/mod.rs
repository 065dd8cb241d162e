//! Density of the reduced two-population system on the corner-cut box:
//! vertex-centred finite volumes, implicit time stepping, diagnostics.

mod crosscheck;
mod domain;
mod field;
mod limiter;
mod operator;
pub mod sparse;

pub use crosscheck::{crosscheck_field, fp_vs_sde_crosscheck, reduced_sde_endpoints, CrossCheckReport, ReducedSdeConfig};
pub use domain::{build_domain, BoundaryTag, PolygonDomain};
pub use field::{
    binned_mass, gaussian_initial, gaussian_outside_mass, marginal_mass, marginal_table, marginals, mass_in, peak,
    snapshot_table, step_density, total_mass, DensityField, MassLedger, MassRecord, Region, StepReport, Stepper,
    TimeScheme, CLIP_THRESHOLD,
};
pub use limiter::{Advection, FluxCorrection};
pub use operator::{apply_boundaries, assemble_operator, CutRule, FpOperator};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ChemostatParams;

/// Grid, initial condition and time stepping for one density run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpConfig {
    pub x_max: f64,
    pub y_max: f64,
    pub cut_offset: f64,
    pub h: f64,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: TimeScheme,
    pub advection: Advection,
    pub rule: CutRule,
    pub means: (f64, f64),
    pub sds: (f64, f64),
    /// Times at which snapshots are kept.
    pub snapshots: Vec<f64>,
}

impl Default for FpConfig {
    fn default() -> Self {
        FpConfig {
            x_max: 3.0,
            y_max: 3.0,
            cut_offset: 1e-2,
            h: 0.01,
            dt: 0.05,
            horizon: 500.0,
            scheme: TimeScheme::ImplicitEuler,
            advection: Advection::Upwind,
            rule: CutRule::ZeroFlux,
            means: (0.5, 0.5),
            sds: (0.05, 0.05),
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpRun {
    pub domain: PolygonDomain,
    /// Final field with the full mass ledger.
    pub field: DensityField,
    pub snapshots: Vec<DensityField>,
    pub initial_raw_mass: f64,
    pub max_iterations: usize,
}

/// Builds the domain and operator from `params` (noise included) and
/// evolves the Gaussian initial density to the horizon.
pub fn run_fokker_planck(params: &ChemostatParams, cfg: &FpConfig) -> Result<FpRun> {
    let domain = build_domain(params, cfg.x_max, cfg.y_max, cfg.cut_offset, cfg.h, cfg.h)?;
    let op = assemble_operator(params, &domain, &params.noise)?;
    let op = apply_boundaries(op, &domain, cfg.rule)?;
    let (mut field, raw) = gaussian_initial(&domain, cfg.means, cfg.sds)?;
    let mut stepper = Stepper::new(&op, cfg.dt, cfg.scheme)?;
    if cfg.advection == Advection::Limited {
        stepper = stepper.with_correction(FluxCorrection::new(&op, &domain));
    }
    let snapshots = stepper.evolve(&mut field, cfg.horizon, &cfg.snapshots)?;
    Ok(FpRun { domain, field, snapshots, initial_raw_mass: raw, max_iterations: stepper.peak_iterations })
}
