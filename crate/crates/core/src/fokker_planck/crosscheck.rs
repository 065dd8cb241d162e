use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::domain::PolygonDomain;
use super::field::{binned_mass, total_mass, DensityField};
use super::{run_fokker_planck, FpConfig};
use crate::asymptotics::{stage5_zbar, SINGULARITY_GUARD};
use crate::error::{Error, Result};
use crate::model::{ChemostatParams, NoiseSpec};
use crate::rng::NormalStream;

/// Ensemble of the reduced Langevin system started from samples of the
/// same Gaussian as the density solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedSdeConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for ReducedSdeConfig {
    fn default() -> Self {
        ReducedSdeConfig { n_paths: 10_000, dt: 0.01, seed: 1 }
    }
}

// Channels reserved for initial-condition sampling.
const IC_X: u32 = 8;
const IC_Y: u32 = 9;
const MAX_RESAMPLE: u64 = 1000;

fn inside(dom: &PolygonDomain, x: f64, y: f64) -> bool {
    (0.0..=dom.x_max).contains(&x) && (0.0..=dom.y_max).contains(&y) && y >= dom.cut_line(x)
}

/// Endpoints at `t_end` of Euler-Maruyama paths of the reduced system.
/// Paths that leave the box or come within the singularity guard are
/// counted as failures.
pub fn reduced_sde_endpoints(
    params: &ChemostatParams,
    dom: &PolygonDomain,
    fp: &FpConfig,
    cfg: &ReducedSdeConfig,
) -> Result<(Vec<[f64; 2]>, usize)> {
    if cfg.n_paths == 0 || !(cfg.dt > 0.0) {
        return Err(Error::Config("reduced ensemble needs paths and a positive step".into()));
    }
    let steps = (fp.horizon / cfg.dt).round() as u64;
    if ((steps as f64) * cfg.dt - fp.horizon).abs() > 1e-9 * fp.horizon.max(1.0) {
        return Err(Error::Config(format!("SDE step {} does not divide the horizon {}", cfg.dt, fp.horizon)));
    }
    let stream = NormalStream::new(cfg.seed);
    let th = params.theta;
    let sq = cfg.dt.sqrt();
    let noise = params.noise;
    let runs: Vec<Option<[f64; 2]>> = (0..cfg.n_paths as u32)
        .into_par_iter()
        .map(|path| {
            let mut start = None;
            for attempt in 0..MAX_RESAMPLE {
                let x = fp.means.0 + fp.sds.0 * stream.normal(path, attempt, IC_X);
                let y = fp.means.1 + fp.sds.1 * stream.normal(path, attempt, IC_Y);
                if inside(dom, x, y) {
                    start = Some((x, y));
                    break;
                }
            }
            let (mut x, mut y) = start?;
            let mut cache = [[0.0f64; 2]; 2];
            for k in 0..steps {
                let parity = (k & 1) as usize;
                if parity == 0 {
                    cache[0] = stream.step_pair(path, k >> 1, 0);
                    cache[1] = stream.step_pair(path, k >> 1, 1);
                }
                let z = stage5_zbar(params, x, y).ok()?;
                let (dx, dy) = (x * (params.f(z) - th) * cfg.dt, y * (params.g(z) - th) * cfg.dt);
                let (nx, ny) = match noise {
                    NoiseSpec::None => (x + dx, y + dy),
                    NoiseSpec::General { sigma1, sigma2, .. } => {
                        (x + dx + sigma1 * x * sq * cache[0][parity], y + dy + sigma2 * y * sq * cache[1][parity])
                    }
                    NoiseSpec::DilutionRate { sigma } => {
                        let w = sq * cache[0][parity];
                        (x + dx - sigma * x * w, y + dy - sigma * y * w)
                    }
                };
                x = nx.max(0.0);
                y = ny.max(0.0);
                let clearance = y - (dom.cut_line(x) - dom.cut_offset);
                if !(x <= dom.x_max && y <= dom.y_max) || clearance < SINGULARITY_GUARD {
                    return None;
                }
            }
            Some([x, y])
        })
        .collect();
    let failures = runs.iter().filter(|r| r.is_none()).count();
    Ok((runs.into_iter().flatten().collect(), failures))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub t: f64,
    pub bins: usize,
    /// Total-variation distance between the normalised binned distributions.
    pub tv_distance: f64,
    pub fp_mass: f64,
    pub fp_bins: Vec<f64>,
    pub sde_bins: Vec<f64>,
    pub sde_paths: usize,
    pub sde_failures: usize,
}

/// Compares an already evolved density against a reduced SDE ensemble.
pub fn crosscheck_field(
    params: &ChemostatParams,
    dom: &PolygonDomain,
    field: &DensityField,
    fp: &FpConfig,
    sde: &ReducedSdeConfig,
    bins: usize,
) -> Result<CrossCheckReport> {
    if bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    if (field.t - fp.horizon).abs() > 1e-6 * fp.horizon.max(1.0) {
        return Err(Error::Config(format!("density at t = {} but the SDE horizon is {}", field.t, fp.horizon)));
    }
    let (ends, failures) = reduced_sde_endpoints(params, dom, fp, sde)?;
    if ends.is_empty() {
        return Err(Error::Precondition("every reduced path failed".into()));
    }
    let fp_mass = total_mass(field, dom);
    let fp_bins: Vec<f64> = binned_mass(field, dom, bins).into_iter().map(|m| m / fp_mass).collect();
    let (bx, by) = (dom.x_max / bins as f64, dom.y_max / bins as f64);
    let mut sde_bins = vec![0.0; bins * bins];
    let w = 1.0 / ends.len() as f64;
    for [x, y] in &ends {
        let bi = ((x / bx) as usize).min(bins - 1);
        let bj = ((y / by) as usize).min(bins - 1);
        sde_bins[bi * bins + bj] += w;
    }
    let tv = 0.5 * fp_bins.iter().zip(&sde_bins).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(CrossCheckReport {
        t: field.t,
        bins,
        tv_distance: tv,
        fp_mass,
        fp_bins,
        sde_bins,
        sde_paths: ends.len(),
        sde_failures: failures,
    })
}

/// Evolves the density and the reduced ensemble to the same horizon and
/// compares them on a `bins x bins` partition.
pub fn fp_vs_sde_crosscheck(
    params: &ChemostatParams,
    fp: &FpConfig,
    sde: &ReducedSdeConfig,
    bins: usize,
) -> Result<CrossCheckReport> {
    let run = run_fokker_planck(params, fp)?;
    crosscheck_field(params, &run.domain, &run.field, fp, sde, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::build_domain;

    fn small(sigma: f64) -> (ChemostatParams, FpConfig) {
        let p = ChemostatParams::table1(1.0, NoiseSpec::General { sigma1: sigma, sigma2: sigma, sigma3: 0.0 }).unwrap();
        let fp = FpConfig { h: 0.05, dt: 0.05, horizon: 2.0, means: (0.8, 0.7), sds: (0.08, 0.08), ..FpConfig::default() };
        (p, fp)
    }

    #[test]
    fn density_and_ensemble_agree() {
        let (p, fp) = small(0.1);
        let sde = ReducedSdeConfig { n_paths: 4000, dt: 0.01, seed: 3 };
        let r = fp_vs_sde_crosscheck(&p, &fp, &sde, 6).unwrap();
        assert_eq!(r.sde_failures, 0);
        assert!((r.fp_mass - 1.0).abs() < 1e-8);
        assert!(r.tv_distance < 0.1, "{r:?}");
    }

    #[test]
    fn endpoints_are_reproducible() {
        let (p, fp) = small(0.05);
        let d = build_domain(&p, fp.x_max, fp.y_max, fp.cut_offset, fp.h, fp.h).unwrap();
        let sde = ReducedSdeConfig { n_paths: 50, dt: 0.01, seed: 9 };
        let a = reduced_sde_endpoints(&p, &d, &fp, &sde).unwrap();
        let b = reduced_sde_endpoints(&p, &d, &fp, &sde).unwrap();
        assert_eq!(a, b);
        let bad = ReducedSdeConfig { dt: 0.3, ..sde };
        assert!(reduced_sde_endpoints(&p, &d, &fp, &bad).is_err());
    }
}
