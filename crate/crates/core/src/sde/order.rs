use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{step_raw, Scheme};
use crate::deterministic::State;
use crate::error::{Error, Result};
use crate::model::ChemostatParams;
use crate::numeric::ls_slope;
use crate::rng::NormalStream;

/// Refinement ladder `dt_coarse / 2^l`, `l = 0..levels`, measured against a
/// reference run `reference_refinement` halvings below the finest level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderStudyConfig {
    pub s0: State,
    pub t_end: f64,
    pub dt_coarse: f64,
    pub levels: usize,
    pub reference_refinement: u32,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderStudy {
    pub dts: Vec<f64>,
    /// Mean Euclidean error at `t_end`.
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub slope: f64,
}

fn clamp(s: &mut [f64; 3]) {
    for v in s.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Strong-error study with coupled increments: each coarse increment is the
/// sum of the reference increments it spans.
pub fn strong_order_study(params: &ChemostatParams, scheme: Scheme, cfg: &OrderStudyConfig) -> Result<OrderStudy> {
    params.validate()?;
    if cfg.levels < 3 {
        return Err(Error::param("levels", format!("a slope fit needs at least 3 levels, got {}", cfg.levels)));
    }
    if cfg.reference_refinement == 0 {
        return Err(Error::param("reference_refinement", "reference must be finer than the finest level"));
    }
    if cfg.n_paths == 0 {
        return Err(Error::param("n_paths", "at least one path"));
    }
    if !(cfg.dt_coarse > 0.0 && cfg.t_end >= cfg.dt_coarse) {
        return Err(Error::param("dt_coarse", "need 0 < dt_coarse <= t_end"));
    }
    let coarse_steps = (cfg.t_end / cfg.dt_coarse).round() as u64;
    let depth = (cfg.levels - 1) as u32 + cfg.reference_refinement;
    let ref_steps = coarse_steps << depth;
    let dt_ref = cfg.t_end / ref_steps as f64;
    let ratios: Vec<u64> = (0..cfg.levels).map(|l| 1u64 << (depth - l as u32)).collect();
    let dts: Vec<f64> = ratios.iter().map(|&r| dt_ref * r as f64).collect();
    let n_ch = params.noise.channels();
    let stream = NormalStream::new(cfg.seed);
    let sq = dt_ref.sqrt();

    let per_path: Vec<Vec<f64>> = (0..cfg.n_paths as u32)
        .into_par_iter()
        .map(|path| {
            let mut reference = cfg.s0.to_array();
            let mut level_state = vec![cfg.s0.to_array(); cfg.levels];
            let mut acc = vec![[0.0f64; 3]; cfg.levels];
            let mut cache = [[0.0f64; 2]; 3];
            let mut dw = [0.0f64; 3];
            for k in 0..ref_steps {
                let parity = (k & 1) as usize;
                if parity == 0 {
                    for (c, slot) in cache.iter_mut().enumerate().take(n_ch) {
                        *slot = stream.step_pair(path, k >> 1, c as u32);
                    }
                }
                for c in 0..n_ch {
                    dw[c] = sq * cache[c][parity];
                }
                reference = step_raw(scheme, params, reference, dt_ref, &dw);
                clamp(&mut reference);
                for l in 0..cfg.levels {
                    for c in 0..n_ch {
                        acc[l][c] += dw[c];
                    }
                    if (k + 1) % ratios[l] == 0 {
                        level_state[l] = step_raw(scheme, params, level_state[l], dts[l], &acc[l]);
                        clamp(&mut level_state[l]);
                        acc[l] = [0.0; 3];
                    }
                }
            }
            level_state
                .iter()
                .map(|s| ((s[0] - reference[0]).powi(2) + (s[1] - reference[1]).powi(2) + (s[2] - reference[2]).powi(2)).sqrt())
                .collect()
        })
        .collect();

    let n = cfg.n_paths as f64;
    let mut errors = Vec::with_capacity(cfg.levels);
    let mut std_errors = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let mean = per_path.iter().map(|e| e[l]).sum::<f64>() / n;
        let var = per_path.iter().map(|e| (e[l] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        errors.push(mean);
        std_errors.push((var / n).sqrt());
    }
    if errors.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Precondition(format!("degenerate strong errors {errors:?}")));
    }
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(OrderStudy { slope: ls_slope(&lx, &ly), dts, errors, std_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;

    fn cfg() -> OrderStudyConfig {
        OrderStudyConfig {
            s0: State::new(1.0, 1.0, 2.0),
            t_end: 1.0,
            dt_coarse: 0.05,
            levels: 4,
            reference_refinement: 3,
            n_paths: 20,
            seed: 1,
        }
    }

    #[test]
    fn calm_euler_is_first_order() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap().with_z_f(5.0).unwrap();
        let r = strong_order_study(&p, Scheme::EulerMaruyama, &cfg()).unwrap();
        assert!((r.slope - 1.0).abs() < 0.1, "{r:?}");
    }

    #[test]
    fn rejects_short_ladders() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap();
        let mut c = cfg();
        c.levels = 2;
        assert!(strong_order_study(&p, Scheme::EulerMaruyama, &c).is_err());
        c.levels = 4;
        c.reference_refinement = 0;
        assert!(strong_order_study(&p, Scheme::EulerMaruyama, &c).is_err());
    }
}
