use serde::{Deserialize, Serialize};

use super::domain::PolygonDomain;
use super::operator::FpOperator;

/// Advection discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Advection {
    /// First-order flux-vector upwinding, fully implicit.
    #[default]
    Upwind,
    /// Upwind plus a van Leer limited second-order correction, lagged by
    /// one step.
    Limited,
}

#[derive(Debug, Clone, Copy)]
struct Face {
    p: usize,
    e: usize,
    w: Option<usize>,
    ee: Option<usize>,
    /// Face length over the area of `p` and of `e`.
    to_p: f64,
    to_e: f64,
}

/// Explicit anti-diffusive flux correction over the interior faces.
#[derive(Debug, Clone)]
pub struct FluxCorrection {
    faces: Vec<(Face, usize)>,
    vel: Vec<[f64; 2]>,
    flux: Vec<f64>,
    loss: Vec<f64>,
}

fn van_leer(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

impl FluxCorrection {
    pub fn new(op: &FpOperator, dom: &PolygonDomain) -> Self {
        let mut faces = Vec::new();
        for k in 0..dom.len() {
            let (i, j) = dom.node(k);
            let (i, j) = (i as isize, j as isize);
            for axis in 0..2 {
                let step = |n: isize| if axis == 0 { dom.active(i + n, j) } else { dom.active(i, j + n) };
                let Some(e) = step(1) else { continue };
                let (pi, pj) = dom.node(k);
                let (ei, ej) = dom.node(e);
                let (wpx, wpy) = dom.widths(pi, pj);
                let (wex, wey) = dom.widths(ei, ej);
                let (len_p, len_e) = if axis == 0 { (wpy, wey) } else { (wpx, wex) };
                let len = len_p.min(len_e);
                faces.push((
                    Face { p: k, e, w: step(-1), ee: step(2), to_p: len / (wpx * wpy), to_e: len / (wex * wey) },
                    axis,
                ));
            }
        }
        FluxCorrection { faces, vel: op.drift.clone(), flux: Vec::new(), loss: Vec::new() }
    }

    /// `dp/dt` contribution of the limited correction at the current field.
    /// Face fluxes are scaled down where a node would lose more than its
    /// `budget` over one step of length `dt`.
    pub fn apply(&mut self, p: &[f64], budget: &[f64], dt: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let vel = &self.vel;
        let plus = |k: usize, a: usize| vel[k][a].max(0.0) * p[k];
        let minus = |k: usize, a: usize| vel[k][a].min(0.0) * p[k];
        self.flux.clear();
        self.loss.clear();
        self.loss.resize(p.len(), 0.0);
        for &(f, a) in &self.faces {
            let mut flux = 0.0;
            if let Some(w) = f.w {
                flux += 0.5 * van_leer(plus(f.p, a) - plus(w, a), plus(f.e, a) - plus(f.p, a));
            }
            if let Some(ee) = f.ee {
                flux -= 0.5 * van_leer(minus(f.e, a) - minus(f.p, a), minus(ee, a) - minus(f.e, a));
            }
            if flux > 0.0 {
                self.loss[f.p] += flux * f.to_p;
            } else {
                self.loss[f.e] -= flux * f.to_e;
            }
            self.flux.push(flux);
        }
        for (l, b) in self.loss.iter_mut().zip(budget) {
            let need = *l * dt;
            *l = if need > b.max(0.0) { b.max(0.0) / need } else { 1.0 };
        }
        for (&(f, _), &flux) in self.faces.iter().zip(&self.flux) {
            let flux = flux * if flux > 0.0 { self.loss[f.p] } else { self.loss[f.e] };
            out[f.p] -= flux * f.to_p;
            out[f.e] += flux * f.to_e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::{
        apply_boundaries, assemble_operator, build_domain, gaussian_initial, total_mass, CutRule, Stepper, TimeScheme,
    };
    use crate::model::{ChemostatParams, NoiseSpec};

    fn setup(noise: NoiseSpec, h: f64) -> (PolygonDomain, FpOperator) {
        let p = ChemostatParams::table1(1.0, noise).unwrap();
        let d = build_domain(&p, 3.0, 3.0, 1e-2, h, h).unwrap();
        let op = apply_boundaries(assemble_operator(&p, &d, &noise).unwrap(), &d, CutRule::ZeroFlux).unwrap();
        (d, op)
    }

    #[test]
    fn van_leer_is_symmetric_and_clipped() {
        assert_eq!(van_leer(1.0, 3.0), van_leer(3.0, 1.0));
        assert_eq!(van_leer(2.0, 2.0), 2.0);
        assert_eq!(van_leer(-1.0, 1.0), 0.0);
        assert_eq!(van_leer(0.0, 5.0), 0.0);
    }

    #[test]
    fn correction_moves_mass_without_creating_it() {
        let (d, op) = setup(NoiseSpec::None, 0.05);
        let (f, _) = gaussian_initial(&d, (0.9, 0.7), (0.1, 0.1)).unwrap();
        let mut c = FluxCorrection::new(&op, &d);
        let mut out = vec![0.0; d.len()];
        let budget = vec![f64::INFINITY; d.len()];
        c.apply(&f.values, &budget, 0.05, &mut out);
        let net: f64 = out.iter().enumerate().map(|(k, v)| v * d.area(k)).sum();
        let size: f64 = out.iter().enumerate().map(|(k, v)| v.abs() * d.area(k)).sum();
        assert!(size > 1e-3);
        assert!(net.abs() < 1e-12 * size.max(1.0), "{net}");
    }

    #[test]
    fn empty_budget_blocks_every_flux() {
        let (d, op) = setup(NoiseSpec::None, 0.05);
        let (f, _) = gaussian_initial(&d, (0.9, 0.7), (0.1, 0.1)).unwrap();
        let mut c = FluxCorrection::new(&op, &d);
        let mut out = vec![1.0; d.len()];
        c.apply(&f.values, &vec![0.0; d.len()], 0.05, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn limited_transport_is_sharper_than_upwind() {
        let (d, op) = setup(NoiseSpec::None, 0.02);
        let run = |limited: bool| {
            let (mut f, _) = gaussian_initial(&d, (1.0, 0.9), (0.05, 0.05)).unwrap();
            let mut st = Stepper::new(&op, 0.05, TimeScheme::ImplicitEuler).unwrap();
            if limited {
                st = st.with_correction(FluxCorrection::new(&op, &d));
            }
            st.evolve(&mut f, 1.0, &[]).unwrap();
            assert!((total_mass(&f, &d) - 1.0).abs() < 1e-8);
            assert!(f.ledger.iter().all(|r| r.clipped <= 1e-10), "{:?}", f.ledger.iter().map(|r| r.clipped).fold(0.0, f64::max));
            f.values.iter().cloned().fold(0.0, f64::max)
        };
        let (up, lim) = (run(false), run(true));
        assert!(lim > 1.05 * up, "upwind peak {up}, limited peak {lim}");
    }
}
