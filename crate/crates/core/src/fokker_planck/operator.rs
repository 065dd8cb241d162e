use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::domain::PolygonDomain;
use super::sparse::Csr;
use crate::asymptotics::stage5_zbar;
use crate::error::{Error, Result};
use crate::model::{ChemostatParams, NoiseSpec};

/// Treatment of faces shared with masked-out nodes below the cut line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// Normal flux zeroed on cut faces.
    #[default]
    ZeroFlux,
    /// Ghost density zero behind cut faces; mass leaves through them.
    Absorbing,
}

/// Node-wise drift and diffusion coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Coeffs {
    u: f64,
    v: f64,
    dxx: f64,
    dyy: f64,
    dxy: f64,
}

/// Discrete generator `dp/dt = L p` on the active nodes, kept as separate
/// advection, diffusion, cross-diffusion and boundary-leak parts sharing one
/// nine-point pattern.
#[derive(Debug, Clone)]
pub struct FpOperator {
    pub matrix: Csr,
    pub advection: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub cross: Vec<f64>,
    pub leak: Vec<f64>,
    pub areas: Vec<f64>,
    /// Reduced drift `(x (f - theta), y (g - theta))` at each node.
    pub drift: Vec<[f64; 2]>,
    /// `(D_xx, D_yy)` at each node.
    pub diffusivity: Vec<[f64; 2]>,
    pub rule: Option<CutRule>,
}

/// Diffusion parameters `(s1, s2, cross)`: `D_xx = s1^2 x^2 / 2`,
/// `D_yy = s2^2 y^2 / 2`, mixed `cross x y / 2`.
fn diffusion_of(noise: &NoiseSpec) -> (f64, f64, f64) {
    match *noise {
        NoiseSpec::None => (0.0, 0.0, 0.0),
        NoiseSpec::General { sigma1, sigma2, .. } => (sigma1, sigma2, 0.0),
        NoiseSpec::DilutionRate { sigma } => (sigma, sigma, sigma * sigma),
    }
}

// Face flux coefficient: (node, [advection, diffusion, cross]).
type FaceTerm = (usize, [f64; 3]);

struct Assembler<'a> {
    dom: &'a PolygonDomain,
    c: Vec<Coeffs>,
}

impl Assembler<'_> {
    /// Tangential derivative stencil of `q = D_xy p` at node `(i, j)`;
    /// `along_y` selects the direction.
    fn tangential(&self, i: isize, j: isize, along_y: bool, scale: f64, out: &mut Vec<FaceTerm>) {
        let (h, plus, minus) = if along_y {
            (self.dom.hy, self.dom.active(i, j + 1), self.dom.active(i, j - 1))
        } else {
            (self.dom.hx, self.dom.active(i + 1, j), self.dom.active(i - 1, j))
        };
        let me = self.dom.active(i, j).expect("tangential stencil on an active node");
        let mut push = |k: usize, w: f64| out.push((k, [0.0, 0.0, scale * w * self.c[k].dxy]));
        match (plus, minus) {
            (Some(p), Some(m)) => {
                push(p, 0.5 / h);
                push(m, -0.5 / h);
            }
            (Some(p), None) => {
                push(p, 1.0 / h);
                push(me, -1.0 / h);
            }
            (None, Some(m)) => {
                push(me, 1.0 / h);
                push(m, -1.0 / h);
            }
            (None, None) => {}
        }
    }

    /// Flux (per unit length, positive towards `+x`) through the face
    /// between `(i, j)` and `(i + 1, j)`.
    fn x_face(&self, i: isize, j: isize) -> Option<Vec<FaceTerm>> {
        let p = self.dom.active(i, j)?;
        let e = self.dom.active(i + 1, j)?;
        let (cp, ce) = (self.c[p], self.c[e]);
        let h = self.dom.hx;
        let mut t = vec![(p, [cp.u.max(0.0), cp.dxx / h, 0.0]), (e, [ce.u.min(0.0), -ce.dxx / h, 0.0])];
        self.tangential(i, j, true, -0.5, &mut t);
        self.tangential(i + 1, j, true, -0.5, &mut t);
        Some(t)
    }

    /// Flux towards `+y` through the face between `(i, j)` and `(i, j + 1)`.
    fn y_face(&self, i: isize, j: isize) -> Option<Vec<FaceTerm>> {
        let p = self.dom.active(i, j)?;
        let n = self.dom.active(i, j + 1)?;
        let (cp, cn) = (self.c[p], self.c[n]);
        let h = self.dom.hy;
        let mut t = vec![(p, [cp.v.max(0.0), cp.dyy / h, 0.0]), (n, [cn.v.min(0.0), -cn.dyy / h, 0.0])];
        self.tangential(i, j, false, -0.5, &mut t);
        self.tangential(i, j + 1, false, -0.5, &mut t);
        Some(t)
    }

    fn row(&self, k: usize) -> Vec<(usize, [f64; 3])> {
        let (i, j) = self.dom.node(k);
        let (wx, wy) = self.dom.widths(i, j);
        let area = wx * wy;
        let (i, j) = (i as isize, j as isize);
        let mut entries: Vec<(usize, [f64; 3])> = vec![(k, [0.0; 3])];
        let mut add = |terms: Option<Vec<FaceTerm>>, factor: f64| {
            for (col, v) in terms.into_iter().flatten() {
                let slot = match entries.iter().position(|e| e.0 == col) {
                    Some(s) => s,
                    None => {
                        entries.push((col, [0.0; 3]));
                        entries.len() - 1
                    }
                };
                for c in 0..3 {
                    entries[slot].1[c] += factor * v[c];
                }
            }
        };
        add(self.x_face(i, j), -wy / area);
        add(self.x_face(i - 1, j), wy / area);
        add(self.y_face(i, j), -wx / area);
        add(self.y_face(i, j - 1), wx / area);
        entries.sort_by_key(|e| e.0);
        entries
    }
}

/// Builds the interior flux-form discretisation; no flux crosses a face
/// unless both of its nodes are active.
pub fn assemble_operator(params: &ChemostatParams, dom: &PolygonDomain, noise: &NoiseSpec) -> Result<FpOperator> {
    noise.validate()?;
    let (s1, s2, cross) = diffusion_of(noise);
    let th = params.theta;
    let coeffs: Vec<Coeffs> = (0..dom.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = dom.position(k);
            let z = stage5_zbar(params, x, y)?;
            Ok(Coeffs {
                u: x * (params.f(z) - th),
                v: y * (params.g(z) - th),
                dxx: 0.5 * s1 * s1 * x * x,
                dyy: 0.5 * s2 * s2 * y * y,
                dxy: 0.5 * cross * x * y,
            })
        })
        .collect::<Result<_>>()?;
    let asm = Assembler { dom, c: coeffs };
    let rows: Vec<Vec<(usize, [f64; 3])>> = (0..dom.len()).into_par_iter().map(|k| asm.row(k)).collect();

    let n = dom.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let (mut col, mut adv, mut dif, mut crs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, r) in rows.iter().enumerate() {
        let (ki, kj) = dom.node(k);
        for &(c, v) in r {
            let (ci, cj) = dom.node(c);
            if ci.abs_diff(ki) > 1 || cj.abs_diff(kj) > 1 {
                return Err(Error::Assembly(format!("row {k} reaches node {c} outside its nine-point patch")));
            }
            col.push(c);
            adv.push(v[0]);
            dif.push(v[1]);
            crs.push(v[2]);
        }
        row_ptr.push(col.len());
    }
    let leak = vec![0.0; adv.len()];
    let val = combine(&adv, &dif, &crs, &leak);
    let areas = (0..n).map(|k| dom.area(k)).collect();
    let drift = asm.c.iter().map(|c| [c.u, c.v]).collect();
    let diffusivity = asm.c.iter().map(|c| [c.dxx, c.dyy]).collect();
    Ok(FpOperator {
        matrix: Csr { n, row_ptr, col, val },
        advection: adv,
        diffusion: dif,
        cross: crs,
        leak,
        areas,
        drift,
        diffusivity,
        rule: None,
    })
}

fn combine(adv: &[f64], dif: &[f64], crs: &[f64], leak: &[f64]) -> Vec<f64> {
    (0..adv.len()).map(|k| adv[k] + dif[k] + crs[k] + leak[k]).collect()
}

/// Applies the cut-line rule. Outer and axis faces need no terms: the box
/// edges have no faces beyond them and the coefficients vanish on the axes.
pub fn apply_boundaries(mut op: FpOperator, dom: &PolygonDomain, rule: CutRule) -> Result<FpOperator> {
    if op.rule.is_some() {
        return Err(Error::Precondition("boundary rule already applied".into()));
    }
    op.leak.iter_mut().for_each(|v| *v = 0.0);
    if rule == CutRule::Absorbing {
        for k in 0..dom.len() {
            let (i, j) = dom.node(k);
            let (wx, wy) = dom.widths(i, j);
            let area = wx * wy;
            let [u, v] = op.drift[k];
            let [dxx, dyy] = op.diffusivity[k];
            let (ii, jj) = (i as isize, j as isize);
            let ghost = |a: isize, b: isize| {
                a >= 0 && b >= 0 && a as usize <= dom.nx && b as usize <= dom.ny && dom.active(a, b).is_none()
            };
            let mut out = 0.0;
            if ghost(ii + 1, jj) {
                out += (u.max(0.0) + dxx / dom.hx) * wy;
            }
            if ghost(ii - 1, jj) {
                out += (-u.min(0.0) + dxx / dom.hx) * wy;
            }
            if ghost(ii, jj + 1) {
                out += (v.max(0.0) + dyy / dom.hy) * wx;
            }
            if ghost(ii, jj - 1) {
                out += (-v.min(0.0) + dyy / dom.hy) * wx;
            }
            let (cols, _) = op.matrix.row(k);
            let d = op.matrix.row_ptr[k] + cols.binary_search(&k).map_err(|_| Error::Assembly(format!("row {k} lacks a diagonal")))?;
            op.leak[d] = -out / area;
        }
    }
    op.matrix.val = combine(&op.advection, &op.diffusion, &op.cross, &op.leak);
    op.rule = Some(rule);
    Ok(op)
}
