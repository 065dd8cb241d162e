use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::domain::PolygonDomain;
use super::limiter::FluxCorrection;
use super::operator::FpOperator;
use super::sparse::{bicgstab, Csr, Ilu0, SolveStats};
use crate::error::{Error, Result};
use crate::table::{Table, ToTable};

/// Negative density below this is clipped to zero and booked.
pub const CLIP_THRESHOLD: f64 = -1e-12;
/// Largest tolerated initial mass outside the polygon.
pub const OUTSIDE_MASS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassRecord {
    pub t: f64,
    pub mass: f64,
    /// Mass removed by clipping during the step that ended at `t`.
    pub clipped: f64,
}

/// Nodal density on the active nodes of a domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub t: f64,
    pub ledger: Vec<MassRecord>,
}

fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper bound on the mass of an axis-aligned Gaussian outside the polygon.
pub fn gaussian_outside_mass(dom: &PolygonDomain, means: (f64, f64), sds: (f64, f64)) -> f64 {
    let (mx, my) = means;
    let (sx, sy) = sds;
    let tails = phi(-mx / sx) + phi(-(dom.x_max - mx) / sx) + phi(-my / sy) + phi(-(dom.y_max - my) / sy);
    // y - slope x is normal; the corner is where it falls below the intercept.
    let m = my - dom.slope * mx;
    let s = (sy * sy + dom.slope * dom.slope * sx * sx).sqrt();
    tails + phi((dom.intercept - m) / s)
}

/// Nodal Gaussian renormalised to unit discrete mass. Returns the field and
/// the discrete mass before renormalisation.
pub fn gaussian_initial(dom: &PolygonDomain, means: (f64, f64), sds: (f64, f64)) -> Result<(DensityField, f64)> {
    let (sx, sy) = sds;
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::param("sds", "standard deviations must be positive"));
    }
    let outside = gaussian_outside_mass(dom, means, sds);
    if outside > OUTSIDE_MASS_LIMIT {
        return Err(Error::Precondition(format!("initial Gaussian puts {outside:e} of its mass outside the domain")));
    }
    let norm = 1.0 / (std::f64::consts::TAU * sx * sy);
    let mut values: Vec<f64> = (0..dom.len())
        .map(|k| {
            let (x, y) = dom.position(k);
            let (ax, ay) = ((x - means.0) / sx, (y - means.1) / sy);
            norm * (-0.5 * (ax * ax + ay * ay)).exp()
        })
        .collect();
    let raw: f64 = values.iter().enumerate().map(|(k, p)| p * dom.area(k)).sum();
    if !(raw > 0.0) {
        return Err(Error::Precondition("initial Gaussian vanishes on every node".into()));
    }
    values.iter_mut().for_each(|p| *p /= raw);
    let mut field = DensityField { values, t: 0.0, ledger: Vec::new() };
    let mass = total_mass(&field, dom);
    field.ledger.push(MassRecord { t: 0.0, mass, clipped: 0.0 });
    Ok((field, raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

/// Factorised one-step propagator for a fixed operator and step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub dt: f64,
    pub scheme: TimeScheme,
    pub rtol: f64,
    pub max_iter: usize,
    /// Most BiCGSTAB iterations taken by any step so far.
    pub peak_iterations: usize,
    lhs: Csr,
    explicit: Option<Csr>,
    ilu: Ilu0,
    areas: Vec<f64>,
    rhs: Vec<f64>,
    correction: Option<(FluxCorrection, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub solve: SolveStats,
    pub clipped: f64,
}

impl Stepper {
    pub fn new(op: &FpOperator, dt: f64, scheme: TimeScheme) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if op.rule.is_none() {
            return Err(Error::Precondition("apply a boundary rule before stepping".into()));
        }
        let (lhs, explicit) = match scheme {
            TimeScheme::ImplicitEuler => (op.matrix.shifted(1.0, -dt)?, None),
            TimeScheme::CrankNicolson => (op.matrix.shifted(1.0, -0.5 * dt)?, Some(op.matrix.shifted(1.0, 0.5 * dt)?)),
        };
        let ilu = Ilu0::new(&lhs)?;
        Ok(Stepper {
            dt,
            scheme,
            rtol: 1e-10,
            max_iter: 500,
            peak_iterations: 0,
            lhs,
            explicit,
            ilu,
            areas: op.areas.clone(),
            rhs: vec![0.0; op.matrix.n],
            correction: None,
        })
    }

    /// Adds the lagged limited advection correction to every step.
    pub fn with_correction(mut self, c: FluxCorrection) -> Self {
        let n = self.rhs.len();
        self.correction = Some((c, vec![0.0; n]));
        self
    }

    pub fn step(&mut self, field: &mut DensityField) -> Result<StepReport> {
        match &self.explicit {
            Some(b) => b.matvec(&field.values, &mut self.rhs),
            None => self.rhs.copy_from_slice(&field.values),
        }
        if let Some((c, buf)) = &mut self.correction {
            c.apply(&field.values, &self.rhs, self.dt, buf);
            for (r, b) in self.rhs.iter_mut().zip(buf.iter()) {
                *r += self.dt * b;
            }
        }
        let solve = bicgstab(&self.lhs, &self.ilu, &self.rhs, &mut field.values, self.rtol, self.max_iter)?;
        self.peak_iterations = self.peak_iterations.max(solve.iterations);
        let mut clipped = 0.0;
        for (p, a) in field.values.iter_mut().zip(&self.areas) {
            if *p < CLIP_THRESHOLD {
                clipped += -*p * a;
                *p = 0.0;
            }
        }
        if clipped > 0.0 {
            log::debug!("clipped {clipped:e} of negative mass at t = {}", field.t + self.dt);
        }
        field.t += self.dt;
        let mass = field.values.iter().zip(&self.areas).map(|(p, a)| p * a).sum();
        field.ledger.push(MassRecord { t: field.t, mass, clipped });
        Ok(StepReport { solve, clipped })
    }

    /// Steps until `t_end`, returning copies of the field (ledger stripped)
    /// at the requested snapshot times, rounded to the step grid.
    pub fn evolve(&mut self, field: &mut DensityField, t_end: f64, snapshots: &[f64]) -> Result<Vec<DensityField>> {
        let n = ((t_end - field.t) / self.dt).round().max(0.0) as usize;
        let t0 = field.t;
        let mut marks: Vec<usize> = snapshots.iter().map(|&s| ((s - t0) / self.dt).round().max(0.0) as usize).collect();
        marks.sort_unstable();
        let mut out = Vec::new();
        let mut next = 0;
        let snap = |f: &DensityField| DensityField { values: f.values.clone(), t: f.t, ledger: Vec::new() };
        while next < marks.len() && marks[next] == 0 {
            out.push(snap(field));
            next += 1;
        }
        for s in 1..=n {
            self.step(field)?;
            // Re-anchor the clock so long runs land on the step grid.
            field.t = t0 + s as f64 * self.dt;
            if let Some(r) = field.ledger.last_mut() {
                r.t = field.t;
            }
            while next < marks.len() && marks[next] == s {
                out.push(snap(field));
                next += 1;
            }
        }
        Ok(out)
    }
}

/// One step with a freshly factorised propagator.
pub fn step_density(field: &DensityField, op: &FpOperator, dt: f64, scheme: TimeScheme) -> Result<DensityField> {
    let mut st = Stepper::new(op, dt, scheme)?;
    let mut f = field.clone();
    st.step(&mut f)?;
    Ok(f)
}

/// Midpoint-rule total probability.
pub fn total_mass(field: &DensityField, dom: &PolygonDomain) -> f64 {
    field.values.iter().enumerate().map(|(k, p)| p * dom.area(k)).sum()
}

/// Marginal densities `(x_i, sum_j p w_y)` and `(y_j, sum_i p w_x)`.
pub fn marginals(field: &DensityField, dom: &PolygonDomain) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut mx: Vec<(f64, f64)> = (0..=dom.nx).map(|i| (dom.x(i), 0.0)).collect();
    let mut my: Vec<(f64, f64)> = (0..=dom.ny).map(|j| (dom.y(j), 0.0)).collect();
    for (k, p) in field.values.iter().enumerate() {
        let (i, j) = dom.node(k);
        let (wx, wy) = dom.widths(i, j);
        mx[i].1 += p * wy;
        my[j].1 += p * wx;
    }
    (mx, my)
}

/// Integral of a marginal against its own control-volume widths.
pub fn marginal_mass(marginal: &[(f64, f64)], h: f64) -> f64 {
    let last = marginal.len() - 1;
    marginal.iter().enumerate().map(|(i, (_, m))| m * if i == 0 || i == last { 0.5 * h } else { h }).sum()
}

/// Query region for probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Region {
    /// `[x0, x1] x [y0, y1]`, integrated with exact control-volume overlap.
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// `a x + b y <= c`, midpoint rule.
    HalfPlane { a: f64, b: f64, c: f64 },
}

impl Region {
    pub fn below_y(y: f64) -> Region {
        Region::Rect { x0: f64::NEG_INFINITY, x1: f64::INFINITY, y0: f64::NEG_INFINITY, y1: y }
    }

    pub fn left_of_x(x: f64) -> Region {
        Region::Rect { x0: f64::NEG_INFINITY, x1: x, y0: f64::NEG_INFINITY, y1: f64::INFINITY }
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Control volume of node `k` as `(x0, x1, y0, y1)`.
fn cell(dom: &PolygonDomain, k: usize) -> (f64, f64, f64, f64) {
    let (i, j) = dom.node(k);
    let (x, y) = (dom.x(i), dom.y(j));
    (
        (x - 0.5 * dom.hx).max(0.0),
        (x + 0.5 * dom.hx).min(dom.x_max),
        (y - 0.5 * dom.hy).max(0.0),
        (y + 0.5 * dom.hy).min(dom.y_max),
    )
}

pub fn mass_in(field: &DensityField, dom: &PolygonDomain, region: &Region) -> f64 {
    let disjoint = match *region {
        Region::Rect { x0, x1, y0, y1 } => x1 < 0.0 || x0 > dom.x_max || y1 < 0.0 || y0 > dom.y_max || x1 < x0 || y1 < y0,
        Region::HalfPlane { a, b, c } => {
            let corners = [(0.0, 0.0), (dom.x_max, 0.0), (0.0, dom.y_max), (dom.x_max, dom.y_max)];
            corners.iter().all(|(x, y)| a * x + b * y > c)
        }
    };
    if disjoint {
        log::warn!("region {region:?} does not meet the domain");
        return 0.0;
    }
    let mut m = 0.0;
    for (k, p) in field.values.iter().enumerate() {
        match *region {
            Region::Rect { x0, x1, y0, y1 } => {
                let (cx0, cx1, cy0, cy1) = cell(dom, k);
                m += p * overlap(cx0, cx1, x0, x1) * overlap(cy0, cy1, y0, y1);
            }
            Region::HalfPlane { a, b, c } => {
                let (x, y) = dom.position(k);
                if a * x + b * y <= c {
                    m += p * dom.area(k);
                }
            }
        }
    }
    m
}

/// Mass per bin on a uniform `nb x nb` partition of `[0, x_max] x [0, y_max]`,
/// row-major in x, splitting each control volume by overlap.
pub fn binned_mass(field: &DensityField, dom: &PolygonDomain, nb: usize) -> Vec<f64> {
    let (bx, by) = (dom.x_max / nb as f64, dom.y_max / nb as f64);
    let mut out = vec![0.0; nb * nb];
    for (k, p) in field.values.iter().enumerate() {
        let (cx0, cx1, cy0, cy1) = cell(dom, k);
        let i_last = ((cx1 / bx).floor() as usize).min(nb - 1);
        let j_last = ((cy1 / by).floor() as usize).min(nb - 1);
        for bi in ((cx0 / bx).floor() as usize).min(nb - 1)..=i_last {
            let ox = overlap(cx0, cx1, bi as f64 * bx, (bi + 1) as f64 * bx);
            for bj in ((cy0 / by).floor() as usize).min(nb - 1)..=j_last {
                let oy = overlap(cy0, cy1, bj as f64 * by, (bj + 1) as f64 * by);
                out[bi * nb + bj] += p * ox * oy;
            }
        }
    }
    out
}

/// Node with the largest density.
pub fn peak(field: &DensityField, dom: &PolygonDomain) -> (usize, usize) {
    let k = field
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    dom.node(k)
}

/// Snapshot table `i,j,x,y,p`.
pub fn snapshot_table(field: &DensityField, dom: &PolygonDomain) -> Table {
    let mut t = Table::new(["i", "j", "x", "y", "p"]);
    for (k, p) in field.values.iter().enumerate() {
        let (i, j) = dom.node(k);
        let (x, y) = dom.position(k);
        t.push(vec![i.into(), j.into(), x.into(), y.into(), (*p).into()]);
    }
    t
}

pub fn marginal_table(marginal: &[(f64, f64)], axis: &str) -> Table {
    let mut t = Table::new([axis, "density"]);
    for (x, m) in marginal {
        t.push(vec![(*x).into(), (*m).into()]);
    }
    t
}

pub struct MassLedger<'a>(pub &'a [MassRecord]);

impl ToTable for MassLedger<'_> {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "mass", "clipped"]);
        for r in self.0 {
            t.push(vec![r.t.into(), r.mass.into(), r.clipped.into()]);
        }
        t
    }
}
