//! Dimensionless chemostat model: growth curves, parameter sets,
//! nondimensionalisation and the death-rate intersection algebra.
//!
//! Dimensionless growth follows Monod kinetics with a death offset,
//! `f(z) = a z / (b + z) - gamma`. Curves built around the substrate level at
//! which the two dimensional growth rates cross satisfy `f(1) = g(1) = 1`,
//! which forces `gamma = a / (b + 1) - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the break-even identity `a / (b + 1) - gamma = 1`.
pub const BREAK_EVEN_TOL: f64 = 1e-9;

/// E. coli curve (population x) of the reference parameter set.
pub const TABLE1_X: GrowthCurve = GrowthCurve { a: 2.911, b: 1.911, gamma: 0.0 };
/// Spirillum curve (population y) of the reference parameter set.
pub const TABLE1_Y: GrowthCurve = GrowthCurve { a: 1.636, b: 0.636, gamma: 0.0 };
/// Reference dimensionless substrate feed.
pub const TABLE1_Z_F: f64 = 15000.0;

/// Death-rate curve for population x (reversed asymptotic dominance).
pub const TABLE3_X: GrowthCurve = GrowthCurve { a: 2.512, b: 0.041, gamma: 1.41306 };
/// Death-rate curve for population y.
pub const TABLE3_Y: GrowthCurve = GrowthCurve { a: 1.411, b: 0.204, gamma: 0.171927 };

/// One population's dimensionless Monod kinetics with a death rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthCurve {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl GrowthCurve {
    /// Validated constructor. Curves off the break-even manifold are accepted
    /// with a warning so that parameter sweeps can leave it.
    pub fn new(a: f64, b: f64, gamma: f64) -> Result<Self> {
        let curve = GrowthCurve { a, b, gamma };
        curve.validate()?;
        if !curve.is_break_even() {
            log::warn!(
                "growth curve (a={a}, b={b}, gamma={gamma}) misses the break-even identity by {:e}",
                curve.break_even_residual()
            );
        }
        Ok(curve)
    }

    /// Curve whose death rate is fixed by the break-even identity.
    pub fn break_even(a: f64, b: f64) -> Result<Self> {
        let gamma = a / (b + 1.0) - 1.0;
        if gamma < 0.0 {
            return Err(Error::param(
                "a",
                format!("a/(b+1) = {} < 1 leaves no non-negative death rate", a / (b + 1.0)),
            ));
        }
        let curve = GrowthCurve { a, b, gamma };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::param("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::param("b", format!("must be positive, got {}", self.b)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be non-negative, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `f(1) - 1`; zero on the break-even manifold.
    pub fn break_even_residual(&self) -> f64 {
        self.a / (self.b + 1.0) - self.gamma - 1.0
    }

    pub fn is_break_even(&self) -> bool {
        self.break_even_residual().abs() <= BREAK_EVEN_TOL
    }

    /// Growth rate without the domain check. Hot-path version of [`growth_rate`].
    #[inline]
    pub fn rate(&self, z: f64) -> f64 {
        self.a * z / (self.b + z) - self.gamma
    }

    /// `d rate / dz`.
    #[inline]
    pub fn slope(&self, z: f64) -> f64 {
        let d = self.b + z;
        self.a * self.b / (d * d)
    }

    #[inline]
    pub fn curvature(&self, z: f64) -> f64 {
        let d = self.b + z;
        -2.0 * self.a * self.b / (d * d * d)
    }

    /// Limit of the growth rate as substrate grows without bound.
    pub fn asymptote(&self) -> f64 {
        self.a - self.gamma
    }

    /// Substrate level where the growth rate equals `target`, if it exists.
    pub fn inverse(&self, target: f64) -> Option<f64> {
        let shifted = target + self.gamma;
        if shifted < 0.0 || shifted >= self.a {
            return None;
        }
        Some(self.b * shifted / (self.a - shifted))
    }
}

/// `a z / (b + z) - gamma`, rejecting negative substrate.
pub fn growth_rate(curve: &GrowthCurve, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::Domain(format!("substrate must be non-negative, got {z}")));
    }
    Ok(curve.rate(z))
}

/// Noise structure of the Langevin systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    /// Independent multiplicative noise on x, y and z.
    General { sigma1: f64, sigma2: f64, sigma3: f64 },
    /// One shared Wiener process perturbing the dilution rate.
    DilutionRate { sigma: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("noise intensity must be non-negative, got {v}")))
            }
        };
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::General { sigma1, sigma2, sigma3 } => {
                check("sigma1", sigma1)?;
                check("sigma2", sigma2)?;
                check("sigma3", sigma3)
            }
            NoiseSpec::DilutionRate { sigma } => check("sigma", sigma),
        }
    }

    /// Number of driving Wiener processes.
    pub fn channels(&self) -> usize {
        match self {
            NoiseSpec::None => 0,
            NoiseSpec::General { .. } => 3,
            NoiseSpec::DilutionRate { .. } => 1,
        }
    }

    pub fn is_silent(&self) -> bool {
        match *self {
            NoiseSpec::None => true,
            NoiseSpec::General { sigma1, sigma2, sigma3 } => {
                sigma1 == 0.0 && sigma2 == 0.0 && sigma3 == 0.0
            }
            NoiseSpec::DilutionRate { sigma } => sigma == 0.0,
        }
    }
}

/// Full dimensionless system configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemostatParams {
    /// Dilution rate (the mean dilution rate for the stochastic systems).
    pub theta: f64,
    pub z_f: f64,
    pub curve_x: GrowthCurve,
    pub curve_y: GrowthCurve,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl ChemostatParams {
    pub fn new(
        theta: f64,
        z_f: f64,
        curve_x: GrowthCurve,
        curve_y: GrowthCurve,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let p = ChemostatParams { theta, z_f, curve_x, curve_y, noise };
        p.validate()?;
        Ok(p)
    }

    /// Reference E. coli / Spirillum parameters.
    pub fn table1(theta: f64, noise: NoiseSpec) -> Result<Self> {
        Self::new(theta, TABLE1_Z_F, TABLE1_X, TABLE1_Y, noise)
    }

    /// Death-rate parameters with reversed asymptotic dominance.
    pub fn table3(theta: f64, noise: NoiseSpec) -> Result<Self> {
        Self::new(theta, TABLE1_Z_F, TABLE3_X, TABLE3_Y, noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::param("theta", format!("must be positive, got {}", self.theta)));
        }
        if !(self.z_f > 1.0 && self.z_f.is_finite()) {
            return Err(Error::param("z_f", format!("z_f > 1 required, got {}", self.z_f)));
        }
        self.curve_x.validate()?;
        self.curve_y.validate()?;
        self.noise.validate()
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        self.theta = theta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_z_f(mut self, z_f: f64) -> Result<Self> {
        self.z_f = z_f;
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Result<Self> {
        self.noise = noise;
        self.validate()?;
        Ok(self)
    }

    /// Growth rate of population x.
    #[inline]
    pub fn f(&self, z: f64) -> f64 {
        self.curve_x.rate(z)
    }

    /// Growth rate of population y.
    #[inline]
    pub fn g(&self, z: f64) -> f64 {
        self.curve_y.rate(z)
    }
}

/// Dimensional Monod-with-death curve `mu_max s / (k_s + s) - death`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonodCurve {
    pub mu_max: f64,
    pub k_s: f64,
    pub death: f64,
}

impl MonodCurve {
    #[inline]
    pub fn rate(&self, s: f64) -> f64 {
        self.mu_max * s / (self.k_s + s) - self.death
    }

    #[inline]
    fn slope(&self, s: f64) -> f64 {
        let d = self.k_s + s;
        self.mu_max * self.k_s / (d * d)
    }
}

/// Dimensional chemostat parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalParams {
    pub curves: [MonodCurve; 2],
    /// Yield coefficients `Y_1`, `Y_2`.
    pub yields: [f64; 2],
    /// Feed substrate concentration.
    pub s_f: f64,
    /// Dilution rate `q / V`.
    pub dilution: f64,
}

impl DimensionalParams {
    pub fn validate(&self) -> Result<()> {
        for c in &self.curves {
            if !(c.mu_max > 0.0) {
                return Err(Error::param("mu_max", "must be positive"));
            }
            if !(c.k_s > 0.0) {
                return Err(Error::param("k_s", "must be positive"));
            }
            if !(c.death >= 0.0) {
                return Err(Error::param("death", "must be non-negative"));
            }
        }
        if !(self.yields[0] > 0.0 && self.yields[1] > 0.0) {
            return Err(Error::param("yields", "must be positive"));
        }
        if !(self.s_f > 0.0) {
            return Err(Error::param("s_f", "must be positive"));
        }
        if !(self.dilution > 0.0) {
            return Err(Error::param("dilution", "must be positive"));
        }
        Ok(())
    }

    /// Inverse of [`nondimensionalise`] for a chosen crossing `(s_c, mu_c)`.
    pub fn from_dimensionless(params: &ChemostatParams, s_c: f64, mu_c: f64, yields: [f64; 2]) -> Self {
        let curve = |c: &GrowthCurve| MonodCurve {
            mu_max: c.a * mu_c,
            k_s: c.b * s_c,
            death: c.gamma * mu_c,
        };
        DimensionalParams {
            curves: [curve(&params.curve_x), curve(&params.curve_y)],
            yields,
            s_f: params.z_f * s_c,
            dilution: params.theta * mu_c,
        }
    }

    /// Scales a dimensional state `(x_1, x_2, s)` by the crossing substrate.
    pub fn scale_state(&self, s_c: f64, x1: f64, x2: f64, s: f64) -> [f64; 3] {
        [x1 / (self.yields[0] * s_c), x2 / (self.yields[1] * s_c), s / s_c]
    }
}

/// Converts dimensional parameters into the dimensionless system scaled at
/// the crossing `s_c` of the two growth curves.
///
/// `s_c` must cross to 1e-6 relative; it is then polished with Newton steps so
/// that the dimensionless curves meet the break-even identity to rounding.
pub fn nondimensionalise(dim: &DimensionalParams, s_c: f64) -> Result<ChemostatParams> {
    dim.validate()?;
    if !(s_c > 0.0) {
        return Err(Error::param("s_c", format!("must be positive, got {s_c}")));
    }
    let [c1, c2] = dim.curves;
    let gap = |s: f64| c1.rate(s) - c2.rate(s);
    let scale = c1.rate(s_c).abs().max(c2.rate(s_c).abs()).max(f64::MIN_POSITIVE);
    if gap(s_c).abs() > 1e-6 * scale {
        return Err(Error::param(
            "s_c",
            format!("not a crossing point: mu1 - mu2 = {:e} at s_c = {s_c}", gap(s_c)),
        ));
    }
    let mut s = s_c;
    for _ in 0..4 {
        let d = c1.slope(s) - c2.slope(s);
        if d == 0.0 {
            break;
        }
        let next = s - gap(s) / d;
        if !(next > 0.0) || (next - s).abs() > 1e-6 * s_c {
            break;
        }
        s = next;
    }
    let mu_c = c1.rate(s);
    if !(mu_c > 0.0) {
        return Err(Error::param("s_c", format!("growth rate at the crossing is {mu_c}, must be positive")));
    }
    let curve = |c: &MonodCurve| GrowthCurve { a: c.mu_max / mu_c, b: c.k_s / s, gamma: c.death / mu_c };
    ChemostatParams::new(
        dim.dilution / mu_c,
        dim.s_f / s,
        curve(&c1),
        curve(&c2),
        NoiseSpec::None,
    )
}

/// Geometry of the crossings of two dimensional growth curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntersectionCase {
    /// Both crossings at positive substrate and positive growth.
    #[serde(rename = "a")]
    BothUpperRight,
    /// First crossing at positive substrate with negative growth, second in the upper-right quadrant.
    #[serde(rename = "b")]
    LowerRightThenUpperRight,
    /// First crossing at negative substrate and negative growth, second in the upper-right quadrant.
    #[serde(rename = "c")]
    LowerLeftThenUpperRight,
    /// One crossing exactly at `s = 0` (equal death rates, e.g. no death).
    Origin,
    /// Linear or complex crossing equation.
    Degenerate,
    /// Real crossings, none of biological interest.
    None,
}

impl IntersectionCase {
    pub fn label(&self) -> &'static str {
        match self {
            IntersectionCase::BothUpperRight => "a",
            IntersectionCase::LowerRightThenUpperRight => "b",
            IntersectionCase::LowerLeftThenUpperRight => "c",
            IntersectionCase::Origin => "origin",
            IntersectionCase::Degenerate => "degenerate",
            IntersectionCase::None => "none",
        }
    }
}

/// Roots of `mu_1(s) = mu_2(s)` and their classification.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionReport {
    /// Crossing coefficients `A s^2 + B s + C`.
    pub coefficients: [f64; 3],
    /// Real roots in increasing order.
    pub roots: Vec<f64>,
    pub growth_at_roots: Vec<f64>,
    pub case: IntersectionCase,
}

/// Solves the crossing quadratic of two Monod-with-death curves.
pub fn intersection_points(c1: &MonodCurve, c2: &MonodCurve) -> Result<IntersectionReport> {
    if c1 == c2 {
        return Err(Error::Precondition("identical curves cross everywhere".into()));
    }
    let (m1, k1, d1) = (c1.mu_max, c1.k_s, c1.death);
    let (m2, k2, d2) = (c2.mu_max, c2.k_s, c2.death);
    let a = m1 - d1 + d2 - m2;
    let b = k2 * (m1 - d1 + d2) - k1 * (m2 - d2 + d1);
    let c = k1 * k2 * (d2 - d1);
    let coefficients = [a, b, c];
    let scale = (m1 - d1 + d2).abs().max(m2.abs());

    let growth = |s: f64| c1.rate(s);
    let degenerate = |roots: Vec<f64>| IntersectionReport {
        coefficients,
        growth_at_roots: roots.iter().map(|&s| growth(s)).collect(),
        roots,
        case: IntersectionCase::Degenerate,
    };

    if a.abs() < 1e-12 * scale {
        let roots = if b != 0.0 { vec![-c / b] } else { Vec::new() };
        return Ok(degenerate(roots));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Ok(degenerate(Vec::new()));
    }
    let (r1, r2) = stable_quadratic_roots(a, b, c, disc);
    let (s1, s2) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    let (g1, g2) = (growth(s1), growth(s2));

    let upper = |s: f64, g: f64| s > 0.0 && g > 0.0;
    let case = if c == 0.0 {
        IntersectionCase::Origin
    } else if upper(s1, g1) && upper(s2, g2) {
        IntersectionCase::BothUpperRight
    } else if s1 > 0.0 && g1 < 0.0 && upper(s2, g2) {
        IntersectionCase::LowerRightThenUpperRight
    } else if s1 < 0.0 && g1 < 0.0 && upper(s2, g2) {
        IntersectionCase::LowerLeftThenUpperRight
    } else {
        IntersectionCase::None
    };
    Ok(IntersectionReport { coefficients, roots: vec![s1, s2], growth_at_roots: vec![g1, g2], case })
}

/// Roots of `a s^2 + b s + c` (with `disc = b^2 - 4ac >= 0`), computing the
/// larger-magnitude root first to avoid cancellation.
pub(crate) fn stable_quadratic_roots(a: f64, b: f64, c: f64, disc: f64) -> (f64, f64) {
    let sq = disc.sqrt();
    let q = if b >= 0.0 { -0.5 * (b + sq) } else { -0.5 * (b - sq) };
    if q == 0.0 {
        // b = 0 and c = 0: double root at zero.
        return (0.0, 0.0);
    }
    (q / a, c / q)
}

/// Identifier of an inequality between two dimensional curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseCondition {
    /// `mu_m1 - d1 > mu_m2 - d2`
    DominantAtInfinity = 48,
    /// `mu_m1 > d1`
    PositiveEndX = 49,
    /// `mu_m2 > d2`
    PositiveEndY = 50,
    /// `d2 > d1`
    DeathYExceedsX = 51,
    /// `K1 d1 / (mu_m1 - d1) > K2 d2 / (mu_m2 - d2)`
    ZeroGrowthOrder = 52,
    /// `K1 > K2`
    SaturationOrder = 53,
    /// `d1 > d2`
    DeathXExceedsY = 54,
    /// `mu_m1 > mu_m2`
    MaxRateOrder = 55,
}

impl CaseCondition {
    pub const ALL: [CaseCondition; 8] = [
        CaseCondition::DominantAtInfinity,
        CaseCondition::PositiveEndX,
        CaseCondition::PositiveEndY,
        CaseCondition::DeathYExceedsX,
        CaseCondition::ZeroGrowthOrder,
        CaseCondition::SaturationOrder,
        CaseCondition::DeathXExceedsY,
        CaseCondition::MaxRateOrder,
    ];

    pub fn id(&self) -> u32 {
        *self as u32
    }
}

/// Pass/fail of each case inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseConditions {
    pub entries: Vec<(CaseCondition, bool)>,
}

impl CaseConditions {
    pub fn holds(&self, which: CaseCondition) -> bool {
        self.entries.iter().any(|&(c, ok)| c == which && ok)
    }

    /// The saturation ordering follows from the death ordering together with
    /// the zero-growth ordering, for curves with positive end values.
    pub fn is_consistent(&self) -> bool {
        use CaseCondition::*;
        let premise = [DominantAtInfinity, PositiveEndX, PositiveEndY, DeathYExceedsX, ZeroGrowthOrder]
            .iter()
            .all(|&c| self.holds(c));
        !premise || self.holds(SaturationOrder)
    }
}

/// Evaluates the case inequalities using maximum growth rates.
pub fn check_case_conditions(c1: &MonodCurve, c2: &MonodCurve) -> CaseConditions {
    use CaseCondition::*;
    let (m1, k1, d1) = (c1.mu_max, c1.k_s, c1.death);
    let (m2, k2, d2) = (c2.mu_max, c2.k_s, c2.death);
    let entries = CaseCondition::ALL
        .iter()
        .map(|&cond| {
            let ok = match cond {
                DominantAtInfinity => m1 - d1 > m2 - d2,
                PositiveEndX => m1 > d1,
                PositiveEndY => m2 > d2,
                DeathYExceedsX => d2 > d1,
                ZeroGrowthOrder => k1 * d1 / (m1 - d1) > k2 * d2 / (m2 - d2),
                SaturationOrder => k1 > k2,
                DeathXExceedsY => d1 > d2,
                MaxRateOrder => m1 > m2,
            };
            (cond, ok)
        })
        .collect();
    CaseConditions { entries }
}
