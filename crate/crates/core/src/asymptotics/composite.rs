use serde::Serialize;

use super::stage5::{stage5_integrate, ReducedState};
use super::{saturated_rates, stage2_solution, stage3_solution, stage4_evolve, stage4_rate, StagePlan};
use crate::deterministic::{integrate_ode, IntegrationControls, State};
use crate::error::{Error, Result};
use crate::model::ChemostatParams;
use crate::numeric::{brent, linspace, ls_slope};
use crate::table::{Table, ToTable};

/// Substrate level (scaled by `z_f`) where the depletion window ends.
const STAGE3_CUTOFF: f64 = 0.05;
/// Collapse duration in units of the local relaxation time.
const STAGE4_SPAN: f64 = 30.0;

fn stage4_start(params: &ChemostatParams) -> f64 {
    100.0 * 1f64.max(params.curve_x.b).max(params.curve_y.b)
}

/// Descent time from the start level at the initial rate plus the relaxation span.
fn stage4_duration(params: &ChemostatParams, plan: &StagePlan) -> f64 {
    let z = stage4_start(params);
    let fall = params.theta - plan.x0_prime * params.f(z) - plan.y0_prime * params.g(z);
    z / fall.abs() + STAGE4_SPAN / stage4_rate(params, plan.x0_prime, plan.y0_prime, plan.z_infinity)
}

/// Staged approximation in the original variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagedTrajectory {
    pub stage: Vec<u8>,
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl StagedTrajectory {
    fn push(&mut self, stage: u8, t: f64, s: State) {
        self.stage.push(stage);
        self.times.push(t);
        self.states.push(s);
    }
}

impl ToTable for StagedTrajectory {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["stage", "t", "x", "y", "z"]);
        for i in 0..self.times.len() {
            let s = self.states[i];
            t.push(vec![(self.stage[i] as usize).into(), self.times[i].into(), s.x.into(), s.y.into(), s.z.into()]);
        }
        t
    }
}

/// Samples stages 2 through 5 on `n` points each. Stage 2 starts from
/// substrate `z0`; stage 5 runs for `t5_end`.
pub fn composite_trajectory(
    params: &ChemostatParams,
    plan: &StagePlan,
    z0: f64,
    n: usize,
    t5_end: f64,
) -> Result<StagedTrajectory> {
    if !plan.l.is_finite() {
        return Err(Error::Precondition("plan lacks initial populations".into()));
    }
    let n = n.max(2);
    let zf = params.z_f;
    let mut out = StagedTrajectory { stage: Vec::new(), times: Vec::new(), states: Vec::new() };
    for t in linspace(0.0, 0.5 * plan.l, n) {
        out.push(2, t, stage2_solution(params, plan.m1, plan.m2, z0, t)?);
    }
    for tp in linspace(-0.5 * plan.l, plan.t0_prime, n) {
        let [x, y, z] = stage3_solution(plan, params, tp)?;
        out.push(3, plan.l + tp, State::new(zf * x, zf * y, zf * z.max(0.0)));
    }
    let t_dep = plan.l + plan.t0_prime;
    let t4 = stage4_duration(params, plan);
    let path = stage4_evolve(plan, params, stage4_start(params), &linspace(0.0, t4, n))?;
    for (tt, z) in path.times.iter().zip(&path.z) {
        out.push(4, t_dep + tt / zf, State::new(zf * plan.x0_prime, zf * plan.y0_prime, *z));
    }
    let r0 = ReducedState::new(params, plan.x0_prime, plan.y0_prime)?;
    let red = stage5_integrate(params, r0, t5_end, n)?;
    for (tt, s) in red.times.iter().zip(&red.states) {
        out.push(5, t_dep + t4 / zf + tt, State::new(zf * s.x_bar, zf * s.y_bar, s.z_bar));
    }
    Ok(out)
}

/// Full-system comparison at one feed level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub z_f: f64,
    pub plan: StagePlan,
    /// Least-squares log-slopes of x and y over the growth window.
    pub exponent_fit: [f64; 2],
    pub exponent_rel_err: [f64; 2],
    /// Sup-norm errors of stages 2 to 5.
    pub stage_err: [f64; 4],
    /// Distance between scaled full state and reduced state at the end.
    pub endpoint_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeReport {
    pub rows: Vec<LadderRow>,
}

impl CompositeReport {
    /// Error entries in ladder order for one table label.
    pub fn series(&self, stage: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| row_entries(r).into_iter().find(|(l, _)| *l == stage).map(|(_, v)| v))
            .collect()
    }

    pub fn is_decreasing(&self, stage: &str) -> bool {
        self.series(stage).windows(2).all(|w| w[1] < w[0])
    }
}

fn row_entries(r: &LadderRow) -> Vec<(&'static str, f64)> {
    vec![
        ("2", r.stage_err[0]),
        ("2-exponent-x", r.exponent_rel_err[0]),
        ("2-exponent-y", r.exponent_rel_err[1]),
        ("3", r.stage_err[1]),
        ("4", r.stage_err[2]),
        ("5", r.stage_err[3]),
        ("5-endpoint", r.endpoint_distance),
    ]
}

impl ToTable for CompositeReport {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["z_f", "stage", "sup_rel_err"]);
        for r in &self.rows {
            for (label, v) in row_entries(r) {
                t.push(vec![r.z_f.into(), label.into(), v.into()]);
            }
        }
        t
    }
}

/// Full solution sampled at arbitrary (unsorted) times.
fn sample_full(params: &ChemostatParams, s0: State, times: &[f64]) -> Result<Vec<State>> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut uniq: Vec<f64> = Vec::with_capacity(times.len());
    let mut slot = vec![0usize; times.len()];
    for &i in &order {
        if uniq.last().is_none_or(|&u| times[i] > u) {
            uniq.push(times[i]);
        }
        slot[i] = uniq.len() - 1;
    }
    let t_end = *uniq.last().ok_or_else(|| Error::Precondition("no sample times".into()))?;
    let ctl = IntegrationControls { output_times: Some(uniq), ..IntegrationControls::with_tolerances(1e-10, 1e-13) };
    let traj = integrate_ode(params, s0, t_end, &ctl)?;
    Ok(slot.iter().map(|&k| traj.states[k]).collect())
}

fn ladder_row(params: &ChemostatParams, m1: f64, m2: f64, t5_end: f64) -> Result<LadderRow> {
    let zf = params.z_f;
    let [r1, r2] = saturated_rates(params)?;
    let plan = StagePlan::new(params, m1, m2)?;
    // Growth window: populations stay below sqrt(z_f), so depletion is negligible.
    let cap = zf.sqrt();
    if m1 + m2 >= cap {
        return Err(Error::Precondition(format!("M1 + M2 = {} must stay below sqrt(z_f) = {cap}", m1 + m2)));
    }
    let t2 = brent(|t| m1 * (r1 * t).exp() + m2 * (r2 * t).exp() - cap, 0.0, plan.l, 1e-12, 200)?;
    let w2 = linspace(0.0, t2, 60);
    let zp = |t: f64| 1.0 - plan.mu1 * (r1 * t).exp() - plan.mu2 * (r2 * t).exp();
    let t3 = brent(|t| zp(t) - STAGE3_CUTOFF, -0.5 * plan.l, plan.t0_prime, 1e-12, 200)?;
    let w3 = linspace(-0.5 * plan.l, t3, 120);
    let t_dep = plan.l + plan.t0_prime;
    let t4 = stage4_duration(params, &plan);
    let stage4 = stage4_evolve(&plan, params, stage4_start(params), &[0.0, t4])?;
    let r0 = ReducedState::new(params, plan.x0_prime, plan.y0_prime)?;
    let red = stage5_integrate(params, r0, t5_end, 200)?;
    let t5_start = t_dep + t4 / zf;

    let mut times: Vec<f64> = w2.clone();
    times.extend(w3.iter().map(|tp| plan.l + tp));
    times.push(t5_start);
    times.extend(red.times.iter().map(|tt| t5_start + tt));
    let full = sample_full(params, State::new(m1, m2, zf), &times)?;
    let (f2, rest) = full.split_at(w2.len());
    let (f3, rest) = rest.split_at(w3.len());
    let (f4, f5) = rest.split_at(1);

    let mut e2: f64 = 0.0;
    for (t, s) in w2.iter().zip(f2) {
        let a = stage2_solution(params, m1, m2, zf, *t)?;
        e2 = e2.max(((s.x - a.x) / a.x).abs()).max(((s.y - a.y) / a.y).abs()).max(((s.z - a.z) / a.z).abs());
    }
    let lx: Vec<f64> = f2.iter().map(|s| s.x.ln()).collect();
    let ly: Vec<f64> = f2.iter().map(|s| s.y.ln()).collect();
    let fit = [ls_slope(&w2, &lx), ls_slope(&w2, &ly)];
    let fit_err = [((fit[0] - r1) / r1).abs(), ((fit[1] - r2) / r2).abs()];

    let mut e3: f64 = 0.0;
    for (tp, s) in w3.iter().zip(f3) {
        let [x, y, z] = stage3_solution(&plan, params, *tp)?;
        e3 = e3.max((s.x / zf - x).abs()).max((s.y / zf - y).abs()).max((s.z / zf - z).abs());
    }
    let z4 = stage4.terminal();
    let e4 = ((f4[0].z - z4) / z4).abs();

    let mut e5: f64 = 0.0;
    for (r, s) in red.states.iter().zip(f5) {
        let d = (s.x / zf - r.x_bar).hypot(s.y / zf - r.y_bar);
        e5 = e5.max(d / r.x_bar.hypot(r.y_bar));
    }
    let (re, fe) = (red.last(), f5[f5.len() - 1]);
    let endpoint = (fe.x / zf - re.x_bar).hypot(fe.y / zf - re.y_bar);
    Ok(LadderRow {
        z_f: zf,
        plan,
        exponent_fit: fit,
        exponent_rel_err: fit_err,
        stage_err: [e2, e3, e4, e5],
        endpoint_distance: endpoint,
    })
}

/// Runs the full system from `(M1, M2, z_f)` at every feed level of
/// `ladder` and measures each stage of the composite against it.
pub fn composite_vs_full(
    params: &ChemostatParams,
    m1: f64,
    m2: f64,
    ladder: &[f64],
    t5_end: f64,
) -> Result<CompositeReport> {
    saturated_rates(params)?;
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("z_f ladder", "must be non-empty and strictly increasing"));
    }
    let rows = ladder
        .iter()
        .map(|&zf| ladder_row(&params.with_z_f(zf)?, m1, m2, t5_end))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompositeReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;

    #[test]
    fn staged_trajectory_is_continuous_at_the_collapse() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap();
        let plan = StagePlan::new(&p, 1.0, 1.0).unwrap();
        let tr = composite_trajectory(&p, &plan, p.z_f, 20, 10.0).unwrap();
        let csv = tr.to_table().to_csv();
        assert!(csv.starts_with("stage,t,x,y,z\n"));
        let first5 = tr.stage.iter().position(|&s| s == 5).unwrap();
        let s5 = tr.states[first5];
        assert!((s5.x - p.z_f * plan.x0_prime).abs() < 1e-9 * p.z_f);
        assert!((s5.z - plan.z_infinity).abs() < 1e-9);
        assert!(tr.times.windows(2).filter(|w| w[1] < w[0]).count() <= 1);
    }

    #[test]
    fn ladder_errors_shrink() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap();
        let r = composite_vs_full(&p, 1.0, 1.0, &[1e3, 1e4], 20.0).unwrap();
        for row in &r.rows {
            assert!(row.exponent_rel_err[0] < 0.01 && row.exponent_rel_err[1] < 0.01, "{row:?}");
        }
        for stage in ["2", "3", "4", "5-endpoint"] {
            assert!(r.is_decreasing(stage), "{stage}: {:?}", r.series(stage));
        }
        assert_eq!(r.to_table().rows.len(), 14);
    }

    #[test]
    fn ladder_must_increase() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap();
        assert!(composite_vs_full(&p, 1.0, 1.0, &[1e4, 1e3], 5.0).is_err());
        assert!(composite_vs_full(&p.with_theta(2.0).unwrap(), 1.0, 1.0, &[1e3], 5.0).is_err());
    }
}
