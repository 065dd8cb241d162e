use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::{OutputSink, RunManifest, RunStatus};
use crate::asymptotics::{composite_trajectory, composite_vs_full, stage5_zbar, StagePlan};
use crate::deterministic::{integrate_ode, stability_report, survivor_sweep, State, StabilityReport, SweepGrid};
use crate::error::{Error, Result};
use crate::fokker_planck::{
    crosscheck_field, marginal_table, marginals, run_fokker_planck, snapshot_table, total_mass, DensityField, FpConfig,
    MassLedger, PolygonDomain,
};
use crate::model::{ChemostatParams, NoiseSpec};
use crate::sde::{simulate_ensemble, strong_order_study, OrderStudyConfig, Scheme};
use crate::table::{Table, ToTable};

/// Figure recipes and single-step commands accepted by [`run_recipe`].
pub const RECIPES: &[&str] = &[
    "fig9",
    "fig10",
    "fig11",
    "fig12",
    "fig13",
    "fig10-13",
    "fig15",
    "fig16",
    "fig17",
    "fig18",
    "fig19",
    "fig15-19",
    "fig20",
    "fig21",
    "fig20-21",
    "stages",
    "convergence",
];

/// Feed level of the desk-scale stochastic runs.
pub const DESK_Z_F: f64 = 1500.0;
const SDE_HORIZON: f64 = 2000.0;
const SDE_FULL_HORIZON: f64 = 10000.0;
/// Density horizons are capped here unless `full` is set.
pub const FP_DESK_HORIZON: f64 = 500.0;

#[derive(Debug, Clone, Copy)]
struct SdePanel {
    theta: f64,
    noise: NoiseSpec,
    paths: usize,
}

#[derive(Debug, Clone)]
struct FpPanel {
    theta: f64,
    noise: NoiseSpec,
    horizon: f64,
    snapshots: Vec<f64>,
}

fn general(s1: f64, s2: f64, s3: f64) -> NoiseSpec {
    NoiseSpec::General { sigma1: s1, sigma2: s2, sigma3: s3 }
}

fn dilution(sigma: f64) -> NoiseSpec {
    NoiseSpec::DilutionRate { sigma }
}

fn sde_panels(name: &str) -> Vec<SdePanel> {
    let p = |theta, noise, paths| SdePanel { theta, noise, paths };
    match name {
        "fig10" => [1.0, 1.02, 0.98]
            .iter()
            .flat_map(|&t| [p(t, general(0.0006, 0.0007, 9.0), 3), p(t, general(0.05, 0.07, 9.0), 3)])
            .collect(),
        "fig11" => vec![
            p(0.99, general(0.0006, 0.0007, 9.0), 3),
            p(0.99, general(0.05, 0.07, 9.0), 3),
            p(1.0, general(0.05, 0.07, 0.01), 3),
            p(1.0, general(0.05, 0.07, 0.00001), 3),
        ],
        "fig12" => [1.0, 1.02, 0.98].iter().flat_map(|&t| [p(t, dilution(0.0006), 10), p(t, dilution(0.001), 10)]).collect(),
        "fig13" => vec![
            p(0.99, dilution(0.0006), 10),
            p(0.99, dilution(0.001), 10),
            p(1.0, general(0.0006, 0.0006, 0.000006), 10),
            p(0.98, general(0.03, 0.03, 0.000006), 10),
        ],
        "fig20" => vec![p(1.0, general(0.0006, 0.0007, 9.0), 6), p(1.0, general(0.05, 0.07, 9.0), 6)],
        "fig21" => vec![p(1.0, dilution(0.0006), 6), p(0.98, dilution(0.03), 6)],
        _ => Vec::new(),
    }
}

fn fp_panels(name: &str) -> Vec<FpPanel> {
    let p = |theta, noise, horizon: f64, snapshots: &[f64]| FpPanel { theta, noise, horizon, snapshots: snapshots.to_vec() };
    match name {
        "fig15" => vec![
            p(1.0, general(0.05, 0.07, 0.0), 10000.0, &[1.0, 500.0, 10000.0]),
            p(1.0, general(0.03, 0.03, 0.0), 7000.0, &[1.0, 2500.0, 7000.0]),
        ],
        "fig16" => vec![p(0.99, general(0.5, 0.07, 0.0), 1000.0, &[1000.0]), p(0.99, general(0.03, 0.03, 0.0), 1000.0, &[1000.0])],
        "fig18" => vec![p(1.0, dilution(0.03), 7000.0, &[1.0, 2500.0, 7000.0])],
        "fig19" => vec![p(0.99, dilution(0.03), 100.0, &[100.0]), p(0.99, dilution(0.2), 300.0, &[300.0])],
        _ => Vec::new(),
    }
}

fn expand(name: &str) -> Vec<&'static str> {
    match name {
        "fig10-13" => vec!["fig10", "fig11", "fig12", "fig13"],
        "fig15-19" => vec!["fig15", "fig16", "fig17", "fig18", "fig19"],
        "fig20-21" => vec!["fig20", "fig21"],
        _ => RECIPES.iter().copied().filter(|r| *r == name).collect(),
    }
}

/// Desk-scale shrink of a density panel: horizon capped, later snapshot
/// times scaled into the shorter window.
fn desk_panel(panel: &FpPanel, full: bool) -> FpPanel {
    if full || panel.horizon <= FP_DESK_HORIZON {
        return panel.clone();
    }
    let k = FP_DESK_HORIZON / panel.horizon;
    let snapshots = panel.snapshots.iter().map(|&t| if t <= 1.0 { t } else { t * k }).collect();
    FpPanel { horizon: FP_DESK_HORIZON, snapshots, ..panel.clone() }
}

#[derive(Serialize)]
struct PanelRecord {
    index: usize,
    theta: f64,
    noise: NoiseSpec,
    z_f: f64,
    paths: usize,
    t_end: f64,
    seed: u64,
}

#[derive(Serialize)]
struct SnapshotMeta<'a> {
    t: f64,
    total_mass: f64,
    params: &'a ChemostatParams,
    h: f64,
    x_max: f64,
    y_max: f64,
    cut_offset: f64,
    nodes: usize,
}

fn write_density(sink: &mut OutputSink, params: &ChemostatParams, dom: &PolygonDomain, f: &DensityField) -> Result<()> {
    sink.table("density", &snapshot_table(f, dom))?;
    let meta = SnapshotMeta {
        t: f.t,
        total_mass: total_mass(f, dom),
        params,
        h: dom.hx,
        x_max: dom.x_max,
        y_max: dom.y_max,
        cut_offset: dom.cut_offset,
        nodes: dom.len(),
    };
    sink.json("density", &meta)?;
    let (mx, my) = marginals(f, dom);
    sink.table("marginal-x", &marginal_table(&mx, "x"))?;
    sink.table("marginal-y", &marginal_table(&my, "y"))?;
    Ok(())
}

fn sde_horizon(full: bool) -> f64 {
    if full {
        SDE_FULL_HORIZON
    } else {
        SDE_HORIZON
    }
}

fn desk_params(cfg: &ExperimentConfig, theta: f64, noise: NoiseSpec) -> Result<ChemostatParams> {
    let mut model = cfg.model.clone();
    model.theta = theta;
    model.noise = noise;
    model.z_f = Some(cfg.model.z_f.unwrap_or(DESK_Z_F));
    model.params()
}

fn run_sde_panels(sink: &mut OutputSink, cfg: &ExperimentConfig, name: &str, full: bool) -> Result<()> {
    let mut records = Vec::new();
    for (i, panel) in sde_panels(name).into_iter().enumerate() {
        let params = desk_params(cfg, panel.theta, panel.noise)?;
        let s0 = cfg.initial.state(&params)?;
        let mut run = cfg.run;
        run.t_end = sde_horizon(full);
        run.record_every = None;
        let controls = run.sde_controls(&params);
        let seed = cfg.seed.wrapping_add(i as u64);
        let e = simulate_ensemble(&params, s0, &controls, seed, panel.paths)?;
        sink.table("paths", &e.paths_table())?;
        sink.table("summary", &e.summary.to_table())?;
        sink.table("tally", &e.tally_table())?;
        sink.table("events", &e.events_table())?;
        records.push(PanelRecord {
            index: i,
            theta: panel.theta,
            noise: panel.noise,
            z_f: params.z_f,
            paths: panel.paths,
            t_end: run.t_end,
            seed,
        });
    }
    sink.json("panels", &records)?;
    Ok(())
}

fn run_fp_panels(sink: &mut OutputSink, cfg: &ExperimentConfig, name: &str, full: bool) -> Result<()> {
    let mut records = Vec::new();
    for (i, panel) in fp_panels(name).iter().enumerate() {
        let panel = desk_panel(panel, full);
        let mut model = cfg.model.clone();
        model.theta = panel.theta;
        model.noise = panel.noise;
        let params = model.params()?;
        let fp = FpConfig { horizon: panel.horizon, snapshots: panel.snapshots.clone(), ..cfg.fokker_planck.clone() };
        let run = run_fokker_planck(&params, &fp)?;
        for snap in &run.snapshots {
            write_density(sink, &params, &run.domain, snap)?;
        }
        sink.table("ledger", &MassLedger(&run.field.ledger).to_table())?;
        if name == "fig18" {
            let report = crosscheck_field(&params, &run.domain, &run.field, &fp, &cfg.reduced_sde, 30)?;
            sink.json("crosscheck", &report)?;
        }
        records.push(PanelRecord {
            index: i,
            theta: panel.theta,
            noise: panel.noise,
            z_f: params.z_f,
            paths: 0,
            t_end: panel.horizon,
            seed: cfg.seed,
        });
    }
    sink.json("panels", &records)?;
    Ok(())
}

/// Substrate of full-system paths next to the algebraic value implied by
/// their scaled populations.
fn run_substrate_comparison(sink: &mut OutputSink, cfg: &ExperimentConfig, full: bool) -> Result<()> {
    let mut records = Vec::new();
    for (i, sigma) in [0.0006, 0.0002].into_iter().enumerate() {
        let params = desk_params(cfg, 1.0, dilution(sigma))?;
        let s0 = cfg.initial.state(&params)?;
        let mut run = cfg.run;
        run.t_end = sde_horizon(full);
        run.record_every = None;
        let seed = cfg.seed.wrapping_add(i as u64);
        let e = simulate_ensemble(&params, s0, &run.sde_controls(&params), seed, 1)?;
        let tr = &e.trajectories[0];
        let mut t = Table::new(["t", "z", "z_algebraic"]);
        for (ti, s) in tr.times.iter().zip(&tr.states) {
            let za = stage5_zbar(&params, s.x / params.z_f, s.y / params.z_f).unwrap_or(f64::NAN);
            t.push(vec![(*ti).into(), s.z.into(), za.into()]);
        }
        sink.table("substrate", &t)?;
        records.push(PanelRecord { index: i, theta: 1.0, noise: params.noise, z_f: params.z_f, paths: 1, t_end: run.t_end, seed });
    }
    sink.json("panels", &records)?;
    Ok(())
}

fn stability_table(r: &StabilityReport) -> Table {
    let mut t = Table::new(["state", "lambda1", "lambda2", "verdict", "conditions"]);
    for e in &r.entries {
        let (l1, l2) = e.eigenvalues.unwrap_or((f64::NAN, f64::NAN));
        let verdict = serde_json::to_value(e.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        t.push(vec![e.state.label().into(), l1.into(), l2.into(), verdict.into(), e.conditions.join(";").into()]);
    }
    t
}

fn run_sweep(sink: &mut OutputSink, cfg: &ExperimentConfig) -> Result<()> {
    let grid = SweepGrid { base: cfg.params()?, axis1: cfg.sweep.axis1.clone(), axis2: cfg.sweep.axis2.clone() };
    let map = survivor_sweep(&grid, &cfg.sweep.initial, cfg.sweep.t_end, &cfg.run.ode_controls())?;
    sink.table("sweep", &map.to_table())?;
    Ok(())
}

fn run_stages(sink: &mut OutputSink, cfg: &ExperimentConfig) -> Result<()> {
    let a = &cfg.asymptotic;
    let params = cfg.params()?.with_noise(NoiseSpec::None)?;
    let report = composite_vs_full(&params, a.m1, a.m2, &a.ladder, a.t5_end)?;
    sink.table("ladder", &report.to_table())?;
    for &z_f in &a.ladder {
        let p = params.with_z_f(z_f)?;
        let plan = StagePlan::new(&p, a.m1, a.m2)?;
        sink.table("staged", &composite_trajectory(&p, &plan, z_f, a.n_out, a.t5_end)?.to_table())?;
    }
    Ok(())
}

fn run_asymptotic(sink: &mut OutputSink, cfg: &ExperimentConfig) -> Result<()> {
    let a = &cfg.asymptotic;
    let params = cfg.params()?.with_noise(NoiseSpec::None)?;
    let plan = StagePlan::new(&params, a.m1, a.m2)?;
    let staged = composite_trajectory(&params, &plan, params.z_f, a.n_out, a.t5_end)?;
    sink.table("staged", &staged.to_table())?;
    let t_end = staged.times.last().copied().unwrap_or(a.t5_end);
    let mut controls = cfg.run.ode_controls();
    controls.n_out = a.n_out.max(1) * 4;
    let full = integrate_ode(&params, State::new(a.m1, a.m2, params.z_f), t_end, &controls)?;
    sink.table("full", &full.to_table())?;
    sink.json("plan", &plan)?;
    Ok(())
}

/// Default ladder model: clamp-free multiplicative noise on a small feed.
fn convergence_params(cfg: &ExperimentConfig) -> Result<ChemostatParams> {
    let p = cfg.params()?;
    if p.noise.is_silent() {
        p.with_z_f(5.0)?.with_noise(general(0.5, 0.5, 0.5))
    } else {
        Ok(p)
    }
}

fn run_convergence(sink: &mut OutputSink, cfg: &ExperimentConfig) -> Result<()> {
    let params = convergence_params(cfg)?;
    let c = &cfg.convergence;
    let study = OrderStudyConfig {
        s0: c.s0,
        t_end: c.t_end,
        dt_coarse: c.dt_coarse,
        levels: c.levels,
        reference_refinement: c.reference_refinement,
        n_paths: c.n_paths,
        seed: cfg.seed,
    };
    let mut errors = Table::new(["scheme", "dt", "error", "std_error"]);
    let mut slopes = Table::new(["scheme", "slope"]);
    for scheme in [Scheme::EulerMaruyama, Scheme::Milstein] {
        let r = strong_order_study(&params, scheme, &study)?;
        for i in 0..r.dts.len() {
            errors.push(vec![scheme.label().into(), r.dts[i].into(), r.errors[i].into(), r.std_errors[i].into()]);
        }
        slopes.push(vec![scheme.label().into(), r.slope.into()]);
    }
    sink.table("errors", &errors)?;
    sink.table("slopes", &slopes)?;
    Ok(())
}

fn run_single(sink: &mut OutputSink, cfg: &ExperimentConfig, name: &str, full: bool) -> Result<()> {
    match name {
        "fig9" | "sweep" => run_sweep(sink, cfg),
        "fig10" | "fig11" | "fig12" | "fig13" | "fig20" | "fig21" => run_sde_panels(sink, cfg, name, full),
        "fig15" | "fig16" | "fig18" | "fig19" => run_fp_panels(sink, cfg, name, full),
        "fig17" => run_substrate_comparison(sink, cfg, full),
        "stages" => run_stages(sink, cfg),
        "convergence" => run_convergence(sink, cfg),
        _ => Err(Error::Config(format!("unknown recipe `{name}`; available: {}", RECIPES.join(", ")))),
    }
}

fn finish_or_discard(sink: OutputSink, res: Result<()>, context: &str) -> Result<RunManifest> {
    match res {
        Ok(()) => sink.finish(RunStatus::Complete),
        Err(e) => {
            log::error!("{context} failed: {e}");
            Err(e)
        }
    }
}

/// Runs a named recipe into `<out>/<name>/` for each constituent figure and
/// returns their manifests.
pub fn run_recipe(name: &str, cfg: &ExperimentConfig, config_text: &str, out: &Path, full: bool) -> Result<Vec<RunManifest>> {
    let parts = expand(name);
    if parts.is_empty() {
        return Err(Error::Config(format!("unknown recipe `{name}`; available: {}", RECIPES.join(", "))));
    }
    cfg.validate()?;
    let mut manifests = Vec::new();
    for part in parts {
        let mut sink = OutputSink::new(out, part, config_text, cfg.seed)?;
        let res = run_single(&mut sink, cfg, part, full);
        manifests.push(finish_or_discard(sink, res, &format!("recipe {part}"))?);
    }
    Ok(manifests)
}

/// Command-line subcommands other than `recipe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateOde,
    SimulateSde,
    Stability,
    Sweep,
    Asymptotic,
    FokkerPlanck,
    Convergence,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateOde => "simulate-ode",
            Command::SimulateSde => "simulate-sde",
            Command::Stability => "stability",
            Command::Sweep => "sweep",
            Command::Asymptotic => "asymptotic",
            Command::FokkerPlanck => "fokker-planck",
            Command::Convergence => "convergence",
        }
    }
}

fn command_body(sink: &mut OutputSink, cfg: &ExperimentConfig, cmd: Command, full: bool) -> Result<()> {
    let params = cfg.params()?;
    match cmd {
        Command::SimulateOde => {
            let s0 = cfg.initial.state(&params)?;
            let traj = integrate_ode(&params, s0, cfg.run.t_end, &cfg.run.ode_controls())?;
            sink.table("trajectory", &traj.to_table())?;
        }
        Command::SimulateSde => {
            let s0 = cfg.initial.state(&params)?;
            let e = simulate_ensemble(&params, s0, &cfg.run.sde_controls(&params), cfg.seed, cfg.run.n_paths)?;
            sink.table("paths", &e.paths_table())?;
            sink.table("summary", &e.summary.to_table())?;
            sink.table("tally", &e.tally_table())?;
            sink.table("events", &e.events_table())?;
        }
        Command::Stability => {
            let r = stability_report(&params);
            sink.table("stability", &stability_table(&r))?;
            sink.json("stability", &r)?;
        }
        Command::Sweep => run_sweep(sink, cfg)?,
        Command::Asymptotic => run_asymptotic(sink, cfg)?,
        Command::FokkerPlanck => {
            let mut fp = cfg.fokker_planck.clone();
            if !full {
                fp.horizon = fp.horizon.min(FP_DESK_HORIZON);
                fp.snapshots.retain(|&t| t <= fp.horizon);
            }
            let run = run_fokker_planck(&params, &fp)?;
            for snap in &run.snapshots {
                write_density(sink, &params, &run.domain, snap)?;
            }
            write_density(sink, &params, &run.domain, &run.field)?;
            sink.table("ledger", &MassLedger(&run.field.ledger).to_table())?;
        }
        Command::Convergence => run_convergence(sink, cfg)?,
    }
    Ok(())
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig, config_text: &str, out: &Path, full: bool) -> Result<RunManifest> {
    cfg.validate()?;
    let mut sink = OutputSink::new(out, cmd.name(), config_text, cfg.seed)?;
    let res = command_body(&mut sink, cfg, cmd, full);
    finish_or_discard(sink, res, cmd.name())
}
