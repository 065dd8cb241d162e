use rayon::prelude::*;

use super::path::{simulate_path, SdeControls, Trajectory};
use crate::deterministic::{State, SurvivorLabel};
use crate::error::{Error, Result};
use crate::model::ChemostatParams;
use crate::numeric::quantile;
use crate::table::{Table, ToTable};

#[derive(Debug, Clone, PartialEq)]
pub struct PathFailure {
    pub path: u32,
    pub error: String,
}

/// Per-path survivor counts; the fields sum to the ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SurvivorTally {
    pub x: usize,
    pub y: usize,
    pub both_washout: usize,
    pub undetermined: usize,
    pub failed: usize,
}

impl SurvivorTally {
    pub fn total(&self) -> usize {
        self.x + self.y + self.both_washout + self.undetermined + self.failed
    }

    fn add(&mut self, label: SurvivorLabel) {
        match label {
            SurvivorLabel::X => self.x += 1,
            SurvivorLabel::Y => self.y += 1,
            SurvivorLabel::BothWashout => self.both_washout += 1,
            SurvivorLabel::NumericalFailure => self.failed += 1,
            SurvivorLabel::Coexist | SurvivorLabel::Undetermined => self.undetermined += 1,
        }
    }
}

/// Cross-path statistics on the shared record grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    /// Paths contributing at each time (stopped paths drop out).
    pub count: Vec<usize>,
    pub mean: Vec<[f64; 3]>,
    pub q05: Vec<[f64; 3]>,
    pub q50: Vec<[f64; 3]>,
    pub q95: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<PathFailure>,
    pub summary: EnsembleSummary,
    pub tally: SurvivorTally,
}

fn summarize(trajs: &[Trajectory]) -> EnsembleSummary {
    let Some(longest) = trajs.iter().max_by_key(|t| t.steps.len()) else {
        return EnsembleSummary::default();
    };
    let mut out = EnsembleSummary::default();
    for (i, &step) in longest.steps.iter().enumerate() {
        let members: Vec<State> =
            trajs.iter().filter(|t| t.steps.get(i) == Some(&step)).map(|t| t.states[i]).collect();
        let n = members.len();
        let mut mean = [0.0; 3];
        let (mut q05, mut q50, mut q95) = ([0.0; 3], [0.0; 3], [0.0; 3]);
        for c in 0..3 {
            let mut v: Vec<f64> = members.iter().map(|s| s.to_array()[c]).collect();
            mean[c] = v.iter().sum::<f64>() / n as f64;
            v.sort_by(f64::total_cmp);
            q05[c] = quantile(&v, 0.05);
            q50[c] = quantile(&v, 0.5);
            q95[c] = quantile(&v, 0.95);
        }
        out.times.push(longest.times[i]);
        out.count.push(n);
        out.mean.push(mean);
        out.q05.push(q05);
        out.q50.push(q50);
        out.q95.push(q95);
    }
    out
}

/// `n` paths sharing `base_seed`, path `i` drawing increments at path index `i`.
pub fn simulate_ensemble(
    params: &ChemostatParams,
    s0: State,
    controls: &SdeControls,
    base_seed: u64,
    n: usize,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::param("n_paths", "ensemble needs at least one path"));
    }
    if n > u32::MAX as usize {
        return Err(Error::param("n_paths", "too many paths"));
    }
    params.validate()?;
    controls.validate()?;
    let runs: Vec<(u32, Result<Trajectory>)> = (0..n as u32)
        .into_par_iter()
        .map(|i| (i, simulate_path(params, s0, controls, base_seed, i)))
        .collect();
    let mut trajectories = Vec::with_capacity(n);
    let mut failures = Vec::new();
    let mut tally = SurvivorTally::default();
    for (path, r) in runs {
        match r {
            Ok(t) => {
                tally.add(t.survivor());
                trajectories.push(t);
            }
            Err(e) => {
                log::warn!("path {path} failed: {e}");
                tally.add(SurvivorLabel::NumericalFailure);
                failures.push(PathFailure { path, error: e.to_string() });
            }
        }
    }
    let summary = summarize(&trajectories);
    Ok(Ensemble { trajectories, failures, summary, tally })
}

impl Ensemble {
    /// Long-format paths: `path,t,x,y,z`.
    pub fn paths_table(&self) -> Table {
        let mut t = Table::new(["path", "t", "x", "y", "z"]);
        for tr in &self.trajectories {
            for (ti, s) in tr.times.iter().zip(&tr.states) {
                t.push(vec![tr.path.into(), (*ti).into(), s.x.into(), s.y.into(), s.z.into()]);
            }
        }
        t
    }

    /// `path,population,t_extinct`.
    pub fn events_table(&self) -> Table {
        let mut t = Table::new(["path", "population", "t_extinct"]);
        for tr in &self.trajectories {
            for e in &tr.events {
                t.push(vec![tr.path.into(), e.population.label().into(), e.t.into()]);
            }
        }
        t
    }

    /// `path,survivor,t_end`, one row per path including failures.
    pub fn tally_table(&self) -> Table {
        let mut rows: Vec<(u32, String, f64)> = self
            .trajectories
            .iter()
            .map(|tr| (tr.path, tr.survivor().label().to_string(), *tr.times.last().unwrap_or(&0.0)))
            .chain(self.failures.iter().map(|f| (f.path, SurvivorLabel::NumericalFailure.label().to_string(), f64::NAN)))
            .collect();
        rows.sort_by_key(|r| r.0);
        let mut t = Table::new(["path", "survivor", "t_end"]);
        for (p, l, te) in rows {
            t.push(vec![p.into(), l.into(), te.into()]);
        }
        t
    }
}

impl ToTable for EnsembleSummary {
    fn to_table(&self) -> Table {
        let mut header = vec!["t".to_string(), "n".to_string()];
        for c in ["x", "y", "z"] {
            for stat in ["mean", "q05", "q50", "q95"] {
                header.push(format!("{stat}_{c}"));
            }
        }
        let mut t = Table::new(header);
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].into(), self.count[i].into()];
            for c in 0..3 {
                row.push(self.mean[i][c].into());
                row.push(self.q05[i][c].into());
                row.push(self.q50[i][c].into());
                row.push(self.q95[i][c].into());
            }
            t.push(row);
        }
        t
    }
}
