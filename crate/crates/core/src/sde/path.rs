use serde::{Deserialize, Serialize};

use super::{step_raw, Scheme};
use crate::deterministic::{State, SurvivorLabel};
use crate::error::{Error, Result};
use crate::model::{ChemostatParams, NoiseSpec};
use crate::rng::NormalStream;
use crate::table::{Table, ToTable};

/// Largest explicit step that keeps the fast substrate direction of the
/// coexistence line inside the Euler stability region with a factor 2 margin.
pub fn stable_dt(params: &ChemostatParams) -> f64 {
    let slope = params.curve_x.slope(1.0).max(params.curve_y.slope(1.0));
    1.0 / (params.z_f * slope)
}

/// `min(1e-3, stable_dt)`.
pub fn default_dt(params: &ChemostatParams) -> f64 {
    1e-3f64.min(stable_dt(params))
}

/// Fixed-step run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeControls {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Record every `record_every`-th step (the final step is always recorded).
    pub record_every: u64,
    /// End the path at the first extinction.
    pub stop_on_extinction: bool,
    /// Extinction threshold as a fraction of `z_f`.
    pub extinction_fraction: f64,
}

impl SdeControls {
    pub fn new(params: &ChemostatParams, t_end: f64) -> Self {
        let dt = default_dt(params);
        let steps = (t_end / dt).round().max(1.0) as u64;
        SdeControls {
            dt,
            t_end,
            scheme: Scheme::EulerMaruyama,
            record_every: (steps / 1000).max(1),
            stop_on_extinction: false,
            extinction_fraction: 1e-6,
        }
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::param("t_end", format!("t_end = {} must be >= dt = {}", self.t_end, self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        if !(self.extinction_fraction > 0.0) {
            return Err(Error::param("extinction_fraction", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Population {
    X,
    Y,
}

impl Population {
    pub fn label(&self) -> &'static str {
        match self {
            Population::X => "x",
            Population::Y => "y",
        }
    }
}

/// First passage of a population below the extinction threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionEvent {
    pub population: Population,
    pub t: f64,
    pub step: u64,
}

/// A component pushed below zero and reset; `amount` is the mass added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClampEvent {
    pub step: u64,
    pub component: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathOutcome {
    Completed,
    StoppedAtExtinction,
}

/// One stochastic path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Step index of each recorded state.
    pub steps: Vec<u64>,
    pub seed: u64,
    pub path: u32,
    pub scheme: Scheme,
    pub dt: f64,
    pub events: Vec<ExtinctionEvent>,
    pub clamps: Vec<ClampEvent>,
    pub outcome: PathOutcome,
}

impl Trajectory {
    pub fn last(&self) -> State {
        *self.states.last().expect("trajectory holds the initial state")
    }

    pub fn extinction_time(&self, who: Population) -> Option<f64> {
        self.events.iter().find(|e| e.population == who).map(|e| e.t)
    }

    /// Survivor by the extinction rule.
    pub fn survivor(&self) -> SurvivorLabel {
        match (self.extinction_time(Population::X), self.extinction_time(Population::Y)) {
            (Some(_), Some(_)) => SurvivorLabel::BothWashout,
            (Some(_), None) => SurvivorLabel::Y,
            (None, Some(_)) => SurvivorLabel::X,
            (None, None) => SurvivorLabel::Undetermined,
        }
    }
}

impl ToTable for Trajectory {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "x", "y", "z"]);
        for (ti, s) in self.times.iter().zip(&self.states) {
            t.push(vec![(*ti).into(), s.x.into(), s.y.into(), s.z.into()]);
        }
        t
    }
}

/// Fixed-step path for path index 0 with about 1000 recorded states.
pub fn simulate(
    params: &ChemostatParams,
    s0: State,
    dt: f64,
    t_end: f64,
    seed: u64,
    scheme: Scheme,
) -> Result<Trajectory> {
    let mut controls = SdeControls::new(params, t_end);
    controls.dt = dt;
    controls.scheme = scheme;
    controls.record_every = ((t_end / dt).round() as u64 / 1000).max(1);
    simulate_path(params, s0, &controls, seed, 0)
}

/// Fixed-step path whose Wiener increments are addressed by `(seed, path, step)`.
pub fn simulate_path(
    params: &ChemostatParams,
    s0: State,
    controls: &SdeControls,
    seed: u64,
    path: u32,
) -> Result<Trajectory> {
    params.validate()?;
    controls.validate()?;
    if !(s0.x >= 0.0 && s0.y >= 0.0 && s0.z >= 0.0 && s0.is_finite()) {
        return Err(Error::Domain(format!("initial state must be finite and non-negative, got {s0:?}")));
    }
    let dt = controls.dt;
    let n_steps = controls.steps();
    let n_ch = params.noise.channels();
    let stream = NormalStream::new(seed);
    let sq = dt.sqrt();
    let threshold = controls.extinction_fraction * params.z_f;

    let cap = (n_steps / controls.record_every + 2).min(1 << 22) as usize;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    let mut steps = Vec::with_capacity(cap);
    times.push(0.0);
    states.push(s0);
    steps.push(0);
    let mut events = Vec::new();
    let mut clamps = Vec::new();
    let mut x_gone = s0.x < threshold;
    let mut y_gone = s0.y < threshold;
    for (gone, population) in [(x_gone, Population::X), (y_gone, Population::Y)] {
        if gone {
            events.push(ExtinctionEvent { population, t: 0.0, step: 0 });
        }
    }
    let mut outcome = PathOutcome::Completed;

    let mut s = s0.to_array();
    let mut cache = [[0.0f64; 2]; 3];
    let mut dw = [0.0f64; 3];
    for k in 0..n_steps {
        let parity = (k & 1) as usize;
        if parity == 0 {
            for (c, slot) in cache.iter_mut().enumerate().take(n_ch) {
                *slot = stream.step_pair(path, k >> 1, c as u32);
            }
        }
        for c in 0..n_ch {
            dw[c] = sq * cache[c][parity];
        }
        let mut next = step_raw(controls.scheme, params, s, dt, &dw);
        let step = k + 1;
        if !(next[0].is_finite() && next[1].is_finite() && next[2].is_finite()) {
            return Err(Error::NonFinite { step: step as usize, state: next });
        }
        for (i, v) in next.iter_mut().enumerate() {
            if *v < 0.0 {
                clamps.push(ClampEvent { step, component: i, amount: -*v });
                *v = 0.0;
            }
        }
        s = next;
        let t = step as f64 * dt;
        let mut stop = false;
        if !x_gone && s[0] < threshold {
            x_gone = true;
            events.push(ExtinctionEvent { population: Population::X, t, step });
            stop = controls.stop_on_extinction;
        }
        if !y_gone && s[1] < threshold {
            y_gone = true;
            events.push(ExtinctionEvent { population: Population::Y, t, step });
            stop = controls.stop_on_extinction;
        }
        if stop || step % controls.record_every == 0 || step == n_steps {
            times.push(t);
            states.push(State::from_array(s));
            steps.push(step);
        }
        if stop {
            outcome = PathOutcome::StoppedAtExtinction;
            break;
        }
    }
    Ok(Trajectory { times, states, steps, seed, path, scheme: controls.scheme, dt, events, clamps, outcome })
}

/// Replays the exact Euler-Maruyama recursion of the substrate deficit
/// `w = z_f - x - y - z`, `w' = w (1 - theta dt - sigma dW) - clamped mass`,
/// from regenerated increments and returns the largest deviation from the
/// recorded states.
pub fn deficit_diagnostic(traj: &Trajectory, params: &ChemostatParams) -> Result<f64> {
    let sigma = match params.noise {
        NoiseSpec::DilutionRate { sigma } => sigma,
        NoiseSpec::None => 0.0,
        NoiseSpec::General { .. } => {
            return Err(Error::Precondition("deficit recursion holds only for dilution-rate noise".into()))
        }
    };
    if traj.scheme != Scheme::EulerMaruyama {
        return Err(Error::Precondition("deficit recursion holds only for Euler-Maruyama paths".into()));
    }
    let stream = NormalStream::new(traj.seed);
    let sq = traj.dt.sqrt();
    let factor = 1.0 - params.theta * traj.dt;
    let mut w = params.z_f - traj.states[0].total();
    let mut max_dev: f64 = 0.0;
    let mut clamp = traj.clamps.iter().peekable();
    let mut rec = 1;
    let last = *traj.steps.last().unwrap_or(&0);
    for k in 0..last {
        let dw = if sigma > 0.0 { sq * stream.normal(traj.path, k, 0) } else { 0.0 };
        w *= factor - sigma * dw;
        let step = k + 1;
        while let Some(c) = clamp.next_if(|c| c.step == step) {
            w -= c.amount;
        }
        if rec < traj.steps.len() && traj.steps[rec] == step {
            let dev = ((params.z_f - traj.states[rec].total()) - w).abs();
            max_dev = max_dev.max(dev);
            rec += 1;
        }
    }
    Ok(max_dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dilution(theta: f64, sigma: f64, z_f: f64) -> ChemostatParams {
        ChemostatParams::table1(theta, NoiseSpec::DilutionRate { sigma }).unwrap().with_z_f(z_f).unwrap()
    }

    #[test]
    fn default_dt_respects_stability() {
        let p = dilution(1.0, 0.0, 1500.0);
        assert_eq!(default_dt(&p), 1e-3);
        let p = dilution(1.0, 0.0, 15000.0);
        assert!(default_dt(&p) < 1.1e-4);
    }

    #[test]
    fn calm_path_on_line_is_constant() {
        let p = dilution(1.0, 0.0, 1500.0);
        let s0 = State::on_line_split(p.z_f);
        let tr = simulate(&p, s0, 1e-3, 5.0, 1, Scheme::EulerMaruyama).unwrap();
        for s in &tr.states {
            assert!((s.x - s0.x).abs() < 1e-9 * p.z_f);
            assert!((s.y - s0.y).abs() < 1e-9 * p.z_f);
        }
        assert_eq!(tr.survivor(), SurvivorLabel::Undetermined);
    }

    #[test]
    fn reproducible_bitwise() {
        let p = dilution(1.0, 0.01, 1500.0);
        let s0 = State::on_line_split(p.z_f);
        let a = simulate(&p, s0, 1e-3, 3.0, 9, Scheme::EulerMaruyama).unwrap();
        let b = simulate(&p, s0, 1e-3, 3.0, 9, Scheme::EulerMaruyama).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, s0, 1e-3, 3.0, 10, Scheme::EulerMaruyama).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn deficit_identity_holds() {
        let p = dilution(1.0, 0.05, 1500.0);
        let s0 = State::new(10.0, 10.0, 0.0);
        let mut c = SdeControls::new(&p, 20.0);
        c.record_every = 7;
        let tr = simulate_path(&p, s0, &c, 3, 2).unwrap();
        let dev = deficit_diagnostic(&tr, &p).unwrap();
        assert!(dev <= 1e-9 * p.z_f, "{dev}");
        let mil = simulate(&p, s0, 1e-3, 1.0, 3, Scheme::Milstein).unwrap();
        assert!(deficit_diagnostic(&mil, &p).is_err());
        let gp = p.with_noise(NoiseSpec::General { sigma1: 0.1, sigma2: 0.1, sigma3: 0.1 }).unwrap();
        assert!(deficit_diagnostic(&tr, &gp).is_err());
    }

    #[test]
    fn calm_deficit_decays_geometrically() {
        let p = dilution(1.0, 0.0, 1500.0);
        let s0 = State::new(10.0, 10.0, 0.0);
        let tr = simulate(&p, s0, 1e-3, 2.0, 0, Scheme::EulerMaruyama).unwrap();
        let w0 = p.z_f - 20.0;
        let s = tr.last();
        let n = *tr.steps.last().unwrap() as i32;
        assert!(((p.z_f - s.total()) - w0 * (1.0 - 1e-3f64).powi(n)).abs() < 1e-9 * p.z_f);
    }

    #[test]
    fn absorbed_population_stays_zero() {
        let p = ChemostatParams::table1(1.0, NoiseSpec::General { sigma1: 0.5, sigma2: 0.5, sigma3: 0.5 })
            .unwrap()
            .with_z_f(1500.0)
            .unwrap();
        let tr = simulate(&p, State::new(0.0, 100.0, 1.0), 1e-3, 5.0, 4, Scheme::Milstein).unwrap();
        assert!(tr.states.iter().all(|s| s.x == 0.0));
        assert_eq!(tr.extinction_time(Population::X), Some(0.0));
    }

    #[test]
    fn stops_at_extinction() {
        let p = dilution(1.3, 0.0, 1500.0);
        let mut c = SdeControls::new(&p, 400.0);
        c.stop_on_extinction = true;
        let tr = simulate_path(&p, State::new(1.0, 1.0, 1500.0), &c, 0, 0).unwrap();
        assert_eq!(tr.outcome, PathOutcome::StoppedAtExtinction);
        assert_eq!(tr.events.len(), 1);
        assert_eq!(tr.survivor(), SurvivorLabel::X);
    }

    #[test]
    fn validates_controls() {
        let p = dilution(1.0, 0.0, 1500.0);
        assert!(simulate(&p, State::new(1.0, 1.0, 1.0), 0.0, 1.0, 0, Scheme::EulerMaruyama).is_err());
        assert!(simulate(&p, State::new(1.0, 1.0, 1.0), 1e-2, 1e-3, 0, Scheme::EulerMaruyama).is_err());
    }
}
