use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::asymptotics::stage5_zbar;
use crate::deterministic::{IntegrationControls, State, SweepAxis, SweepInitial};
use crate::error::{Error, Result};
use crate::fokker_planck::{FpConfig, ReducedSdeConfig};
use crate::model::{ChemostatParams, GrowthCurve, NoiseSpec, TABLE1_X, TABLE1_Y, TABLE1_Z_F, TABLE3_X, TABLE3_Y};
use crate::sde::{default_dt, Scheme, SdeControls};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Table1,
    Table3,
}

/// Model section: a parameter preset with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub preset: Preset,
    pub theta: f64,
    pub z_f: Option<f64>,
    pub curve_x: Option<GrowthCurve>,
    pub curve_y: Option<GrowthCurve>,
    pub noise: NoiseSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { preset: Preset::Table1, theta: 1.0, z_f: None, curve_x: None, curve_y: None, noise: NoiseSpec::None }
    }
}

impl ModelConfig {
    pub fn params(&self) -> Result<ChemostatParams> {
        let (cx, cy) = match self.preset {
            Preset::Table1 => (TABLE1_X, TABLE1_Y),
            Preset::Table3 => (TABLE3_X, TABLE3_Y),
        };
        ChemostatParams::new(
            self.theta,
            self.z_f.unwrap_or(TABLE1_Z_F),
            self.curve_x.unwrap_or(cx),
            self.curve_y.unwrap_or(cy),
            self.noise,
        )
    }
}

/// How the initial state of a full-system run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialPolicy {
    /// `(z_f/2 - 1, z_f/2, 1)` on the coexistence line.
    #[default]
    OnLineSplit,
    Explicit { x: f64, y: f64, z: f64 },
    /// Scaled populations; the substrate comes from the algebraic balance.
    Reduced { x_bar: f64, y_bar: f64 },
}

impl InitialPolicy {
    pub fn state(&self, params: &ChemostatParams) -> Result<State> {
        let s = match *self {
            InitialPolicy::OnLineSplit => State::on_line_split(params.z_f),
            InitialPolicy::Explicit { x, y, z } => State::new(x, y, z),
            InitialPolicy::Reduced { x_bar, y_bar } => {
                let z = stage5_zbar(params, x_bar, y_bar)?;
                State::new(x_bar * params.z_f, y_bar * params.z_f, z)
            }
        };
        if !(s.is_finite() && s.x >= 0.0 && s.y >= 0.0 && s.z >= 0.0) {
            return Err(Error::Config(format!("initial state {s:?} must be finite and non-negative")));
        }
        Ok(s)
    }
}

/// Time integration for the ODE and SDE commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// SDE step; defaults to `min(1e-3, stable_dt)`.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub n_paths: usize,
    pub scheme: Scheme,
    pub record_every: Option<u64>,
    pub stop_on_extinction: bool,
    pub extinction_fraction: f64,
    /// ODE relative tolerance.
    pub rtol: f64,
    /// ODE absolute tolerance as a multiple of `z_f`.
    pub atol_scale: f64,
    pub n_out: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dt: None,
            t_end: 100.0,
            n_paths: 3,
            scheme: Scheme::EulerMaruyama,
            record_every: None,
            stop_on_extinction: false,
            extinction_fraction: 1e-6,
            rtol: 1e-8,
            atol_scale: 1e-10,
            n_out: 1000,
        }
    }
}

impl RunConfig {
    pub fn sde_controls(&self, params: &ChemostatParams) -> SdeControls {
        let mut c = SdeControls::new(params, self.t_end);
        c.dt = self.dt.unwrap_or_else(|| default_dt(params));
        c.scheme = self.scheme;
        let steps = (self.t_end / c.dt).round().max(1.0) as u64;
        c.record_every = self.record_every.unwrap_or((steps / 1000).max(1));
        c.stop_on_extinction = self.stop_on_extinction;
        c.extinction_fraction = self.extinction_fraction;
        c
    }

    pub fn ode_controls(&self) -> IntegrationControls {
        let mut c = IntegrationControls::with_tolerances(self.rtol, self.atol_scale);
        c.n_out = self.n_out;
        c
    }
}

/// Survivor sweep around the model section's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis1: SweepAxis,
    pub axis2: Option<SweepAxis>,
    pub initial: SweepInitial,
    pub t_end: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis1: SweepAxis { param: crate::deterministic::SweepParam::Theta, values: vec![0.98, 0.99, 1.0, 1.01, 1.02] },
            axis2: None,
            initial: SweepInitial::default(),
            t_end: 2000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticConfig {
    pub m1: f64,
    pub m2: f64,
    pub ladder: Vec<f64>,
    /// Slow-time span of the final stage.
    pub t5_end: f64,
    pub n_out: usize,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        AsymptoticConfig { m1: 1.0, m2: 1.0, ladder: vec![1e3, 1e4, 1e5], t5_end: 40.0, n_out: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub s0: State,
    pub t_end: f64,
    pub dt_coarse: f64,
    pub levels: usize,
    pub reference_refinement: u32,
    pub n_paths: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            s0: State::new(1.0, 1.0, 1.0),
            t_end: 1.0,
            dt_coarse: 0.05,
            levels: 4,
            reference_refinement: 4,
            n_paths: 200,
        }
    }
}

/// One experiment described by a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub recipe: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub initial: InitialPolicy,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub fokker_planck: FpConfig,
    #[serde(default)]
    pub reduced_sde: ReducedSdeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub asymptotic: AsymptoticConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

fn default_seed() -> u64 {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            recipe: None,
            seed: default_seed(),
            out: None,
            model: ModelConfig::default(),
            initial: InitialPolicy::default(),
            run: RunConfig::default(),
            fokker_planck: FpConfig::default(),
            reduced_sde: ReducedSdeConfig::default(),
            sweep: SweepConfig::default(),
            asymptotic: AsymptoticConfig::default(),
            convergence: ConvergenceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let params = self.model.params()?;
        self.initial.state(&params)?;
        let r = &self.run;
        if !(r.t_end > 0.0) {
            return Err(Error::Config(format!("run.t_end must be positive, got {}", r.t_end)));
        }
        if r.dt.is_some_and(|dt| !(dt > 0.0 && dt <= r.t_end)) {
            return Err(Error::Config("run.dt must lie in (0, t_end]".into()));
        }
        if r.n_paths == 0 {
            return Err(Error::Config("run.n_paths must be at least 1".into()));
        }
        if !(r.rtol > 0.0 && r.atol_scale > 0.0) || r.n_out == 0 {
            return Err(Error::Config("run.rtol, run.atol_scale and run.n_out must be positive".into()));
        }
        r.sde_controls(&params).validate()?;
        let fp = &self.fokker_planck;
        if !(fp.h > 0.0 && fp.dt > 0.0 && fp.horizon > 0.0 && fp.cut_offset > 0.0) {
            return Err(Error::Config("fokker_planck.h, dt, horizon and cut_offset must be positive".into()));
        }
        if !(fp.sds.0 > 0.0 && fp.sds.1 > 0.0) {
            return Err(Error::Config("fokker_planck.sds must be positive".into()));
        }
        if self.asymptotic.ladder.iter().any(|&z| !(z > 1.0)) {
            return Err(Error::Config("asymptotic.ladder entries need z_f > 1".into()));
        }
        Ok(())
    }

    /// Model parameters after validation.
    pub fn params(&self) -> Result<ChemostatParams> {
        self.model.params()
    }
}

/// Parses and validates a TOML experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
