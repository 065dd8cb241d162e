//! Two-population chemostat competition: deterministic dynamics, Langevin
//! simulation, large-feed asymptotics and a Fokker-Planck density solver.

pub mod asymptotics;
pub mod cli;
pub mod deterministic;
pub mod error;
pub mod fokker_planck;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod sde;
pub mod table;

pub use error::{Error, Result};
pub use model::{ChemostatParams, GrowthCurve, NoiseSpec};
