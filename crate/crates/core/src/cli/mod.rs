//! Command-line driver: TOML experiment configs, figure recipes and
//! checksummed CSV outputs.

pub mod config;
pub mod output;
pub mod recipes;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{parse_config, ExperimentConfig, InitialPolicy, ModelConfig, Preset, RunConfig, SCHEMA_VERSION};
pub use output::{read_manifest, sha256_hex, verify_manifest, Mismatch, OutputEntry, OutputSink, RunManifest, RunStatus};
pub use recipes::{run_command, run_recipe, Command, RECIPES};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "chemostat", version, about = "Two-population chemostat experiments")]
pub struct Cli {
    /// TOML experiment description; defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root (default: the config's `out`, else `./out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Full-length horizons instead of desk-scale ones.
    #[arg(long, global = true)]
    pub full: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    SimulateOde,
    SimulateSde,
    Stability,
    Sweep,
    Asymptotic,
    FokkerPlanck,
    Convergence,
    /// Runs a figure recipe.
    Recipe { name: String },
    /// Re-checks the checksums of a finished output directory.
    Verify { dir: PathBuf },
}

/// Effective config after the command-line overrides.
pub fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(manifests: &[RunManifest]) {
    for m in manifests {
        println!("{}: {} files, {:.2} s", m.recipe, m.outputs.len(), m.wall_clock_seconds);
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Cmd::Verify { dir } = &cli.command {
        let bad = verify_manifest(dir)?;
        for b in &bad {
            println!("{}: {}", b.path, b.reason);
        }
        if !bad.is_empty() {
            return Err(Error::Precondition(format!("{} output(s) fail verification", bad.len())));
        }
        println!("ok");
        return Ok(());
    }
    let cfg = load_config(cli.config.as_ref(), cli.seed)?;
    let text = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let cmd = match &cli.command {
        Cmd::Recipe { name } => {
            report(&run_recipe(name, &cfg, &text, &out, cli.full)?);
            return Ok(());
        }
        Cmd::SimulateOde => Command::SimulateOde,
        Cmd::SimulateSde => Command::SimulateSde,
        Cmd::Stability => Command::Stability,
        Cmd::Sweep => Command::Sweep,
        Cmd::Asymptotic => Command::Asymptotic,
        Cmd::FokkerPlanck => Command::FokkerPlanck,
        Cmd::Convergence => Command::Convergence,
        Cmd::Verify { .. } => unreachable!(),
    };
    report(&[run_command(cmd, &cfg, &text, &out, cli.full)?]);
    Ok(())
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
