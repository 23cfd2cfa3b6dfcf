//! Command-line pipeline around `bubble-core`: configuration, the staged
//! run, CSV and plot artifacts and the JSON manifest.

pub mod config;
pub mod manifest;
pub mod stages;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub use config::RunConfig;
pub use manifest::{emit_manifest, Manifest, StageRecord, StageStatus};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "ANNULUS_BUBBLE_LAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Radial,
    Spectrum,
    Sweep,
    Landscape,
    Construct,
    Verify,
    All,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Radial,
        Command::Spectrum,
        Command::Sweep,
        Command::Landscape,
        Command::Construct,
        Command::Verify,
        Command::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Radial => "radial",
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
            Command::Landscape => "landscape",
            Command::Construct => "construct",
            Command::Verify => "verify",
            Command::All => "all",
        }
    }

    /// Stages in dependency order.
    pub fn stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Command::Radial => &[Radial],
            Command::Spectrum => &[Radial, Spectrum],
            Command::Sweep => &[Sweep],
            Command::Landscape => &[Radial, Landscape],
            Command::Construct => &[Radial, Landscape, Construct],
            Command::Verify => &[Radial, Landscape, Verify],
            Command::All => &[Radial, Spectrum, Sweep, Landscape, Construct, Verify],
        }
    }
}

impl FromStr for Command {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, RunError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| RunError::Config(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Radial,
    Spectrum,
    Sweep,
    Landscape,
    Construct,
    Verify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Radial => "radial",
            Stage::Spectrum => "spectrum",
            Stage::Sweep => "sweep",
            Stage::Landscape => "landscape",
            Stage::Construct => "construct",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Numerical { stage: String, message: String },
    #[error("invariant violated in stage {stage}: {message}")]
    Invariant { stage: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical { .. } | RunError::Io(_) => 3,
            RunError::Invariant { .. } => 4,
        }
    }
}

pub struct RunOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// First numerical failure, else first invariant violation.
    pub fn error(&self) -> Option<RunError> {
        let stages = &self.manifest.stages;
        if let Some(s) = stages.iter().find(|s| s.status == StageStatus::Failed) {
            return Some(RunError::Numerical {
                stage: s.name.clone(),
                message: s.error.clone().unwrap_or_default(),
            });
        }
        stages.iter().find(|s| s.status == StageStatus::Violated).map(|s| RunError::Invariant {
            stage: s.name.clone(),
            message: s.violations.join("; "),
        })
    }

    pub fn exit_code(&self) -> i32 {
        self.error().map_or(0, |e| e.exit_code())
    }
}

/// Output directory: explicit flag, then the environment, then the config.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output.dir.clone(),
    }
}

/// Runs every stage of `command`, writes the artifacts and the manifest.
/// Stage failures are recorded in the manifest; only configuration and
/// manifest i/o errors are returned as `Err`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let records = stages::Pipeline::new(cfg, out).run(command.stages());
    let manifest = emit_manifest(command.name(), cfg, &records, out)?;
    Ok(RunOutcome {
        manifest,
        out_dir: out.to_path_buf(),
    })
}
