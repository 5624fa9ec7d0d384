//! Experiment runner: reads a JSON config, writes CSV/JSON outputs stamped
//! with the hash of a manifest describing the run.

pub mod config;
pub mod experiments;
pub mod manifest;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use config::parse;
use experiments::{canonical, Output};
use manifest::{csv_header, ExperimentManifest};

/// Arithmetic used where a run offers a choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Rational,
    Float64,
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("experiment failed: {0}")]
    Experiment(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Io(_) => 1,
            LabError::InvalidConfig(_) => 2,
            LabError::NonConvergence(_) => 3,
            LabError::Experiment(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            LabError::Io(_) => "io",
            LabError::InvalidConfig(_) => "invalid_config",
            LabError::NonConvergence(_) => "non_convergence",
            LabError::Experiment(_) => "experiment",
        }
    }

    /// `{"error": kind, "message": text}` for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Orbit of one section point.
    Orbit,
    /// Escape measures of a box sequence.
    Boxes,
    /// Singular points on a band of levels.
    Sigma,
    /// Continuity partition of the ℓ-th iterate.
    Partition,
    /// Hopf ratio averages along one orbit.
    Hopf,
    /// Sup of the Hopf deviation over a grid of starts.
    Uniform,
    /// Scale conditions for a perturbed ring.
    GenericCheck,
    /// Two Maharam measures on the periodic cover.
    Maharam,
    /// Wind-tree billiard orbit.
    WindtreeOrbit,
    /// Saddle, partition and Hopf statistics over a list of slopes.
    ThetaScan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Boxes => "boxes",
            Command::Sigma => "sigma",
            Command::Partition => "partition",
            Command::Hopf => "hopf",
            Command::Uniform => "uniform",
            Command::GenericCheck => "generic-check",
            Command::Maharam => "maharam",
            Command::WindtreeOrbit => "windtree-orbit",
            Command::ThetaScan => "theta-scan",
        }
    }
}

fn dispatch(command: Command, text: &str, backend: Backend) -> Result<(serde_json::Value, Vec<Output>), LabError> {
    use experiments as x;
    macro_rules! go {
        ($ty:ty, |$c:ident| $body:expr) => {{
            let $c: $ty = parse(text)?;
            let out = $body?;
            (canonical(&$c), out)
        }};
    }
    Ok(match command {
        Command::Orbit => go!(config::OrbitConfig, |c| x::orbit_run(&c, backend)),
        Command::Boxes => go!(config::BoxesConfig, |c| x::boxes_run(&c)),
        Command::Sigma => go!(config::SigmaConfig, |c| x::sigma_run(&c)),
        Command::Partition => go!(config::PartitionConfig, |c| x::partition_run(&c)),
        Command::Hopf => go!(config::HopfConfig, |c| x::hopf_run(&c, backend)),
        Command::Uniform => go!(config::UniformConfig, |c| x::uniform_run(&c)),
        Command::GenericCheck => go!(config::GenericConfig, |c| x::generic_run(&c)),
        Command::Maharam => go!(config::MaharamConfig, |c| x::maharam_run(&c)),
        Command::WindtreeOrbit => go!(config::WindtreeOrbitConfig, |c| x::windtree_orbit_run(&c)),
        Command::ThetaScan => go!(config::ThetaScanConfig, |c| x::theta_scan_run(&c)),
    })
}

/// Runs one experiment and writes its outputs into `out_dir`, which is
/// created if missing. Returns the manifest hash.
pub fn run(command: Command, config_text: &str, out_dir: &Path, backend: Backend, threads: Option<usize>) -> Result<String, LabError> {
    let (config, outputs) = dispatch(command, config_text, backend)?;
    std::fs::create_dir_all(out_dir)?;
    let manifest = ExperimentManifest::new(command.name(), backend, config);
    let hash = manifest.write(out_dir, threads)?;
    for o in outputs {
        let mut bytes = Vec::with_capacity(o.bytes.len() + 80);
        if o.csv {
            bytes.extend_from_slice(csv_header(&hash).as_bytes());
        }
        bytes.extend_from_slice(&o.bytes);
        std::fs::write(out_dir.join(&o.name), bytes)?;
    }
    Ok(hash)
}
