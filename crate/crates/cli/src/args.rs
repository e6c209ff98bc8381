use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "cutoff", version, about = "Cutoff profiles of exclusion processes with reservoirs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Laplacian eigenvalues as CSV.
    Spectrum(SpectrumArgs),
    /// Stationary density and, optionally, two-point correlations.
    Stationary(StationaryArgs),
    /// Predicted cutoff profile over a time grid.
    Profile(ProfileArgs),
    /// Monte Carlo experiment against the predicted profile.
    Simulate(SimulateArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Segment,
    Lattice,
    Torus,
    MixedCube,
    Sierpinski,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    /// Graph family.
    #[arg(long, value_enum, required_unless_present = "graph")]
    pub family: Option<FamilyArg>,
    /// Side length (lattices, tori, segments).
    #[arg(long)]
    pub n: Option<usize>,
    /// Gasket level.
    #[arg(long)]
    pub level: Option<usize>,
    /// Dimension of lattices and tori.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Comma-separated face kinds, `open`, `closed` or `periodic`, ordered
    /// low/high per axis (three corners for the gasket).
    #[arg(long)]
    pub faces: Option<String>,
    /// Reservoir rates `c+:c-:theta`, one entry for every open face or a
    /// single entry shared by all of them.
    #[arg(long, default_value = "0.5:0.5:0")]
    pub rates: String,
    /// Read the graph from a JSON file instead.
    #[arg(long, conflicts_with_all = ["family", "n", "level", "faces"])]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StationaryArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Particle density for closed models.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Density CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Pair correlation CSV (models with reservoirs only).
    #[arg(long)]
    pub correlations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartArg {
    Auto,
    Ones,
    Zeros,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictionArgs {
    /// Particle density of the extremal start in closed models.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Extremal start for models with reservoirs.
    #[arg(long, value_enum, default_value_t = StartArg::Auto)]
    pub start: StartArg,
    /// Profile times as `start:stop:step`, endpoints included.
    #[arg(long, allow_hyphen_values = true, default_value = "-2:2:0.5")]
    pub t: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub prediction: PredictionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub prediction: PredictionArgs,
    /// Replicas per leg.
    #[arg(long, default_value_t = 2000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    /// Deterministic criteria only.
    Quick,
    /// Every criterion, Monte Carlo included.
    Full,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Tier::Quick)]
    pub tier: Tier,
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("bad number {p:?} in time grid: {e}"));
    match parts.as_slice() {
        [single] => Ok(vec![num(single)?]),
        [a, b, c] => {
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                return Err(format!("time grid {s:?} needs start <= stop and step > 0"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(format!("time grid {s:?} is not start:stop:step")),
    }
}
