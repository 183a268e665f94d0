use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Periodic orbits, averaged fixed points and stability scans of two
/// inclined co-orbital planets. Angles are in degrees, time in orbital
/// periods, masses in units of the total mass.
#[derive(Debug, Parser)]
#[command(name = "coorbital", version)]
pub struct Cli {
    /// Worker threads for scans (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where to write the run manifest (default: <primary output>.manifest.json).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Planar equilateral equilibrium: state, anomaly coefficients (a, b, c), spectrum and Gascheau margin.
    Lagrange(LagrangeArgs),
    /// Fixed points of the averaged problem along a vertical family.
    AvgFamily(AvgFamilyArgs),
    /// Continue a family of periodic orbits in the mutual inclination.
    Continue(ContinueArgs),
    /// Locate a stability change of the L4 family by bisection.
    Transition(TransitionArgs),
    /// Maximum-eccentricity map of circular inclined initial conditions.
    Map(MapArgs),
    /// Stability of the L4 family in the (J, ε) plane.
    Chimney(ChimneyArgs),
    /// Cells around the L4 family with w2 shifted.
    Slab(SlabArgs),
    /// Compare the full and averaged families for several ε.
    CompareAvg(CompareArgs),
    /// Re-run a manifest and check that every output digest matches.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lagrange(_) => "lagrange",
            Command::AvgFamily(_) => "avg-family",
            Command::Continue(_) => "continue",
            Command::Transition(_) => "transition",
            Command::Map(_) => "map",
            Command::Chimney(_) => "chimney",
            Command::Slab(_) => "slab",
            Command::CompareAvg(_) => "compare-avg",
            Command::Replay(_) => "replay",
        }
    }

    /// The same run from scratch.
    pub fn without_resume(&self) -> Self {
        let mut c = self.clone();
        match &mut c {
            Command::Continue(a) => a.resume = false,
            Command::Map(a) => a.resume = false,
            Command::Chimney(a) => a.resume = false,
            Command::Slab(a) => a.resume = false,
            _ => {}
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MassArgs {
    /// Planet mass scale ε = (m1 + m2)/2; the star has 1 − 2ε.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Planet mass ratio m1/m2 at fixed m1 + m2.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    /// Planet 1 mass; with --m2 overrides --eps and --ratio.
    #[arg(long, requires = "m2")]
    pub m1: Option<f64>,
    /// Planet 2 mass; with --m1 overrides --eps and --ratio.
    #[arg(long, requires = "m1")]
    pub m2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LagrangeArgs {
    #[command(flatten)]
    pub masses: MassArgs,
    /// Rotation rate of the equilibrium, radians per period unit.
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    pub omega: f64,
    /// JSON report.
    #[arg(long, default_value = "lagrange.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AvgFamilyArgs {
    /// VFL_from_L4 (or L4), VFL_from_L5 (or L5), VFE.
    #[arg(long, default_value = "L4")]
    pub branch: String,
    /// Largest J0, degrees. Lagrange branches stop at the junction.
    #[arg(long, default_value_t = 179.0)]
    pub j_max: f64,
    /// Spacing in J0, degrees.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Planet mass scale used in the precession column.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Add zeta_series_rad, nu_series and prec_series_deg_per_period columns.
    #[arg(long)]
    pub with_series: bool,
    /// Averaged-family CSV.
    #[arg(long, default_value = "avg_family.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ContinueArgs {
    #[command(flatten)]
    pub masses: MassArgs,
    /// L4, L5 or Euler.
    #[arg(long, default_value = "L4")]
    pub origin: String,
    /// start,end,step of J_p in degrees.
    #[arg(long, default_value = "0,179,1")]
    pub j_schedule: String,
    /// Family CSV, one row per converged orbit.
    #[arg(long, default_value = "family.csv")]
    pub out: PathBuf,
    /// Continue from the last rows already in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TransitionArgs {
    #[command(flatten)]
    pub masses: MassArgs,
    /// lo,hi of J_p in degrees, with different stability at the ends.
    #[arg(long, default_value = "55,65")]
    pub bracket: String,
    /// Final bracket width, degrees.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Bisection log CSV.
    #[arg(long, default_value = "transition.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MapArgs {
    #[command(flatten)]
    pub masses: MassArgs,
    /// Inner axis kind:min:max:count with kind dlambda (degrees), J0 (degrees) or eps.
    #[arg(long, default_value = "dlambda:0:360:61")]
    pub axis1: String,
    /// Outer axis, same format as --axis1.
    #[arg(long, default_value = "J0:0:112.5:46")]
    pub axis2: String,
    /// Integration length, orbital periods.
    #[arg(long, default_value_t = 2000.0)]
    pub periods: f64,
    /// Integrator tolerance (absolute and relative).
    #[arg(long, default_value_t = coorbital::cartography::MAP_TOLERANCE)]
    pub tol: f64,
    /// Map CSV.
    #[arg(long, default_value = "map.csv")]
    pub out: PathBuf,
    /// Skip the cells already in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ChimneyArgs {
    /// lo,hi of ε.
    #[arg(long, default_value = "0.005,0.06")]
    pub eps_range: String,
    /// Spacing in ε.
    #[arg(long, default_value_t = 0.005)]
    pub eps_step: f64,
    /// Last J_p of each family, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub j_end: f64,
    /// Spacing in J_p, degrees.
    #[arg(long, default_value_t = 0.5)]
    pub j_step: f64,
    /// Resolution of window edges, degrees.
    #[arg(long, default_value_t = 1e-2)]
    pub refine_tol: f64,
    /// Resolution in ε of the planar onset.
    #[arg(long, default_value_t = 1e-4)]
    pub onset_tol: f64,
    /// Classification CSV (eps,J_deg,stable).
    #[arg(long, default_value = "chimney.csv")]
    pub out: PathBuf,
    /// Window CSV (eps,J_lower_deg,J_upper_deg).
    #[arg(long, default_value = "chimney_windows.csv")]
    pub out_windows: PathBuf,
    /// Reuse the finished ε columns checkpointed next to --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SlabArgs {
    /// Planet mass scale ε (equal planets).
    #[arg(long, default_value_t = 0.02)]
    pub eps: f64,
    /// Last J_p, degrees.
    #[arg(long, default_value_t = 64.0)]
    pub j_end: f64,
    /// Spacing in J_p, degrees.
    #[arg(long, default_value_t = 0.2)]
    pub j_step: f64,
    /// Shift of w2 between cells, degrees.
    #[arg(long, default_value_t = 0.5)]
    pub w_step: f64,
    /// Shifts run over -w_max..=w_max steps.
    #[arg(long, default_value_t = 40)]
    pub w_max: usize,
    /// Integration length, orbital periods.
    #[arg(long, default_value_t = 10_000.0)]
    pub periods: f64,
    /// Integrator tolerance (absolute and relative).
    #[arg(long, default_value_t = coorbital::cartography::MAP_TOLERANCE)]
    pub tol: f64,
    /// Slab CSV in the map format (axis1 = J_p, axis2 = w1 − w2, degrees).
    #[arg(long, default_value = "slab.csv")]
    pub out: PathBuf,
    /// Skip the cells already in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Comma-separated planet mass scales.
    #[arg(long, default_value = "1e-5,1e-4,1e-3")]
    pub eps: String,
    /// Last J_p, degrees.
    #[arg(long, default_value_t = 120.0)]
    pub j_end: f64,
    /// Spacing in J_p, degrees.
    #[arg(long, default_value_t = 5.0)]
    pub j_step: f64,
    /// Comparison CSV (eps,J_deg,dw_rad,dzeta_rad,normalized).
    #[arg(long, default_value = "compare_avg.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest of the run to repeat.
    pub path: PathBuf,
}
