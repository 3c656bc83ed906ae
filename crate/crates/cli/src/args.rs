use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use activeray::evolution::{DEFAULT_DT, DEFAULT_RAYS, DEFAULT_STEPS};

#[derive(Debug, Parser)]
#[command(
    name = "activeray",
    version,
    about = "Active-ray contour segmentation on synthetic scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes with pretraining maps.
    Synth(SynthArgs),
    /// Evolve contours on a scene and score them against its polygons.
    Evolve(EvolveArgs),
    /// Train a scene's maps through the unrolled evolution.
    Train(TrainArgs),
    /// Compare predicted contours with ground-truth polygons.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Shape {
    Convex,
    Star,
    Ushape,
}

impl From<Shape> for activeray::ShapeKind {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Convex => Self::Convex,
            Shape::Star => Self::Star,
            Shape::Ushape => Self::UShape,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Explicit,
    Imex,
}

impl From<SolverArg> for activeray::Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Explicit => Self::Explicit,
            SolverArg::Imex => Self::ImplicitExplicit,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving one sub-directory per scene.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(16..))]
    pub width: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(16..))]
    pub height: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub instances: u32,
    #[arg(long, value_enum, default_value_t = Shape::Convex)]
    pub shape: Shape,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub count: u32,
}

#[derive(Debug, Args)]
pub struct EvolutionArgs {
    /// Rays per contour.
    #[arg(long = "L", visible_alias = "rays", default_value_t = DEFAULT_RAYS as u32,
          value_parser = clap::value_parser!(u32).range(5..))]
    pub rays: u32,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub rho_min: f64,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Directory receiving contours.json and the run manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    #[arg(long, value_enum, default_value_t = SolverArg::Explicit)]
    pub solver: SolverArg,
    /// Stop once no radius moves more than this in one step.
    #[arg(long)]
    pub convergence_eps: Option<f64>,
    /// Cover each instance with several contours.
    #[arg(long)]
    pub multi_init: bool,
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Per-instance metrics CSV; defaults to metrics.csv in the output directory.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub train_steps: usize,
    #[arg(long, default_value_t = 4e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.3)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub evolution: EvolutionArgs,
    /// Directory receiving the trained d.arf, beta.arf and kappa.arf.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to history.csv in the output directory.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// An evolve output directory or a scene directory.
    #[arg(long)]
    pub pred: PathBuf,
    /// A scene directory.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub curve: Option<PathBuf>,
}
