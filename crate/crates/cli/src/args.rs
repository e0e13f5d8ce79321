use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Rigid pose of a known 3D shape from one silhouette.
#[derive(Debug, Parser)]
#[command(name = "silpose", version)]
pub struct Cli {
    /// Seed for template sampling, noise and candidate subsampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for precomputation and search (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Progress on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the mesh and precompute the area and aspect-ratio fields.
    Precompute(PrecomputeArgs),
    /// Render a ground-truth silhouette and its pose sidecar.
    Render(RenderArgs),
    /// Recover the pose behind a silhouette.
    Estimate(EstimateArgs),
    /// Random-pose trials with error statistics.
    Benchmark(BenchmarkArgs),
    /// Sweep one parameter and tabulate accuracy and runtime.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Ortho,
    Persp,
}

/// Template source and projection model.
#[derive(Debug, Args)]
pub struct TemplateArgs {
    /// OBJ or ASCII PLY file, or `builtin:NAME` (lprism, cube, box, sphere).
    #[arg(long)]
    pub mesh: String,
    /// Number of surface samples.
    #[arg(long, default_value_t = 30_000)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct CameraArgs {
    #[arg(long, value_enum, default_value_t = Mode::Ortho)]
    pub mode: Mode,
    /// Depth prior (perspective only).
    #[arg(long)]
    pub depth: Option<f64>,
    #[arg(long, default_value_t = 1000.0)]
    pub fx: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub fy: f64,
    #[arg(long, default_value_t = 0.0)]
    pub cx: f64,
    #[arg(long, default_value_t = 0.0)]
    pub cy: f64,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub template: TemplateArgs,
    /// Disc grid resolution.
    #[arg(long, default_value_t = 96)]
    pub grid: usize,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long)]
    pub out_pal: PathBuf,
    #[arg(long)]
    pub out_pearl: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub template: TemplateArgs,
    /// `rx,ry,rz,tx,ty,tz`: intrinsic XYZ Euler angles in degrees, then translation.
    #[arg(long, allow_hyphen_values = true)]
    pub pose: String,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Vertex noise SD as a fraction of the template's largest dimension.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Silhouette file (`.json`, otherwise CSV). The pose goes to `<out>.gt.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub eps_xy: Option<f64>,
    #[arg(long)]
    pub eps_z: Option<f64>,
    #[arg(long)]
    pub eps_e: Option<f64>,
    #[arg(long)]
    pub eps_cap: Option<f64>,
    #[arg(long)]
    pub eps_h: Option<f64>,
    #[arg(long)]
    pub n_z: Option<usize>,
    #[arg(long)]
    pub lambda_c: Option<usize>,
    /// Pyramid levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Relative uncertainty of the perspective depth prior.
    #[arg(long)]
    pub depth_tolerance: Option<f64>,
    #[arg(long)]
    pub no_noise_compensation: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub pal: PathBuf,
    /// Aspect-ratio field; without it the search runs unaccelerated.
    #[arg(long)]
    pub pearl: Option<PathBuf>,
    /// Template the fields were computed from; sampled with the bundle's seed and count.
    #[arg(long)]
    pub mesh: String,
    #[arg(long)]
    pub silhouette: PathBuf,
    #[arg(long)]
    pub refine: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Ground-truth sidecar written by `render`.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Noise {
    None,
    Low,
    Med,
    High,
}

impl Noise {
    pub fn name(self) -> &'static str {
        match self {
            Noise::None => "none",
            Noise::Low => "low",
            Noise::Med => "med",
            Noise::High => "high",
        }
    }
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[command(flatten)]
    pub template: TemplateArgs,
    #[arg(long, default_value_t = 96)]
    pub grid: usize,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Precomputed fields; computed in-process when absent.
    #[arg(long, requires = "pearl")]
    pub pal: Option<PathBuf>,
    #[arg(long, requires = "pal")]
    pub pearl: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = Noise::None)]
    pub noise: Noise,
    /// Ground-truth depth relative to the prior (perspective only).
    #[arg(long, default_value_t = 1.0)]
    pub depth_scale: f64,
    #[arg(long)]
    pub no_refine: bool,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub trial: TrialArgs,
    /// Also count a trial as solved if any of the best K candidates refines to success.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblateParam {
    #[value(name = "eps_z")]
    EpsZ,
    #[value(name = "eps_cap")]
    EpsCap,
    Points,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub param: AblateParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub trial: TrialArgs,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
}
