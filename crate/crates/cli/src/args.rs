use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "hsrecon",
    version,
    about = "Camera sensitivity estimation and RGB to hyperspectral reconstruction"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Floating-point width used by the networks.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,

    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Precision {
    #[value(name = "32")]
    F32,
    #[value(name = "64")]
    F64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Render an RGB image from a cube and a sensitivity.
    Render(RenderArgs),
    /// Write sensitivities drawn from the continuous family or a fixture camera.
    Sample(SampleArgs),
    /// Estimate the sensitivity behind an RGB image.
    Estimate(EstimateArgs),
    /// Predict which camera produced an RGB image.
    Classify(ClassifyArgs),
    /// Train a network on a generated dataset.
    Train(TrainArgs),
    /// Reconstruct a cube from an RGB image.
    Reconstruct(ReconstructArgs),
    /// Compare two cubes or images, or run the camera-count sweep.
    Eval(EvalArgs),
    /// Check backprop against finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate toy scenes and a dataset manifest.
    GenData(GenDataArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Render(_) => "render",
            Command::Sample(_) => "sample",
            Command::Estimate(_) => "estimate",
            Command::Classify(_) => "classify",
            Command::Train(_) => "train",
            Command::Reconstruct(_) => "reconstruct",
            Command::Eval(_) => "eval",
            Command::Gradcheck(_) => "gradcheck",
            Command::GenData(_) => "gen-data",
        }
    }
}

pub const SUBCOMMANDS: [&str; 9] = [
    "render",
    "sample",
    "estimate",
    "classify",
    "train",
    "reconstruct",
    "eval",
    "gradcheck",
    "gen-data",
];

pub const GLOBAL_FLAGS: [&str; 3] = ["seed", "threads", "precision"];

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("outputs").required(true).multiple(true).args(["out", "rgb_out"])))]
pub struct RenderArgs {
    /// Radiance cube (HSB).
    #[arg(long)]
    pub hsi: PathBuf,
    /// Sensitivity CSV on the cube's wavelength grid.
    #[arg(long)]
    pub sens: PathBuf,
    /// 8-bit PNG preview.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Gamma applied to the PNG preview only.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Exact RGB values as a 3-band HSB file.
    #[arg(long)]
    pub rgb_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// `.csv` for one sensitivity, `.json` for parameters and values of `--count` draws.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Write this fixture camera instead of a random draw.
    #[arg(long)]
    pub camera: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum EstimateMethod {
    Tikhonov,
    Network,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// RGB image as a 3-band HSB file.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimateMethod::Network)]
    pub method: EstimateMethod,
    /// Radiance cube of the image; required by the Tikhonov solver.
    #[arg(long)]
    pub hsi: Option<PathBuf>,
    /// Smoothness weight of the Tikhonov solver.
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    /// Estimator checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Sensitivity CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// JSON result; printed to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum NetKind {
    Estimator,
    Classifier,
    Reconstruction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModeArg {
    Generic,
    Conditional,
    Specialized,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: NetKind,
    /// Dataset directory holding `manifest.json` and the cubes.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Generic)]
    pub mode: ModeArg,
    /// Feature width (reconstruction) or width base (estimator, classifier).
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 32)]
    pub patch: usize,
    /// Estimator loss weights: image, label, smoothness.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 0.1, 0.01])]
    pub loss_weights: Vec<f64>,
    /// Continuous sensitivities drawn per estimator training patch.
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    /// Per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Camera table directories for discrete datasets (defaults to the bundled set).
    #[arg(long, value_delimiter = ',')]
    pub camera_dir: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    /// RGB image as a 3-band HSB file.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Generic)]
    pub mode: ModeArg,
    /// Reconstruction checkpoint (generic and conditional modes).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Sensitivity CSV, or `auto` to estimate it with `--estimator`.
    #[arg(long)]
    pub sens: Option<String>,
    #[arg(long)]
    pub estimator: Option<PathBuf>,
    /// Camera classifier (specialized mode).
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Specialized checkpoints in class order.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<PathBuf>,
    /// Average over the 8 flips and rotations.
    #[arg(long)]
    pub ensemble: bool,
    /// Output cube (HSB).
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth cube; prints the spectral RMSE when given.
    #[arg(long)]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("what").required(true).args(["gt", "sweep"])))]
pub struct EvalArgs {
    /// Ground-truth cube or 3-band image.
    #[arg(long, requires = "est")]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub est: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub data_range: f64,
    /// Run the camera-count sweep on toy data instead.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8])]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub scenes: usize,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    /// Feature width of the sweep's reconstruction networks.
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    /// Estimator checkpoint whose estimates condition the sweep's
    /// conditional model.
    #[arg(long, required_if_eq("sweep", "true"))]
    pub estimator: Option<PathBuf>,
    /// Report (JSON) or sweep table (CSV); printed when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Number of seeds; each runs every primitive and network case.
    #[arg(long, default_value_t = 4)]
    pub cases: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SourceArg {
    Continuous,
    Discrete,
    Single,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 6)]
    pub objects: usize,
    #[arg(long, value_enum, default_value_t = SourceArg::Continuous)]
    pub source: SourceArg,
    /// Camera used by the single source; a continuous draw when absent.
    #[arg(long)]
    pub camera: Option<usize>,
    /// Restrict the discrete source to the first N cameras.
    #[arg(long)]
    pub cameras: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub camera_dir: Vec<PathBuf>,
}
