use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use solarwind_core::sfno::SpectralKind;

#[derive(Debug, Parser, Serialize)]
#[command(name = "swsfno", version, about = "Solar-wind SFNO surrogate and HUX baseline toolkit")]
pub struct Cli {
    /// Append the resolved configuration of every run to this file.
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic dataset (cubes, sidecars, manifest).
    Synth(SynthArgs),
    /// Propagate a boundary with HUX-f or invert an outer slice with HUX-b.
    Hux(HuxArgs),
    /// Train an SFNO on the train split of a manifest.
    Train(TrainArgs),
    /// K-fold grid search over depth and width.
    Cv(CvArgs),
    /// Score SFNO and HUX-f against ground truth.
    Eval(EvalArgs),
    /// Time and memory of one SFNO inference and one HUX-f run.
    Bench(BenchArgs),
    /// Write one radial slice as a PGM or PPM image.
    Render(RenderArgs),
}

#[derive(Debug, clap::Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[arg(long, default_value_t = 20)]
    pub nr: usize,
    #[arg(long, default_value_t = 24)]
    pub nlat: usize,
    #[arg(long, default_value_t = 48)]
    pub nlon: usize,
    /// Highest spherical-harmonic degree of the random boundaries.
    #[arg(long, default_value_t = 8)]
    pub l_band: usize,
    /// Extra polar acceleration of the synthetic truth.
    #[arg(long, default_value_t = 0.3)]
    pub polar_alpha: f64,
    /// Longitudinal shear (radians at the outer pole) of the synthetic truth.
    #[arg(long, default_value_t = 0.3)]
    pub shear: f64,
    /// Cubes assigned to the test split, taken from the end. Defaults to a
    /// quarter of --count.
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HuxMode {
    F,
    B,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct HuxArgs {
    /// Input cube. Mode f propagates its first slice, mode b inverts its last.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = HuxMode::F)]
    pub mode: HuxMode,
    #[arg(long, default_value_t = 0.15)]
    pub alpha: f64,
    #[arg(long, default_value_t = 50.0)]
    pub r_h: f64,
    /// Replace the cube's radial grid with a uniform 30..236 R☉ grid of this
    /// many points.
    #[arg(long)]
    pub nr: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spectral {
    Zonal,
    Complex,
}

impl From<Spectral> for SpectralKind {
    fn from(s: Spectral) -> Self {
        match s {
            Spectral::Zonal => SpectralKind::Zonal,
            Spectral::Complex => SpectralKind::Complex,
        }
    }
}

/// Options shared by `train` and `cv`.
#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct ModelArgs {
    /// Highest degree kept by the spectral layers. Defaults to n_lat - 1.
    #[arg(long)]
    pub l_max: Option<usize>,
    /// Highest order kept by the spectral layers. Defaults to n_lon / 2.
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long, value_enum, default_value_t = Spectral::Complex)]
    pub spectral: Spectral,
    #[arg(long, default_value_t = 2)]
    pub mlp_ratio: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 8e-4)]
    pub lr: f64,
    /// Seeds both initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Held-out fraction of the train split. Defaults to 0.1.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-curve CSV. Defaults to the checkpoint path with a .csv extension.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct CvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
    pub layers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256])]
    pub channels: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CV table CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// SFNO checkpoint used to predict every cube of the split.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub ckpt: Option<PathBuf>,
    /// Manifest of precomputed predictions, matched by order to the split.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Defaults to `<report stem>_per_radius.csv`.
    #[arg(long)]
    pub per_radius: Option<PathBuf>,
    /// Defaults to `<report stem>_histogram.csv`.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 90.0)]
    pub edge_percentile: f64,
    /// HUX-f acceleration amplitude.
    #[arg(long, default_value_t = 0.15)]
    pub alpha: f64,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Cube whose first slice is the boundary.
    #[arg(long)]
    pub boundary: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Pgm,
    Ppm,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub radius_index: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the output extension, else PGM.
    #[arg(long, value_enum)]
    pub format: Option<ImageFormat>,
}
