use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use photostat::models::SurvivalVariant;
use photostat::units::Kelvin;
use photostat::TagFormat;

const AFTER_HELP: &str = "\
Relative --out paths are resolved against $PHOTOSTAT_OUT_DIR when it is set,
otherwise against the working directory. Input paths always resolve against
the working directory. Every run writes a manifest (`<stem>.manifest.json`
beside the output, or `manifest.json` inside a `reproduce` directory).

Exit status: 0 on success, 1 on a usage error, 2 when the computation fails;
failures print {\"error\": <kind>, \"message\": ...} as JSON on stderr.";

/// Photon-statistics pipelines: simulate detector clicks, correlate them,
/// fit the physical models and rerun the reference analyses.
#[derive(Debug, Parser)]
#[command(
    name = "photostat",
    version,
    after_long_help = AFTER_HELP,
    arg_required_else_help = true,
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a two-detector click stream from an emitter ensemble.
    Simulate(SimulateArgs),
    /// Histogram channel-1 minus channel-0 delays of a click stream.
    Correlate(CorrelateArgs),
    /// Fit a model to measured or simulated data.
    #[command(subcommand, arg_required_else_help = true)]
    Fit(FitCommand),
    /// Crystal-growth thermodynamics: supersaturation and morphology.
    #[command(subcommand, arg_required_else_help = true)]
    Thermo(ThermoCommand),
    /// Confocal scan images: render, detect spots, polarization series.
    #[command(subcommand, arg_required_else_help = true)]
    Scan(ScanCommand),
    /// Run one bundled end-to-end recipe into an output directory.
    Reproduce(ReproduceArgs),
}

/// Time-tag file encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Binary,
    Csv,
}

impl From<Format> for TagFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Binary => TagFormat::Binary,
            Format::Csv => TagFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Emitter ensemble JSON (molecules, excitation, detection, duration_s, seed).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output time-tag file.
    #[arg(long, value_name = "PATH", default_value = "stream.bin")]
    pub out: PathBuf,
    /// Output encoding [default: csv for a .csv --out, binary otherwise].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Master seed, overriding the one in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Input time-tag file.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Input encoding [default: csv for a .csv input, binary otherwise].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Histogram bin width, ps.
    #[arg(long, default_value_t = 106.9)]
    pub bin_ps: f64,
    /// Half-width of the symmetric delay window, ns.
    #[arg(long, default_value_t = 150.0)]
    pub window_ns: f64,
    /// Output histogram CSV; the JSON sidecar goes beside it.
    #[arg(long, value_name = "PATH", default_value = "hist.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum FitCommand {
    /// Pulsed g² peak train to a correlation histogram.
    G2(FitG2Args),
    /// Saturation curve R(I) to intensity,rate[,sigma] points.
    Saturation(FitSaturationArgs),
    /// cos² polarization response to angle_deg,signal points.
    Polarization(FitPolarizationArgs),
    /// Photobleaching survival to time_s,survivors points.
    Survival(FitSurvivalArgs),
}

#[derive(Debug, Args)]
pub struct FitG2Args {
    /// Correlation histogram CSV (with its JSON sidecar).
    #[arg(long, value_name = "PATH")]
    pub hist: PathBuf,
    /// Laser repetition period, ns.
    #[arg(long, default_value_t = 25.0)]
    pub pulse_ns: f64,
    /// Fit the repetition period as a fifth parameter.
    #[arg(long)]
    pub float_period: bool,
    /// Levenberg–Marquardt iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Output FitResult JSON.
    #[arg(long, value_name = "PATH", default_value = "fit-g2.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitSaturationArgs {
    /// CSV with a header row and columns intensity, rate and optional sigma.
    #[arg(long, value_name = "PATH")]
    pub points: PathBuf,
    /// Relative σ assumed for rows without a sigma column.
    #[arg(long, default_value_t = 0.02)]
    pub rel_sigma: f64,
    /// Levenberg–Marquardt iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Output FitResult JSON.
    #[arg(long, value_name = "PATH", default_value = "fit-saturation.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitPolarizationArgs {
    /// CSV with a header row and columns angle_deg, signal.
    #[arg(long, value_name = "PATH")]
    pub points: PathBuf,
    /// Levenberg–Marquardt iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Output FitResult JSON.
    #[arg(long, value_name = "PATH", default_value = "fit-polarization.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitSurvivalArgs {
    /// CSV with a header row and columns time_s, survivors.
    #[arg(long, value_name = "PATH")]
    pub curve: PathBuf,
    /// Model: single (N₀e^(−t/τ)) or biexp-const (N₁e^(−t/τ₁) + N₂e^(−t/τ₂) + C).
    #[arg(long, default_value = "single")]
    pub model: SurvivalVariant,
    /// Levenberg–Marquardt iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Output FitResult JSON.
    #[arg(long, value_name = "PATH", default_value = "fit-survival.json")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ThermoCommand {
    /// Supersaturation and predicted morphology at one bottom temperature.
    Report(ThermoReportArgs),
    /// CSV of Δμ and morphology over a range of bottom temperatures.
    Sweep(ThermoSweepArgs),
}

#[derive(Debug, Args)]
pub struct ThermoCommon {
    /// Top (growth-surface) temperature; suffix C or K, bare numbers are K.
    #[arg(long, default_value = "25C")]
    pub tt: Kelvin,
    /// Vapor-pressure correlation: a preset name or a JSON file.
    #[arg(long, default_value = "antoine-preset-1")]
    pub correlation: String,
    /// Substrate binding energy σ, meV/Å²; enables the morphology prediction.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ThermoReportArgs {
    /// Bottom (source) temperature; suffix C or K, bare numbers are K.
    #[arg(long)]
    pub tb: Kelvin,
    #[command(flatten)]
    pub common: ThermoCommon,
    /// Output report JSON.
    #[arg(long, value_name = "PATH", default_value = "thermo-report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThermoSweepArgs {
    /// Bottom temperatures START:STOP:STEP, both ends included.
    #[arg(long, default_value = "130C:260C:1C")]
    pub tb_range: String,
    #[command(flatten)]
    pub common: ThermoCommon,
    /// Output CSV.
    #[arg(long, value_name = "PATH", default_value = "thermo-sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ScanCommand {
    /// Render one scan image at a polarizer angle.
    Render(ScanRenderArgs),
    /// Detect and localize spots in an image.
    Detect(ScanDetectArgs),
    /// Render a polarizer series, extract per-spot responses and fit them.
    Polarize(ScanPolarizeArgs),
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Emitter layout JSON [default: random layout at --density].
    #[arg(long, value_name = "PATH")]
    pub layout: Option<PathBuf>,
    /// Emitters per µm² for the random layout.
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    /// Scan geometry JSON [default: 16×16 µm, 200×200 pixels, 400 nm PSF].
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for layout and shot noise, overriding the one in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScanRenderArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Polarizer angle, degrees, overriding the one in the config.
    #[arg(long)]
    pub polarizer_deg: Option<f64>,
    /// Write the noiseless expectation instead of a Poisson sample.
    #[arg(long)]
    pub expected: bool,
    /// Output image CSV; the geometry sidecar goes beside it.
    #[arg(long, value_name = "PATH", default_value = "image.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanDetectArgs {
    /// Image CSV; geometry comes from its sidecar unless --config is given.
    #[arg(long, value_name = "PATH")]
    pub image: PathBuf,
    /// Scan geometry JSON overriding the image sidecar.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Detection threshold in noise σ above the median background.
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    /// Output spot list JSON.
    #[arg(long, value_name = "PATH", default_value = "spots.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanPolarizeArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Polarizer angles START:STOP:STEP in degrees, STOP excluded.
    #[arg(long, default_value = "0:180:15")]
    pub angles: String,
    /// Detection threshold in noise σ above the median background.
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    /// Output series CSV; per-spot fits go to `<stem>.fits.json` beside it.
    #[arg(long, value_name = "PATH", default_value = "series.csv")]
    pub out: PathBuf,
}

/// Bundled end-to-end recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    /// g² pipeline: simulate, correlate, fit.
    Fig7,
    /// Saturation curve: synthetic points and fit.
    Fig8,
    /// Polarization survey over 12 crystals and its spread histogram.
    Fig6,
    /// Photobleaching survival of a uniform and a mixed population.
    Fig9,
    /// Surface-energy extraction and morphology sweeps for every preset.
    Sec2Thermo,
}

/// Emitters in the g² recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Single,
    Two,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Recipe to run.
    #[arg(value_enum)]
    pub recipe: Recipe,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory [default: the recipe name].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Time-tag encoding of the fig7 stream.
    #[arg(long, value_enum, default_value = "binary")]
    pub format: Format,
    /// fig7 acquisition length, s.
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    /// fig7 emitters: one molecule or the calibrated pair.
    #[arg(long, value_enum, default_value = "single")]
    pub scenario: Scenario,
}
