//! Argument parsing and the subcommands.
//!
//! Every command exits 0 on success, 1 when the run completed but its
//! quality checks failed, and 2 on bad input of any kind.

use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use keytone::cgats::{read_chart, read_measurements, write_chart, write_measurements};
use keytone::chart::{
    adapt_standard_chart, adapted_chart_new, gray_scale, standard_chart, AdaptationParams, TestChart, DEFAULT_GAMMA,
    DEFAULT_STEPS_PER_RAMP,
};
use keytone::classify::{
    band_masses, classify, lstar_histogram, BandMasses, CategoryBands, ClassifyPolicy, HistogramOptions, ImageCategory,
};
use keytone::evaluate::{
    bradley_terry, parse_judgments, read_judgments, score_points, RankingResult, DEFAULT_BT_MAX_ITER,
    DEFAULT_BT_TOLERANCE, DEFAULT_SHADOW_BAND_MAX, DEFAULT_SHADOW_THRESHOLD,
};
use keytone::imageio::{read_lab_image, write_pam_cmyk, write_ppm, RgbImage};
use keytone::pipeline::{
    print_gray_scale, run_pipeline_outputs, AdaptationMethod, ChartMode, PipelineConfig, ShadowRamp, DEFAULT_SEED,
    MAX_FIT_DELTA_E, SHADOW_RAMP_K, SHADOW_RAMP_STEPS,
};
use keytone::press::{simulate_print, MeasurementNoise, PaperPreset, PressModel};
use keytone::profile::{
    build_separation, fit_forward, separate_image, ResidualSummary, SeparationOptions, SeparationProfile,
};

use crate::server;
use crate::session::SessionSpec;

pub const EXIT_QUALITY: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "keytone",
    version,
    about = "Image-category adapted test charts, press characterization and CMYK separation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify an image as high-, normal- or low-key from its L* histogram.
    Classify(ClassifyArgs),
    /// Generate a test chart as CGATS.
    Chart(ChartArgs),
    /// Print a chart on a simulated press and write the measurements.
    Simulate(SimulateArgs),
    /// Fit a press model to chart measurements.
    Fit(FitArgs),
    /// Build a separation profile and separate an image to CMYK.
    Separate(SeparateArgs),
    /// Run the full standard-versus-adapted reproduction experiment.
    Pipeline(PipelineArgs),
    /// Generate a gray scale, or print one through a profile and count dark steps.
    Grayscale(GrayscaleArgs),
    /// Score pair-comparison judgments.
    Score(ScoreArgs),
    /// Serve the pair-comparison session over HTTP.
    Serve(ServeArgs),
}

/// Outcome of a command that did not fail outright.
#[derive(Debug, PartialEq)]
pub enum Status {
    Ok,
    Quality(Vec<String>),
}

impl Status {
    fn from_failures(failures: Vec<String>) -> Self {
        if failures.is_empty() {
            Self::Ok
        } else {
            Self::Quality(failures)
        }
    }
}

pub fn main(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Quality(reasons)) => {
            for r in reasons {
                eprintln!("quality check failed: {r}");
            }
            ExitCode::from(EXIT_QUALITY)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Classify(a) => cmd_classify(a),
        Command::Chart(a) => cmd_chart(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Separate(a) => cmd_separate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Grayscale(a) => cmd_grayscale(a),
        Command::Score(a) => cmd_score(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Writes `text` to `path`, or to stdout when no path (or `-`) is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Args)]
pub struct PressArgs {
    /// Simulated paper preset: coated or uncoated.
    #[arg(long, default_value = "coated", conflicts_with = "model")]
    pub preset: PaperPreset,
    /// Press model file (TOML) instead of a preset.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl PressArgs {
    fn load(&self) -> Result<PressModel> {
        match &self.model {
            Some(path) => PressModel::load(path).with_context(|| format!("loading press model {}", path.display())),
            None => Ok(self.preset.model()),
        }
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// 8-bit binary PPM (P6) or PGM (P5).
    pub image: PathBuf,
    /// max-band-mass or mean-l.
    #[arg(long, default_value = "max-band-mass")]
    pub policy: ClassifyPolicy,
    /// Leave near-white background pixels out of the histogram.
    #[arg(long)]
    pub exclude_background: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct ClassifyReport {
    category: ImageCategory,
    masses: BandMasses,
    mean_l: f64,
    policy: ClassifyPolicy,
    pixels: u64,
}

fn cmd_classify(a: ClassifyArgs) -> Result<Status> {
    let img = read_lab_image(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let opts = HistogramOptions {
        exclude_background: a.exclude_background,
        ..HistogramOptions::default()
    };
    let h = lstar_histogram(&img, opts)?;
    let bands = CategoryBands::default();
    let report = ClassifyReport {
        category: classify(&h, &bands, a.policy)?,
        masses: band_masses(&h, &bands)?,
        mean_l: h.mean()?,
        policy: a.policy,
        pixels: h.total(),
    };
    if a.json {
        emit(None, &json(&report)?)?;
    } else {
        let m = report.masses;
        emit(
            None,
            &format!(
                "{}\nhigh-key {:.4}  normal-key {:.4}  low-key {:.4}  mean L* {:.2}\n",
                report.category, m.high, m.normal, m.low, report.mean_l
            ),
        )?;
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChartKindArg {
    Standard,
    AdaptedNew,
    AdaptedRemap,
    GrayScale,
}

#[derive(Debug, Args)]
pub struct GrayScaleRange {
    /// Number of gray-scale steps.
    #[arg(long, default_value_t = SHADOW_RAMP_STEPS)]
    pub n: usize,
    #[arg(long, default_value_t = SHADOW_RAMP_K.0)]
    pub k_min: f64,
    #[arg(long, default_value_t = SHADOW_RAMP_K.1)]
    pub k_max: f64,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    pub kind: ChartKindArg,
    /// Image category of an adapted chart.
    pub category: Option<ImageCategory>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Steps of each single-ink ramp.
    #[arg(long, default_value_t = DEFAULT_STEPS_PER_RAMP)]
    pub steps: usize,
    #[command(flatten)]
    pub gray: GrayScaleRange,
    /// Output CGATS file; stdout if omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn build_chart(a: &ChartArgs) -> Result<TestChart> {
    let params = AdaptationParams {
        gamma: a.gamma,
        steps_per_ramp: a.steps,
    };
    params.validate()?;
    let category = || {
        a.category
            .context("adapted charts need a category (high-key, normal-key or low-key)")
    };
    Ok(match a.kind {
        ChartKindArg::Standard => standard_chart(),
        ChartKindArg::AdaptedNew => adapted_chart_new(category()?, &params)?,
        ChartKindArg::AdaptedRemap => adapt_standard_chart(&standard_chart(), category()?, &params)?,
        ChartKindArg::GrayScale => gray_scale(a.gray.n, a.gray.k_min, a.gray.k_max)?,
    })
}

fn cmd_chart(a: ChartArgs) -> Result<Status> {
    let chart = build_chart(&a)?;
    emit(a.out.as_deref(), &keytone::cgats::chart_to_cgats(&chart))?;
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Chart to print (CGATS).
    #[arg(long)]
    pub chart: PathBuf,
    #[command(flatten)]
    pub press: PressArgs,
    /// RMS ΔE of measurement noise; 0 is noise-free.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, env = "KEYTONE_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output measurement CGATS; stdout if omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn cmd_simulate(a: SimulateArgs) -> Result<Status> {
    let chart = read_chart(&a.chart).with_context(|| format!("reading chart {}", a.chart.display()))?;
    let press = a.press.load()?;
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        bail!("noise must be a finite value >= 0");
    }
    let noise = (a.noise > 0.0).then_some(MeasurementNoise {
        sigma: a.noise,
        seed: a.seed,
    });
    let meas = simulate_print(&chart, &press, noise)?;
    emit(a.out.as_deref(), &keytone::cgats::measurements_to_cgats(&meas))?;
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Chart that was printed (CGATS).
    #[arg(long)]
    pub chart: PathBuf,
    /// Measurements of that chart (CGATS with LAB_L, LAB_A, LAB_B).
    #[arg(long)]
    pub measurements: PathBuf,
    /// Fix the Yule–Nielsen n instead of searching for it.
    #[arg(long)]
    pub n: Option<f64>,
    /// Name recorded in the model file.
    #[arg(long)]
    pub name: Option<String>,
    /// Output press model (TOML).
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct PatchResidual {
    id: String,
    delta_e: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    #[serde(flatten)]
    summary: ResidualSummary,
    worst: Vec<PatchResidual>,
}

fn cmd_fit(a: FitArgs) -> Result<Status> {
    let chart = read_chart(&a.chart).with_context(|| format!("reading chart {}", a.chart.display()))?;
    let meas = read_measurements(&a.measurements).with_context(|| format!("reading {}", a.measurements.display()))?;
    let mut fwd = fit_forward(&meas, &chart, a.n)?;
    if let Some(name) = a.name {
        fwd.model.name = name;
    }
    fwd.model.save(&a.out)?;
    let mut worst: Vec<PatchResidual> = fwd
        .residuals
        .iter()
        .map(|(id, &delta_e)| PatchResidual {
            id: id.clone(),
            delta_e,
        })
        .collect();
    worst.sort_by(|x, y| y.delta_e.total_cmp(&x.delta_e));
    worst.truncate(5);
    emit(
        None,
        &json(&FitReport {
            summary: fwd.summary(),
            worst,
        })?,
    )?;
    let mut failures = Vec::new();
    if !(fwd.mean_delta_e <= MAX_FIT_DELTA_E) {
        failures.push(format!(
            "mean residual {:.3} exceeds {MAX_FIT_DELTA_E}",
            fwd.mean_delta_e
        ));
    }
    Ok(Status::from_failures(failures))
}

#[derive(Debug, Args)]
pub struct SeparationArgs {
    #[arg(long, default_value_t = SeparationOptions::default().gcr_strength)]
    pub gcr: f64,
    /// L* below which black may replace gray.
    #[arg(long, default_value_t = SeparationOptions::default().black_start)]
    pub black_start: f64,
    #[arg(long, default_value_t = SeparationOptions::default().total_ink_limit)]
    pub ink_limit: f64,
    /// LUT nodes per axis.
    #[arg(long, default_value_t = SeparationOptions::default().grid_size)]
    pub grid: usize,
}

impl SeparationArgs {
    fn options(&self) -> SeparationOptions {
        SeparationOptions {
            gcr_strength: self.gcr,
            black_start: self.black_start,
            total_ink_limit: self.ink_limit,
            grid_size: self.grid,
        }
    }
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Existing separation profile (JSON).
    #[arg(long, conflicts_with_all = ["chart", "measurements"])]
    pub profile: Option<PathBuf>,
    /// Chart to characterize from, with --measurements.
    #[arg(long, requires = "measurements")]
    pub chart: Option<PathBuf>,
    #[arg(long, requires = "chart")]
    pub measurements: Option<PathBuf>,
    #[command(flatten)]
    pub separation: SeparationArgs,
    /// Write the profile built from --chart/--measurements here.
    #[arg(long)]
    pub save_profile: Option<PathBuf>,
    /// Image to separate (PPM/PGM).
    #[arg(long, requires = "out")]
    pub image: Option<PathBuf>,
    /// Output CMYK raster (PAM).
    #[arg(short, long, requires = "image")]
    pub out: Option<PathBuf>,
    /// Also write a simulated print of the separation (PPM).
    #[arg(long, requires = "image")]
    pub proof: Option<PathBuf>,
    #[command(flatten)]
    pub press: PressArgs,
}

#[derive(Debug, Serialize)]
struct SeparateReport {
    grid_size: usize,
    in_gamut_nodes: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    forward: Option<ResidualSummary>,
}

fn cmd_separate(a: SeparateArgs) -> Result<Status> {
    let (profile, forward) = match (&a.profile, &a.chart, &a.measurements) {
        (Some(path), _, _) => (
            SeparationProfile::load(path).with_context(|| format!("loading profile {}", path.display()))?,
            None,
        ),
        (None, Some(chart), Some(meas)) => {
            let chart = read_chart(chart).with_context(|| format!("reading chart {}", chart.display()))?;
            let meas = read_measurements(meas).with_context(|| format!("reading {}", meas.display()))?;
            let fwd = fit_forward(&meas, &chart, None)?;
            (build_separation(&fwd, &a.separation.options())?, Some(fwd.summary()))
        }
        _ => bail!("give either --profile or both --chart and --measurements"),
    };
    if a.save_profile.is_none() && a.image.is_none() {
        bail!("nothing to do: give --image/--out or --save-profile");
    }
    if let Some(path) = &a.save_profile {
        profile.save(path)?;
    }
    if let (Some(image), Some(out)) = (&a.image, &a.out) {
        let img = read_lab_image(image).with_context(|| format!("reading {}", image.display()))?;
        let cmyk = separate_image(&img, &profile);
        write_pam_cmyk(out, &cmyk)?;
        if let Some(proof) = &a.proof {
            let press = a.press.load()?;
            write_ppm(proof, &RgbImage::from_lab(&cmyk.render(&press.predictor())))?;
        }
    }
    let report = SeparateReport {
        grid_size: profile.grid_size(),
        in_gamut_nodes: profile.in_gamut_fraction(),
        forward,
    };
    emit(None, &json(&report)?)?;
    let mut failures = Vec::new();
    if report.in_gamut_nodes == 0.0 {
        failures.push("no separation node is in gamut".into());
    }
    if let Some(f) = report.forward.filter(|f| !(f.mean_delta_e <= MAX_FIT_DELTA_E)) {
        failures.push(format!(
            "forward fit mean residual {:.3} exceeds {MAX_FIT_DELTA_E}",
            f.mean_delta_e
        ));
    }
    Ok(Status::from_failures(failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Standard,
    Adapted,
    Both,
}

impl ModeArg {
    fn modes(self) -> &'static [ChartMode] {
        match self {
            Self::Standard => &[ChartMode::Standard],
            Self::Adapted => &[ChartMode::Adapted],
            Self::Both => &[ChartMode::Standard, ChartMode::Adapted],
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Image to reproduce (PPM/PGM).
    pub image: PathBuf,
    /// Pipeline configuration (TOML); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// coated or uncoated.
    #[arg(long)]
    pub preset: Option<PaperPreset>,
    /// Chart category for the adapted run; the image's own class by default.
    #[arg(long)]
    pub category: Option<ImageCategory>,
    /// new or remap.
    #[arg(long)]
    pub method: Option<AdaptationMethod>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// LUT nodes per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// RMS ΔE of the chart measurement noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, env = "KEYTONE_SEED")]
    pub seed: Option<u64>,
    /// max-band-mass or mean-l.
    #[arg(long)]
    pub policy: Option<ClassifyPolicy>,
    /// Report output (JSON); stdout if omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Directory for each run's chart, measurements, profile, CMYK raster and proof.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
}

pub fn load_pipeline_config(a: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.preset {
        cfg.preset = v;
    }
    if a.category.is_some() {
        cfg.category = a.category;
    }
    if let Some(v) = a.method {
        cfg.method = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.grid {
        cfg.separation.grid_size = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.policy {
        cfg.policy = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_pipeline(a: PipelineArgs) -> Result<Status> {
    let cfg = load_pipeline_config(&a)?;
    let img = read_lab_image(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let (report, outputs) = run_pipeline_outputs(&img, &cfg, a.mode.modes())?;
    let text = json(&report)?;
    if let Some(dir) = &a.artifacts {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for o in &outputs {
            let mode = o.report.mode;
            write_chart(&dir.join(format!("{mode}-chart.cgats")), &o.chart)?;
            write_measurements(&dir.join(format!("{mode}-measurements.cgats")), &o.measurements)?;
            o.profile.save(&dir.join(format!("{mode}-profile.json")))?;
            write_pam_cmyk(&dir.join(format!("{mode}-cmyk.pam")), &o.separated)?;
            write_ppm(
                &dir.join(format!("{mode}-proof.ppm")),
                &RgbImage::from_lab(&o.reproduction),
            )?;
        }
        std::fs::write(dir.join("report.json"), &text)?;
    }
    emit(a.out.as_deref(), &text)?;
    Ok(Status::from_failures(report.quality_failures()))
}

#[derive(Debug, Args)]
pub struct GrayscaleArgs {
    #[command(flatten)]
    pub range: GrayScaleRange,
    /// Separate the gray scale through this profile and print it.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    pub press: PressArgs,
    /// Smallest ΔL* that counts as a visible step.
    #[arg(long, default_value_t = DEFAULT_SHADOW_THRESHOLD)]
    pub threshold: f64,
    /// Only steps at or below this L* are counted.
    #[arg(long, default_value_t = DEFAULT_SHADOW_BAND_MAX)]
    pub band_max: f64,
    /// Output CGATS: the chart, or with --profile the printed measurements.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn cmd_grayscale(a: GrayscaleArgs) -> Result<Status> {
    let chart = gray_scale(a.range.n, a.range.k_min, a.range.k_max)?;
    let Some(path) = &a.profile else {
        emit(a.out.as_deref(), &keytone::cgats::chart_to_cgats(&chart))?;
        return Ok(Status::Ok);
    };
    if !(a.threshold > 0.0) {
        bail!("threshold must be positive");
    }
    let profile = SeparationProfile::load(path).with_context(|| format!("loading profile {}", path.display()))?;
    let press = a.press.load()?;
    let (ramp, meas): (ShadowRamp, _) = print_gray_scale(&chart, &profile, &press, a.threshold, a.band_max)?;
    if let Some(out) = &a.out {
        write_measurements(out, &meas)?;
    }
    emit(None, &json(&ramp)?)?;
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSON-lines judgments; `-` reads stdin.
    pub judgments: PathBuf,
    /// Skip the Bradley–Terry fit.
    #[arg(long)]
    pub points_only: bool,
    #[arg(long, default_value_t = DEFAULT_BT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_BT_TOLERANCE)]
    pub tol: f64,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

fn cmd_score(a: ScoreArgs) -> Result<Status> {
    let judgments = if a.judgments == Path::new("-") {
        parse_judgments(BufReader::new(io::stdin().lock()))?
    } else {
        read_judgments(&a.judgments).with_context(|| format!("reading {}", a.judgments.display()))?
    };
    let result: RankingResult = if a.points_only {
        score_points(&judgments)?
    } else {
        bradley_terry(&judgments, a.max_iter, a.tol)?
    };
    emit(None, &if a.json { json(&result)? } else { result.to_table() })?;
    Ok(Status::Ok)
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session description (TOML).
    #[arg(long)]
    pub session: PathBuf,
    /// JSON-lines file judgments are appended to.
    #[arg(long, default_value = "judgments.jsonl")]
    pub judgments: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of UI assets served at `/`.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

fn cmd_serve(a: ServeArgs) -> Result<Status> {
    let session = SessionSpec::load(&a.session)?;
    let state = server::AppState::open(session, &a.judgments, a.assets)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(state, &a.host, a.port))?;
    Ok(Status::Ok)
}
