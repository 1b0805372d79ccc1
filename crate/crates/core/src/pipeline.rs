//! The end-to-end reproduction experiment: classify an image, print and
//! measure a chart, characterize the press, separate the image and judge
//! the simulated reproduction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chart::{
    adapt_standard_chart, adapted_chart_new, gray_scale, standard_chart, AdaptationParams, ChartKind, TestChart,
};
use crate::classify::{
    band_masses, classify, lstar_histogram, BandMasses, CategoryBands, ClassifyPolicy, HistogramOptions, ImageCategory,
};
use crate::color::{Lab, LabImage};
use crate::error::{Error, Result};
use crate::evaluate::{
    delta_e_report, delta_e_report_where, shadow_detail_count, DeltaEReport, DEFAULT_SHADOW_BAND_MAX,
    DEFAULT_SHADOW_THRESHOLD,
};
use crate::press::{simulate_print, MeasurementNoise, MeasurementSet, MeasurementSource, PaperPreset, PressModel};
use crate::profile::{
    build_separation, fit_forward, separate_image, CmykImage, ResidualSummary, SeparationOptions, SeparationProfile,
};

pub const DEFAULT_SEED: u64 = 1983;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;
pub const SHADOW_RAMP_STEPS: usize = 21;

/// Mean training residual above which a characterization counts as failed.
pub const MAX_FIT_DELTA_E: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartMode {
    #[default]
    Standard,
    Adapted,
}

impl FromStr for ChartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "adapted" => Ok(Self::Adapted),
            other => Err(Error::InvalidArgument(format!("unknown chart mode `{other}`"))),
        }
    }
}

impl fmt::Display for ChartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Adapted => "adapted",
        })
    }
}

/// How an adapted chart is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptationMethod {
    #[default]
    New,
    Remap,
}

impl FromStr for AdaptationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" | "adapted-new" => Ok(Self::New),
            "remap" | "adapted-remap" => Ok(Self::Remap),
            other => Err(Error::InvalidArgument(format!("unknown adaptation method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preset: PaperPreset,
    pub mode: ChartMode,
    /// Chart category for the adapted mode; the image's own class if unset.
    pub category: Option<ImageCategory>,
    pub policy: ClassifyPolicy,
    pub method: AdaptationMethod,
    pub gamma: f64,
    pub separation: SeparationOptions,
    /// RMS ΔE of the simulated chart measurements; 0 turns noise off.
    pub noise_sigma: f64,
    pub seed: u64,
    pub shadow_threshold: f64,
    pub shadow_band_max: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preset: PaperPreset::Coated,
            mode: ChartMode::Standard,
            category: None,
            policy: ClassifyPolicy::MaxBandMass,
            method: AdaptationMethod::New,
            gamma: crate::chart::DEFAULT_GAMMA,
            separation: SeparationOptions::default(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed: DEFAULT_SEED,
            shadow_threshold: DEFAULT_SHADOW_THRESHOLD,
            shadow_band_max: DEFAULT_SHADOW_BAND_MAX,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.shadow_threshold > 0.0) {
            return Err(Error::InvalidArgument("shadow threshold must be positive".into()));
        }
        self.separation.validate()
    }

    pub fn noise(&self) -> Option<MeasurementNoise> {
        (self.noise_sigma > 0.0).then_some(MeasurementNoise {
            sigma: self.noise_sigma,
            seed: self.seed,
        })
    }

    /// The chart this configuration prints for an image of class `image_class`.
    pub fn chart(&self, image_class: ImageCategory) -> Result<TestChart> {
        let params = AdaptationParams::with_gamma(self.gamma);
        let category = self.category.unwrap_or(image_class);
        match (self.mode, self.method) {
            (ChartMode::Standard, _) => Ok(standard_chart()),
            (ChartMode::Adapted, AdaptationMethod::New) => adapted_chart_new(category, &params),
            (ChartMode::Adapted, AdaptationMethod::Remap) => adapt_standard_chart(&standard_chart(), category, &params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRamp {
    /// Target L* of each step, dark to light.
    pub target: Vec<f64>,
    /// L* as printed, dark to light.
    pub printed: Vec<f64>,
    pub detail_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: ChartMode,
    pub chart: ChartKind,
    pub preset: PaperPreset,
    pub forward: ResidualSummary,
    pub in_gamut_nodes: f64,
    pub delta_e: DeltaEReport,
    /// Over pixels whose original L* is below 40.
    pub delta_e_dark: Option<DeltaEReport>,
    /// Over pixels whose original L* is above 60.
    pub delta_e_light: Option<DeltaEReport>,
    pub shadow_ramp: ShadowRamp,
}

impl RunReport {
    /// Reasons the run counts as a failed reproduction; empty when fine.
    pub fn quality_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.forward.mean_delta_e <= MAX_FIT_DELTA_E) {
            out.push(format!(
                "forward fit mean residual {:.3} exceeds {MAX_FIT_DELTA_E}",
                self.forward.mean_delta_e
            ));
        }
        if self.in_gamut_nodes == 0.0 {
            out.push("no separation node is in gamut".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub width: usize,
    pub height: usize,
    pub category: ImageCategory,
    pub masses: BandMasses,
    pub seed: u64,
    pub runs: Vec<RunReport>,
    /// Adapted minus standard, when both modes ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub shadow_detail_gain: i64,
    pub dark_delta_e_change: Option<f64>,
    pub light_delta_e_change: Option<f64>,
    pub mean_delta_e_change: f64,
}

impl PipelineReport {
    pub fn quality_failures(&self) -> Vec<String> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.quality_failures()
                    .into_iter()
                    .map(move |f| format!("{}: {f}", r.mode))
            })
            .collect()
    }

    pub fn run(&self, mode: ChartMode) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub chart: TestChart,
    pub measurements: MeasurementSet,
    pub profile: SeparationProfile,
    pub separated: CmykImage,
    pub reproduction: LabImage,
}

pub fn classify_image(img: &LabImage, policy: ClassifyPolicy) -> Result<(ImageCategory, BandMasses)> {
    let h = lstar_histogram(img, HistogramOptions::default())?;
    let bands = CategoryBands::default();
    Ok((classify(&h, &bands, policy)?, band_masses(&h, &bands)?))
}

/// K coverage range of the shadow gray scale.
pub const SHADOW_RAMP_K: (f64, f64) = (0.6, 1.0);

/// The shadow gray scale as it looks when printed with black ink alone on
/// `press`, light to dark. These are the targets handed to each profile.
pub fn shadow_ramp_targets(press: &PressModel) -> Result<Vec<Lab>> {
    let chart = gray_scale(SHADOW_RAMP_STEPS, SHADOW_RAMP_K.0, SHADOW_RAMP_K.1)?;
    let pred = press.predictor();
    Ok(chart.patches.iter().map(|p| pred.predict(&p.coverage)).collect())
}

/// Separates the gray scale `chart` (as printed with black alone on `press`)
/// through `profile`, prints the result on `press` and counts the
/// distinguishable dark steps. Measurement ids are the chart's patch ids.
pub fn print_gray_scale(
    chart: &TestChart,
    profile: &SeparationProfile,
    press: &PressModel,
    threshold: f64,
    band_max: f64,
) -> Result<(ShadowRamp, MeasurementSet)> {
    let pred = press.predictor();
    let targets: Vec<Lab> = chart.patches.iter().map(|p| pred.predict(&p.coverage)).collect();
    let img = LabImage::new(targets.len(), 1, targets.clone())?;
    let printed = separate_image(&img, profile).render(&pred);
    let mut meas = MeasurementSet::new(MeasurementSource::Simulated(press.name.clone()));
    for (p, lab) in chart.patches.iter().zip(printed.pixels()) {
        meas.insert(p.id.clone(), *lab)?;
    }
    // dark to light
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&i, &j| targets[i].l.total_cmp(&targets[j].l));
    let ids: Vec<String> = order.iter().map(|&i| chart.patches[i].id.clone()).collect();
    let detail_count = shadow_detail_count(&meas, &ids, threshold, band_max)?;
    let ramp = ShadowRamp {
        target: order.iter().map(|&i| targets[i].l).collect(),
        printed: order.iter().map(|&i| printed.pixels()[i].l).collect(),
        detail_count,
    };
    Ok((ramp, meas))
}

fn print_shadow_ramp(profile: &SeparationProfile, cfg: &PipelineConfig) -> Result<ShadowRamp> {
    let chart = gray_scale(SHADOW_RAMP_STEPS, SHADOW_RAMP_K.0, SHADOW_RAMP_K.1)?;
    let press = cfg.preset.model();
    Ok(print_gray_scale(&chart, profile, &press, cfg.shadow_threshold, cfg.shadow_band_max)?.0)
}

/// One full run in the configured mode.
pub fn run_once(img: &LabImage, image_class: ImageCategory, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let chart = cfg.chart(image_class)?;
    let press = cfg.preset.model();
    let measurements = simulate_print(&chart, &press, cfg.noise())?;
    let fwd = fit_forward(&measurements, &chart, None)?;
    let profile = build_separation(&fwd, &cfg.separation)?;
    let separated = separate_image(img, &profile);
    let reproduction = separated.render(&press.predictor());
    let dark = |lab: Lab| lab.l < 40.0;
    let light = |lab: Lab| lab.l > 60.0;
    let report = RunReport {
        mode: cfg.mode,
        chart: chart.kind,
        preset: cfg.preset,
        forward: fwd.summary(),
        in_gamut_nodes: profile.in_gamut_fraction(),
        delta_e: delta_e_report(img, &reproduction)?,
        delta_e_dark: delta_e_report_where(img, &reproduction, dark).ok(),
        delta_e_light: delta_e_report_where(img, &reproduction, light).ok(),
        shadow_ramp: print_shadow_ramp(&profile, cfg)?,
    };
    Ok(RunOutput {
        report,
        chart,
        measurements,
        profile,
        separated,
        reproduction,
    })
}

/// Runs the given modes on one image and compares them when both ran.
pub fn run_pipeline(img: &LabImage, cfg: &PipelineConfig, modes: &[ChartMode]) -> Result<PipelineReport> {
    Ok(run_pipeline_outputs(img, cfg, modes)?.0)
}

/// [`run_pipeline`], also returning every run's intermediate products.
pub fn run_pipeline_outputs(
    img: &LabImage,
    cfg: &PipelineConfig,
    modes: &[ChartMode],
) -> Result<(PipelineReport, Vec<RunOutput>)> {
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no pipeline mode selected".into()));
    }
    let (category, masses) = classify_image(img, cfg.policy)?;
    let outputs = modes
        .iter()
        .map(|&mode| run_once(img, category, &PipelineConfig { mode, ..cfg.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let mut report = PipelineReport {
        width: img.width(),
        height: img.height(),
        category,
        masses,
        seed: cfg.seed,
        runs: outputs.iter().map(|o| o.report.clone()).collect(),
        comparison: None,
    };
    if let (Some(s), Some(a)) = (report.run(ChartMode::Standard), report.run(ChartMode::Adapted)) {
        let change = |x: Option<DeltaEReport>, y: Option<DeltaEReport>| Some(y?.mean - x?.mean);
        report.comparison = Some(Comparison {
            shadow_detail_gain: a.shadow_ramp.detail_count as i64 - s.shadow_ramp.detail_count as i64,
            dark_delta_e_change: change(s.delta_e_dark, a.delta_e_dark),
            light_delta_e_change: change(s.delta_e_light, a.delta_e_light),
            mean_delta_e_change: a.delta_e.mean - s.delta_e.mean,
        });
    }
    Ok((report, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> PipelineConfig {
        PipelineConfig {
            separation: SeparationOptions {
                grid_size: 5,
                ..SeparationOptions::default()
            },
            ..PipelineConfig::default()
        }
    }

    fn dark_image() -> LabImage {
        let px = (0..48)
            .map(|i| Lab::new(5.0 + (i % 30) as f64, (i % 7) as f64 - 3.0, 2.0))
            .collect();
        LabImage::new(8, 6, px).unwrap()
    }

    #[test]
    fn ramp_targets_are_a_black_ink_scale() {
        let press = PaperPreset::Coated.model();
        let t = shadow_ramp_targets(&press).unwrap();
        assert_eq!(t.len(), SHADOW_RAMP_STEPS);
        assert_eq!(t[20], press.primary_lab(crate::press::primary_index("K").unwrap()));
        assert!(t.windows(2).all(|w| w[1].l < w[0].l));
    }

    #[test]
    fn both_modes_are_reported() {
        let r = run_pipeline(&dark_image(), &quick(), &[ChartMode::Standard, ChartMode::Adapted]).unwrap();
        assert_eq!(r.category, ImageCategory::LowKey);
        assert_eq!(r.runs.len(), 2);
        assert_eq!(
            r.run(ChartMode::Adapted).unwrap().chart,
            ChartKind::AdaptedNew(ImageCategory::LowKey)
        );
        assert!(r.comparison.is_some());
        assert!(r.quality_failures().is_empty());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("shadow_ramp") && json.contains("detail_count"));
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_pipeline(&dark_image(), &quick(), &[ChartMode::Adapted]).unwrap();
        let b = run_pipeline(&dark_image(), &quick(), &[ChartMode::Adapted]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn category_override_and_remap() {
        let cfg = PipelineConfig {
            mode: ChartMode::Adapted,
            category: Some(ImageCategory::HighKey),
            method: AdaptationMethod::Remap,
            ..quick()
        };
        assert_eq!(
            cfg.chart(ImageCategory::LowKey).unwrap().kind,
            ChartKind::AdaptedRemap(ImageCategory::HighKey)
        );
    }

    #[test]
    fn config_is_validated() {
        assert!(PipelineConfig { gamma: 0.0, ..quick() }.validate().is_err());
        assert!(PipelineConfig {
            noise_sigma: -1.0,
            ..quick()
        }
        .validate()
        .is_err());
        assert!(run_pipeline(&dark_image(), &quick(), &[]).is_err());
        assert_eq!("adapted".parse::<ChartMode>().unwrap(), ChartMode::Adapted);
        assert!("other".parse::<ChartMode>().is_err());
    }
}
