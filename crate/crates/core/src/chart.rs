//! Printer test charts: the standard 24 × 18 layout, the two kinds of
//! category-adapted charts, and gray scales.
//!
//! # Standard layout
//!
//! Patches are numbered row-major, `index = row * 24 + col`, with ids
//! `R{row}C{col}`.
//!
//! * Rows 0–15 and any row-16 slots not used by ramps hold a factorial CMYK
//!   lattice: C and M in `{0, .2, .4, .6, .8, 1}`, Y in `{0, .5, 1}` and K in
//!   `{0, .33, .67, 1}`. Lattice point `j` has cyan varying fastest, then
//!   magenta, yellow and black, so `R0C0` is unprinted paper. The lattice has
//!   432 points and only the first `432 - 24 - 3·s` are placed; the omitted
//!   tail is all solid black with yellow, which adds little.
//! * Row 16 starts with single-ink ramps of cyan, magenta and yellow, `s`
//!   steps each (`s = steps_per_ramp`, default 8) at coverages `i / s`,
//!   `i = 1..=s`.
//! * Row 17 is a 24-step black ramp at `i / 24`, `i = 1..=24`.
//!
//! All coverages are rounded to 0.01 % so a chart survives the CGATS text
//! form unchanged.
//!
//! # Adaptation
//!
//! [`remap_steps`] bends a uniform step sequence so that steps crowd into the
//! tonal range of an image category. A remapped standard chart applies it to
//! every patch ([`adapt_standard_chart`]); a new adapted chart applies it to
//! the layout's step values and then moves mixed-ink patches into the
//! category's lightness band until at least half the chart predicts inside
//! it ([`adapted_chart_new`]).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classify::{CategoryBands, ImageCategory};
use crate::error::{Error, Result};
use crate::press::{default_model, Predictor};

pub const COLS: usize = 24;
pub const ROWS: usize = 18;
pub const PATCHES: usize = COLS * ROWS;

/// Coverage resolution of the chart text format, 0.01 %.
pub const COVERAGE_QUANTUM: f64 = 1e-4;

pub const DEFAULT_GAMMA: f64 = 2.2;
pub const DEFAULT_STEPS_PER_RAMP: usize = 8;
const MAX_STEPS_PER_RAMP: usize = COLS / 3;
const K_RAMP_STEPS: usize = COLS;

const CM_STEPS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
const Y_STEPS: [f64; 3] = [0.0, 0.5, 1.0];
const K_STEPS: [f64; 4] = [0.0, 0.33, 0.67, 1.0];

/// Lightness margin kept inside the target band when moving patches.
const BAND_MARGIN: f64 = 2.0;

/// Fractional area coverages of cyan, magenta, yellow and black.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InkCoverage {
    pub c: f64,
    pub m: f64,
    pub y: f64,
    pub k: f64,
}

impl InkCoverage {
    pub const WHITE: InkCoverage = InkCoverage {
        c: 0.0,
        m: 0.0,
        y: 0.0,
        k: 0.0,
    };

    pub fn new(c: f64, m: f64, y: f64, k: f64) -> Result<Self> {
        let cov = Self { c, m, y, k };
        for (name, v) in ["c", "m", "y", "k"].into_iter().zip(cov.to_array()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    what: match name {
                        "c" => "cyan coverage",
                        "m" => "magenta coverage",
                        "y" => "yellow coverage",
                        _ => "black coverage",
                    },
                    value: v,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        Ok(cov)
    }

    pub fn from_array([c, m, y, k]: [f64; 4]) -> Result<Self> {
        Self::new(c, m, y, k)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.c, self.m, self.y, self.k]
    }

    /// Total area coverage, 0 to 4.
    pub fn total(self) -> f64 {
        self.c + self.m + self.y + self.k
    }

    pub fn is_white(self) -> bool {
        self.to_array().iter().all(|&v| v == 0.0)
    }

    /// Number of inks with nonzero coverage.
    pub fn inks_used(self) -> usize {
        self.to_array().iter().filter(|&&v| v > 0.0).count()
    }

    pub(crate) fn map(self, f: impl Fn(usize, f64) -> f64) -> Self {
        Self {
            c: f(0, self.c),
            m: f(1, self.m),
            y: f(2, self.y),
            k: f(3, self.k),
        }
    }

    pub fn quantized(self) -> Self {
        self.map(|_, v| quantize(v))
    }
}

fn quantize(v: f64) -> f64 {
    ((v / COVERAGE_QUANTUM).round() * COVERAGE_QUANTUM).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub id: String,
    pub coverage: InkCoverage,
}

impl Patch {
    pub fn new(row: usize, col: usize, coverage: InkCoverage) -> Self {
        Self {
            row,
            col,
            id: patch_id(row, col),
            coverage,
        }
    }
}

pub fn patch_id(row: usize, col: usize) -> String {
    format!("R{row}C{col}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    Standard,
    AdaptedNew(ImageCategory),
    AdaptedRemap(ImageCategory),
    GrayScale,
}

impl ChartKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::AdaptedNew(_) => "adapted-new",
            Self::AdaptedRemap(_) => "adapted-remap",
            Self::GrayScale => "gray-scale",
        }
    }

    pub fn category(self) -> Option<ImageCategory> {
        match self {
            Self::AdaptedNew(c) | Self::AdaptedRemap(c) => Some(c),
            Self::Standard | Self::GrayScale => None,
        }
    }

    pub fn from_parts(label: &str, category: Option<ImageCategory>) -> Result<Self> {
        let need = |c: Option<ImageCategory>| {
            c.ok_or_else(|| Error::InvalidArgument(format!("chart kind `{label}` needs a category")))
        };
        match label {
            "standard" => Ok(Self::Standard),
            "adapted-new" => Ok(Self::AdaptedNew(need(category)?)),
            "adapted-remap" => Ok(Self::AdaptedRemap(need(category)?)),
            "gray-scale" => Ok(Self::GrayScale),
            other => Err(Error::InvalidArgument(format!("unknown chart kind `{other}`"))),
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.category() {
            Some(c) => write!(f, "{} ({c})", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationParams {
    /// Tone-step slope; 1 leaves the steps uniform.
    pub gamma: f64,
    pub steps_per_ramp: usize,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            steps_per_ramp: DEFAULT_STEPS_PER_RAMP,
        }
    }
}

impl AdaptationParams {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(1..=MAX_STEPS_PER_RAMP).contains(&self.steps_per_ramp) {
            return Err(Error::InvalidArgument(format!(
                "steps_per_ramp must be in 1..={MAX_STEPS_PER_RAMP}, got {}",
                self.steps_per_ramp
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestChart {
    pub kind: ChartKind,
    pub params: AdaptationParams,
    pub patches: Vec<Patch>,
}

impl TestChart {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Patch> {
        self.patches.iter().find(|p| p.id == id)
    }

    /// Checks id uniqueness, grid bounds and, for full charts, patch count and
    /// the white and black anchors.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for p in &self.patches {
            if p.row >= ROWS || p.col >= COLS {
                return Err(Error::InvalidArgument(format!("patch {} outside the grid", p.id)));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate patch id {}", p.id)));
            }
            InkCoverage::from_array(p.coverage.to_array())?;
        }
        if self.kind != ChartKind::GrayScale {
            if self.patches.len() != PATCHES {
                return Err(Error::InvalidArgument(format!(
                    "chart has {} patches, expected {PATCHES}",
                    self.patches.len()
                )));
            }
            if !self.patches.iter().any(|p| p.coverage.is_white()) {
                return Err(Error::InvalidArgument("chart lacks a paper-white patch".into()));
            }
            if !self.patches.iter().any(|p| p.coverage.k == 1.0) {
                return Err(Error::InvalidArgument("chart lacks a full-black patch".into()));
            }
        }
        Ok(())
    }
}

fn lattice_point(j: usize) -> InkCoverage {
    InkCoverage {
        c: CM_STEPS[j % 6],
        m: CM_STEPS[(j / 6) % 6],
        y: Y_STEPS[(j / 36) % 3],
        k: K_STEPS[j / 108],
    }
}

/// Layout of the 432 nominal coverages, before any remapping.
fn layout(steps_per_ramp: usize) -> Vec<InkCoverage> {
    let ramp_slots = 3 * steps_per_ramp;
    let lattice = PATCHES - K_RAMP_STEPS - ramp_slots;
    let mut out: Vec<InkCoverage> = (0..lattice).map(lattice_point).collect();
    for ink in 0..3 {
        for i in 1..=steps_per_ramp {
            let mut inks = [0.0; 4];
            inks[ink] = i as f64 / steps_per_ramp as f64;
            out.push(InkCoverage::from_array(inks).expect("ramp step in range"));
        }
    }
    for i in 1..=K_RAMP_STEPS {
        out.push(InkCoverage {
            k: i as f64 / K_RAMP_STEPS as f64,
            ..InkCoverage::WHITE
        });
    }
    out
}

fn place(coverages: impl IntoIterator<Item = InkCoverage>) -> Vec<Patch> {
    coverages
        .into_iter()
        .enumerate()
        .map(|(i, cov)| Patch::new(i / COLS, i % COLS, cov.quantized()))
        .collect()
}

pub fn standard_chart() -> TestChart {
    let params = AdaptationParams {
        gamma: 1.0,
        steps_per_ramp: DEFAULT_STEPS_PER_RAMP,
    };
    TestChart {
        kind: ChartKind::Standard,
        params,
        patches: place(layout(params.steps_per_ramp)),
    }
}

/// Monotone bijection of `[0, 1]` that crowds uniform steps into the tonal
/// range of `category`.
///
/// * low-key: `u^(1/γ)`, steps crowd toward full coverage (dark tones);
/// * high-key: `u^γ`, steps crowd toward paper white;
/// * normal-key: `(1 + β)·u − β·smoothstep(u)` with `β = 2(1 − 1/γ)` for
///   `γ ≥ 1` (and `β = γ − 1` below), which flattens the curve to slope `1/γ`
///   at mid coverage so steps crowd into the mid-tones.
///
/// ```
/// use keytone::chart::{remap_steps, AdaptationParams};
/// use keytone::classify::ImageCategory;
///
/// let p = AdaptationParams::with_gamma(2.2);
/// let v = remap_steps(0.5, ImageCategory::LowKey, &p).unwrap();
/// assert!((v - 0.5f64.powf(1.0 / 2.2)).abs() < 1e-12);
/// ```
pub fn remap_steps(u: f64, category: ImageCategory, p: &AdaptationParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::OutOfRange {
            what: "step value",
            value: u,
            min: 0.0,
            max: 1.0,
        });
    }
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {}",
            p.gamma
        )));
    }
    let g = p.gamma;
    let v = match category {
        ImageCategory::LowKey => u.powf(1.0 / g),
        ImageCategory::HighKey => u.powf(g),
        ImageCategory::NormalKey => {
            let beta = if g >= 1.0 { 2.0 * (1.0 - 1.0 / g) } else { g - 1.0 };
            let smooth = u * u * (3.0 - 2.0 * u);
            (1.0 + beta) * u - beta * smooth
        }
    };
    // pin the endpoints against rounding
    Ok(if u == 0.0 {
        0.0
    } else if u == 1.0 {
        1.0
    } else {
        v.clamp(0.0, 1.0)
    })
}

fn remap_coverage(cov: InkCoverage, category: ImageCategory, p: &AdaptationParams) -> InkCoverage {
    cov.map(|_, v| remap_steps(v, category, p).expect("coverage already validated"))
}

/// A new chart with the standard lattice, every step value remapped toward
/// `category`, and mixed-ink patches pulled into the category's L* band
/// (predicted with the coated press preset) until at least half of the chart
/// lies inside it. With `gamma = 1` no adaptation is requested and the
/// standard layout is returned unchanged, apart from its kind.
pub fn adapted_chart_new(category: ImageCategory, p: &AdaptationParams) -> Result<TestChart> {
    p.validate()?;
    let mut coverages: Vec<InkCoverage> = layout(p.steps_per_ramp)
        .into_iter()
        .map(|c| remap_coverage(c, category, p).quantized())
        .collect();
    if p.gamma != 1.0 {
        concentrate_in_band(&mut coverages, category, &CategoryBands::default());
    }
    Ok(TestChart {
        kind: ChartKind::AdaptedNew(category),
        params: *p,
        patches: place(coverages),
    })
}

/// Lightness of the target band, with a margin inside each border, that a
/// moved patch aims for.
fn band_goal(category: ImageCategory, bands: &CategoryBands, l: f64) -> f64 {
    match category {
        ImageCategory::LowKey => bands.normal_min - BAND_MARGIN,
        ImageCategory::HighKey => bands.high_min + BAND_MARGIN,
        ImageCategory::NormalKey if l >= bands.high_min => bands.high_min - BAND_MARGIN,
        ImageCategory::NormalKey => bands.normal_min + BAND_MARGIN,
    }
}

fn concentrate_in_band(coverages: &mut [InkCoverage], category: ImageCategory, bands: &CategoryBands) {
    let predictor = default_model().predictor();
    let lightness: Vec<f64> = coverages.iter().map(|c| predictor.predict(c).l).collect();
    let needed = coverages.len().div_ceil(2);
    let mut inside = lightness.iter().filter(|&&l| bands.contains(category, l)).count();
    if inside >= needed {
        return;
    }
    let distance = |l: f64| (l - band_goal(category, bands, l)).abs();
    let mut candidates: Vec<usize> = (0..coverages.len())
        .filter(|&i| coverages[i].inks_used() >= 2 && !bands.contains(category, lightness[i]))
        .collect();
    candidates.sort_by(|&a, &b| {
        distance(lightness[a])
            .total_cmp(&distance(lightness[b]))
            .then(a.cmp(&b))
    });
    for i in candidates {
        if inside >= needed {
            break;
        }
        let goal = band_goal(category, bands, lightness[i]);
        let moved = move_toward_lightness(&predictor, coverages[i], goal, lightness[i] > goal).quantized();
        if bands.contains(category, predictor.predict(&moved).l) {
            coverages[i] = moved;
            inside += 1;
        }
    }
}

/// Moves a coverage along a one-parameter path until its predicted L*
/// reaches `goal`: darkening adds ink proportionally toward solid, lightening
/// scales all inks toward paper.
fn move_toward_lightness(pred: &Predictor, cov: InkCoverage, goal: f64, darken: bool) -> InkCoverage {
    let at = |t: f64| {
        if darken {
            cov.map(|_, v| v + t * (1.0 - v))
        } else {
            cov.map(|_, v| v * (1.0 - t))
        }
    };
    let reached = |t: f64| {
        let l = pred.predict(&at(t)).l;
        if darken {
            l <= goal
        } else {
            l >= goal
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

/// Remaps every coverage of a standard chart in place; ids and layout are kept.
pub fn adapt_standard_chart(chart: &TestChart, category: ImageCategory, p: &AdaptationParams) -> Result<TestChart> {
    if chart.kind != ChartKind::Standard {
        return Err(Error::NotStandardChart(chart.kind.to_string()));
    }
    p.validate()?;
    let patches = chart
        .patches
        .iter()
        .map(|patch| Patch {
            coverage: remap_coverage(patch.coverage, category, p).quantized(),
            ..patch.clone()
        })
        .collect();
    Ok(TestChart {
        kind: ChartKind::AdaptedRemap(category),
        params: *p,
        patches,
    })
}

/// `n` black-only patches uniformly spaced over `[k_min, k_max]`.
pub fn gray_scale(n: usize, k_min: f64, k_max: f64) -> Result<TestChart> {
    if !(2..=256).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "gray scale needs 2..=256 steps, got {n}"
        )));
    }
    if !(0.0 <= k_min && k_min < k_max && k_max <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gray scale range must satisfy 0 <= {k_min} < {k_max} <= 1"
        )));
    }
    let step = (k_max - k_min) / (n - 1) as f64;
    let coverages = (0..n).map(|i| {
        let k = if i == n - 1 { k_max } else { k_min + i as f64 * step };
        InkCoverage {
            k,
            ..InkCoverage::WHITE
        }
    });
    Ok(TestChart {
        kind: ChartKind::GrayScale,
        params: AdaptationParams {
            gamma: 1.0,
            steps_per_ramp: n,
        },
        patches: place(coverages),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::press::default_model;
    use proptest::prelude::*;

    #[test]
    fn standard_anchor_and_size() {
        let chart = standard_chart();
        chart.validate().unwrap();
        assert_eq!(chart.len(), PATCHES);
        assert_eq!(chart.patches[0].id, "R0C0");
        assert!(chart.patches[0].coverage.is_white());
        let ids: HashSet<_> = chart.patches.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), PATCHES);
        // white appears exactly once
        assert_eq!(chart.patches.iter().filter(|p| p.coverage.is_white()).count(), 1);
    }

    #[test]
    fn standard_layout_landmarks() {
        let chart = standard_chart();
        let at = |id: &str| chart.get(id).unwrap().coverage;
        assert_eq!(at("R0C1"), InkCoverage::new(0.2, 0.0, 0.0, 0.0).unwrap());
        assert_eq!(at("R13C12"), InkCoverage::new(0.0, 0.0, 0.0, 1.0).unwrap());
        assert_eq!(at("R16C0"), InkCoverage::new(0.125, 0.0, 0.0, 0.0).unwrap());
        assert_eq!(at("R16C23"), InkCoverage::new(0.0, 0.0, 1.0, 0.0).unwrap());
        assert_eq!(at("R17C0").k, 0.0417);
        assert_eq!(at("R17C23"), InkCoverage::new(0.0, 0.0, 0.0, 1.0).unwrap());
    }

    #[test]
    fn remap_examples() {
        let p = AdaptationParams::with_gamma(2.2);
        for c in ImageCategory::ALL {
            assert_eq!(remap_steps(0.0, c, &p).unwrap(), 0.0);
            assert_eq!(remap_steps(1.0, c, &p).unwrap(), 1.0);
        }
        let one = AdaptationParams::with_gamma(1.0);
        for u in [0.1, 0.37, 0.9] {
            assert_eq!(remap_steps(u, ImageCategory::LowKey, &one).unwrap(), u);
            assert_eq!(remap_steps(u, ImageCategory::HighKey, &one).unwrap(), u);
        }
        // 0.5^(1/2.2) = 0.72974..., independent evaluation
        let v = remap_steps(0.5, ImageCategory::LowKey, &p).unwrap();
        assert!((v - 0.7297).abs() < 1e-4);
        assert!(remap_steps(1.5, ImageCategory::LowKey, &p).is_err());
        assert!(remap_steps(-0.1, ImageCategory::LowKey, &p).is_err());
    }

    #[test]
    fn normal_key_flattens_mid_tones() {
        let p = AdaptationParams::with_gamma(2.2);
        let f = |u| remap_steps(u, ImageCategory::NormalKey, &p).unwrap();
        assert!((f(0.5) - 0.5).abs() < 1e-12);
        let slope = (f(0.5 + 1e-6) - f(0.5 - 1e-6)) / 2e-6;
        assert!((slope - 1.0 / 2.2).abs() < 1e-6);
    }

    fn predicted_in_band(chart: &TestChart, category: ImageCategory) -> usize {
        let pred = default_model().predictor();
        let bands = CategoryBands::default();
        chart
            .patches
            .iter()
            .filter(|p| bands.contains(category, pred.predict(&p.coverage).l))
            .count()
    }

    #[test]
    fn adapted_new_concentrates_in_band() {
        let p = AdaptationParams::default();
        for c in ImageCategory::ALL {
            let chart = adapted_chart_new(c, &p).unwrap();
            chart.validate().unwrap();
            assert!(predicted_in_band(&chart, c) * 2 >= PATCHES, "{c}");
        }
    }

    #[test]
    fn low_key_chart_has_more_dark_patches() {
        let standard = standard_chart();
        let low = adapted_chart_new(ImageCategory::LowKey, &AdaptationParams::default()).unwrap();
        assert!(predicted_in_band(&low, ImageCategory::LowKey) > predicted_in_band(&standard, ImageCategory::LowKey));
    }

    #[test]
    fn identity_adaptation_equals_standard() {
        let p = AdaptationParams::with_gamma(1.0);
        let chart = adapted_chart_new(ImageCategory::HighKey, &p).unwrap();
        assert_eq!(chart.patches, standard_chart().patches);
    }

    #[test]
    fn remap_of_standard() {
        let standard = standard_chart();
        let same = adapt_standard_chart(&standard, ImageCategory::LowKey, &AdaptationParams::with_gamma(1.0)).unwrap();
        assert_eq!(same.patches, standard.patches);
        assert_eq!(same.kind, ChartKind::AdaptedRemap(ImageCategory::LowKey));

        let low = adapt_standard_chart(&standard, ImageCategory::LowKey, &AdaptationParams::default()).unwrap();
        assert_eq!(low.len(), standard.len());
        for (a, b) in standard.patches.iter().zip(&low.patches) {
            assert_eq!(a.id, b.id);
            for (u, v) in a.coverage.to_array().into_iter().zip(b.coverage.to_array()) {
                if u > 0.0 && u < 1.0 {
                    assert!(v > u, "{}: {u} -> {v}", a.id);
                } else {
                    assert_eq!(u, v);
                }
            }
        }
        assert!(matches!(
            adapt_standard_chart(&low, ImageCategory::LowKey, &AdaptationParams::default()),
            Err(Error::NotStandardChart(_))
        ));
    }

    #[test]
    fn adapted_charts_keep_anchors() {
        for c in ImageCategory::ALL {
            let chart = adapted_chart_new(c, &AdaptationParams::default()).unwrap();
            assert!(chart.patches[0].coverage.is_white());
            assert!(chart
                .patches
                .iter()
                .any(|p| p.coverage == InkCoverage::new(0.0, 0.0, 0.0, 1.0).unwrap()));
        }
    }

    #[test]
    fn gray_scale_examples() {
        let g = gray_scale(3, 0.0, 1.0).unwrap();
        let ks: Vec<f64> = g.patches.iter().map(|p| p.coverage.k).collect();
        assert_eq!(ks, vec![0.0, 0.5, 1.0]);
        assert_eq!(g.kind, ChartKind::GrayScale);

        let g = gray_scale(2, 0.2, 0.9).unwrap();
        assert_eq!(
            g.patches.iter().map(|p| p.coverage.k).collect::<Vec<_>>(),
            vec![0.2, 0.9]
        );

        let g = gray_scale(21, 0.6, 1.0).unwrap();
        assert_eq!(g.len(), 21);
        for w in g.patches.windows(2) {
            assert!((w[1].coverage.k - w[0].coverage.k - 0.02).abs() < 1e-12);
        }
        assert!(g
            .patches
            .iter()
            .all(|p| p.coverage.c == 0.0 && p.coverage.m == 0.0 && p.coverage.y == 0.0));

        assert!(gray_scale(1, 0.0, 1.0).is_err());
        assert!(gray_scale(257, 0.0, 1.0).is_err());
        assert!(gray_scale(5, 0.5, 0.5).is_err());
        assert!(gray_scale(5, 0.5, 1.2).is_err());
    }

    #[test]
    fn params_are_validated() {
        assert!(adapted_chart_new(ImageCategory::LowKey, &AdaptationParams::with_gamma(0.0)).is_err());
        let p = AdaptationParams {
            gamma: 2.2,
            steps_per_ramp: 9,
        };
        assert!(adapted_chart_new(ImageCategory::LowKey, &p).is_err());
        let p = AdaptationParams {
            gamma: 2.2,
            steps_per_ramp: 4,
        };
        assert_eq!(adapted_chart_new(ImageCategory::LowKey, &p).unwrap().len(), PATCHES);
    }

    proptest! {
        #[test]
        fn remap_is_strictly_monotone(
            a in 0.0..=1.0f64,
            b in 0.0..=1.0f64,
            gamma in 0.1..10.0f64,
            cat in prop::sample::select(ImageCategory::ALL.to_vec()),
        ) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p = AdaptationParams::with_gamma(gamma);
            prop_assert!(remap_steps(lo, cat, &p).unwrap() < remap_steps(hi, cat, &p).unwrap());
        }
    }
}
