//! Simulated halftone press.
//!
//! Color is predicted with the Yule–Nielsen modified spectral-free
//! Neugebauer model: nominal coverages pass through a per-ink tone value
//! increase (dot gain) curve, the Demichel equations turn the effective
//! coverages into area fractions of the sixteen overprint primaries, and the
//! primaries' tristimulus values are averaged in `XYZ^(1/n)` space.
//!
//! Two paper presets stand in for a coated and an uncoated offset stock. On
//! the uncoated stock the solid black is lighter and dot gain is higher, so
//! shadows print lighter and flatter.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{InkCoverage, TestChart};
use crate::color::{lab_to_xyz, xyz_to_lab, Lab, Xyz};
use crate::error::{Error, Result};

pub const PRIMARY_COUNT: usize = 16;
pub const TVI_KNOTS: usize = 11;
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Bit for each ink in a primary index: bit 0 cyan, 1 magenta, 2 yellow, 3 black.
pub const INK_NAMES: [char; 4] = ['C', 'M', 'Y', 'K'];
pub const WHITE: usize = 0;
pub const SOLID_K: usize = 0b1000;

/// Name of the overprint primary with ink bitmask `index`, e.g. `"CMY"`;
/// the unprinted paper is `"W"`.
pub fn primary_name(index: usize) -> String {
    if index == WHITE {
        return "W".to_string();
    }
    INK_NAMES
        .iter()
        .enumerate()
        .filter(|(bit, _)| index & (1 << bit) != 0)
        .map(|(_, c)| *c)
        .collect()
}

pub fn primary_index(name: &str) -> Option<usize> {
    if name == "W" {
        return Some(WHITE);
    }
    let mut index = 0;
    for ch in name.chars() {
        let bit = INK_NAMES.iter().position(|&c| c == ch)?;
        if index & (1 << bit) != 0 {
            return None;
        }
        index |= 1 << bit;
    }
    (index != 0).then_some(index)
}

/// Demichel area fractions of the sixteen primaries for the given (effective)
/// coverages. Entry `i` is the fraction covered by exactly the inks in bitmask `i`.
pub fn demichel_weights(cov: &InkCoverage) -> [f64; PRIMARY_COUNT] {
    let inks = cov.to_array();
    let mut w = [0.0; PRIMARY_COUNT];
    for (index, slot) in w.iter_mut().enumerate() {
        *slot = inks
            .iter()
            .enumerate()
            .map(|(bit, &c)| if index & (1 << bit) != 0 { c } else { 1.0 - c })
            .product();
    }
    w
}

/// Piecewise-linear tone value increase curve on eleven equally spaced knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneCurve {
    knots: [f64; TVI_KNOTS],
}

impl ToneCurve {
    pub const IDENTITY: ToneCurve = ToneCurve {
        knots: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
    };

    pub fn new(knots: [f64; TVI_KNOTS]) -> Result<Self> {
        if knots[0] != 0.0 || knots[TVI_KNOTS - 1] != 1.0 {
            return Err(Error::InvalidModel("tone curve must map 0 to 0 and 1 to 1".into()));
        }
        if knots.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidModel("tone curve must be monotone".into()));
        }
        Ok(Self { knots })
    }

    /// Symmetric dot gain peaking at 50 %: `u + 4·gain·u·(1 − u)`.
    ///
    /// `gain` is the tone value increase at 50 % and must lie in `[0, 0.25]`
    /// for the curve to stay monotone.
    pub fn mid_tone_gain(gain: f64) -> Result<Self> {
        if !(0.0..=0.25).contains(&gain) {
            return Err(Error::OutOfRange {
                what: "mid-tone gain",
                value: gain,
                min: 0.0,
                max: 0.25,
            });
        }
        let mut knots = [0.0; TVI_KNOTS];
        for (i, k) in knots.iter_mut().enumerate() {
            let u = i as f64 / 10.0;
            *k = u + 4.0 * gain * u * (1.0 - u);
        }
        knots[TVI_KNOTS - 1] = 1.0;
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64; TVI_KNOTS] {
        &self.knots
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let x = u * 10.0;
        let i = (x.floor() as usize).min(TVI_KNOTS - 2);
        let t = x - i as f64;
        if t == 0.0 {
            return self.knots[i];
        }
        self.knots[i] + t * (self.knots[i + 1] - self.knots[i])
    }

    /// Smallest nominal coverage whose effective coverage is `e`.
    pub fn inverse(&self, e: f64) -> f64 {
        let e = e.clamp(0.0, 1.0);
        let i = self.knots.windows(2).position(|w| e <= w[1]).unwrap_or(TVI_KNOTS - 2);
        let (lo, hi) = (self.knots[i], self.knots[i + 1]);
        let t = if hi > lo { (e - lo) / (hi - lo) } else { 0.0 };
        (i as f64 + t.clamp(0.0, 1.0)) / 10.0
    }

    /// Tone value increase at nominal coverage `u`.
    pub fn gain_at(&self, u: f64) -> f64 {
        self.eval(u) - u
    }
}

impl Default for ToneCurve {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Neugebauer primaries, dot gain and Yule–Nielsen factor of one press/paper
/// combination.
#[derive(Debug, Clone, PartialEq)]
pub struct PressModel {
    pub name: String,
    /// Indexed by ink bitmask, see [`primary_name`].
    pub primaries: [Xyz; PRIMARY_COUNT],
    /// Cyan, magenta, yellow, black.
    pub tvi: [ToneCurve; 4],
    pub yule_nielsen_n: f64,
}

impl PressModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.yule_nielsen_n >= 1.0) || !self.yule_nielsen_n.is_finite() {
            return Err(Error::InvalidModel(format!(
                "Yule-Nielsen n must be >= 1, got {}",
                self.yule_nielsen_n
            )));
        }
        for (i, p) in self.primaries.iter().enumerate() {
            if !(p.x >= 0.0 && p.y >= 0.0 && p.z >= 0.0) || !(p.x + p.y + p.z).is_finite() {
                return Err(Error::InvalidModel(format!(
                    "primary {} has invalid tristimulus values {p:?}",
                    primary_name(i)
                )));
            }
        }
        let white = self.primaries[WHITE].y;
        if let Some(i) = (1..PRIMARY_COUNT).find(|&i| self.primaries[i].y > white) {
            return Err(Error::InvalidModel(format!(
                "primary {} is lighter than paper white",
                primary_name(i)
            )));
        }
        for curve in &self.tvi {
            ToneCurve::new(curve.knots)?;
        }
        Ok(())
    }

    pub fn predictor(&self) -> Predictor {
        Predictor::new(self)
    }

    pub fn primary_lab(&self, index: usize) -> Lab {
        xyz_to_lab(self.primaries[index])
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&ModelDocument::from(self))?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ModelDocument = toml::from_str(text)?;
        doc.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

/// A press model with its primaries pre-linearized for repeated prediction.
#[derive(Debug, Clone)]
pub struct Predictor {
    primaries: [Xyz; PRIMARY_COUNT],
    linear: [[f64; 3]; PRIMARY_COUNT],
    exact: [Lab; PRIMARY_COUNT],
    tvi: [ToneCurve; 4],
    n: f64,
}

impl Predictor {
    pub fn new(model: &PressModel) -> Self {
        let inv = 1.0 / model.yule_nielsen_n;
        let mut linear = [[0.0; 3]; PRIMARY_COUNT];
        let mut exact = [Lab::default(); PRIMARY_COUNT];
        for (i, p) in model.primaries.iter().enumerate() {
            linear[i] = [p.x.powf(inv), p.y.powf(inv), p.z.powf(inv)];
            exact[i] = xyz_to_lab(*p);
        }
        Self {
            primaries: model.primaries,
            linear,
            exact,
            tvi: model.tvi,
            n: model.yule_nielsen_n,
        }
    }

    pub fn primary_xyz(&self, index: usize) -> Xyz {
        self.primaries[index]
    }

    pub fn tone_curve(&self, ink: usize) -> &ToneCurve {
        &self.tvi[ink]
    }

    pub fn effective(&self, cov: &InkCoverage) -> InkCoverage {
        InkCoverage {
            c: self.tvi[0].eval(cov.c),
            m: self.tvi[1].eval(cov.m),
            y: self.tvi[2].eval(cov.y),
            k: self.tvi[3].eval(cov.k),
        }
    }

    pub fn predict_xyz(&self, cov: &InkCoverage) -> Xyz {
        let w = demichel_weights(&self.effective(cov));
        let mut acc = [0.0; 3];
        for (wi, p) in w.iter().zip(&self.linear) {
            if *wi != 0.0 {
                acc[0] += wi * p[0];
                acc[1] += wi * p[1];
                acc[2] += wi * p[2];
            }
        }
        Xyz::new(acc[0].powf(self.n), acc[1].powf(self.n), acc[2].powf(self.n))
    }

    pub fn predict(&self, cov: &InkCoverage) -> Lab {
        let e = self.effective(cov);
        let inks = e.to_array();
        if inks.iter().all(|&c| c == 0.0 || c == 1.0) {
            // a single primary covers the whole area
            let index = inks
                .iter()
                .enumerate()
                .fold(0, |acc, (bit, &c)| if c == 1.0 { acc | (1 << bit) } else { acc });
            return self.exact[index];
        }
        xyz_to_lab(self.predict_xyz(cov))
    }
}

/// Predicted CIELAB color of a halftone with nominal coverage `cov`.
pub fn predict(cov: &InkCoverage, model: &PressModel) -> Lab {
    model.predictor().predict(cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaperPreset {
    Coated,
    Uncoated,
}

impl PaperPreset {
    pub fn model(self) -> PressModel {
        match self {
            Self::Coated => preset_model("coated", &COATED_LAB, PresetGain::COATED, 1.6),
            Self::Uncoated => preset_model("uncoated", &UNCOATED_LAB, PresetGain::UNCOATED, 2.2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Coated => "coated",
            Self::Uncoated => "uncoated",
        }
    }
}

impl fmt::Display for PaperPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaperPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coated" => Ok(Self::Coated),
            "uncoated" => Ok(Self::Uncoated),
            other => Err(Error::InvalidArgument(format!("unknown paper preset `{other}`"))),
        }
    }
}

/// The coated preset, the model charts are adapted against.
pub fn default_model() -> PressModel {
    PaperPreset::Coated.model()
}

struct PresetGain;

impl PresetGain {
    const COATED: [f64; 4] = [0.13, 0.13, 0.12, 0.15];
    const UNCOATED: [f64; 4] = [0.20, 0.20, 0.19, 0.22];
}

// Lab (D50) of the sixteen overprints, indexed by ink bitmask, in the range
// typical of sheet-fed offset on gloss coated and on uncoated wood-free stock.
#[rustfmt::skip]
const COATED_LAB: [[f64; 3]; PRIMARY_COUNT] = [
    [95.0,   0.0,  -2.0], // W
    [55.0, -37.0, -50.0], // C
    [48.0,  74.0,  -3.0], // M
    [24.0,  22.0, -46.0], // CM
    [89.0,  -5.0,  93.0], // Y
    [50.0, -65.0,  27.0], // CY
    [47.0,  68.0,  48.0], // MY
    [23.0,   0.0,   0.0], // CMY
    [16.0,   0.0,   0.0], // K
    [12.0,  -8.0, -14.0], // CK
    [11.0,  12.0,  -1.0], // MK
    [ 8.0,   4.0,  -8.0], // CMK
    [15.0,  -1.0,  12.0], // YK
    [11.0, -10.0,   3.0], // CYK
    [11.0,  11.0,   5.0], // MYK
    [ 7.0,   0.0,   0.0], // CMYK
];

#[rustfmt::skip]
const UNCOATED_LAB: [[f64; 3]; PRIMARY_COUNT] = [
    [93.0,   0.0,  -2.0],
    [60.0, -26.0, -44.0],
    [56.0,  61.0,  -2.0],
    [36.0,  10.0, -35.0],
    [89.0,  -4.0,  78.0],
    [54.0, -43.0,  17.0],
    [53.0,  55.0,  28.0],
    [34.0,   1.0,   2.0],
    [31.0,   1.0,   1.0],
    [26.0,  -6.0, -12.0],
    [25.0,  10.0,   0.0],
    [22.0,   3.0,  -7.0],
    [29.0,   0.0,   9.0],
    [25.0,  -8.0,   2.0],
    [25.0,   9.0,   4.0],
    [20.0,   1.0,   0.0],
];

fn preset_model(name: &str, lab: &[[f64; 3]; PRIMARY_COUNT], gains: [f64; 4], n: f64) -> PressModel {
    let primaries = lab.map(|[l, a, b]| lab_to_xyz(Lab::new(l, a, b)));
    let tvi = gains.map(|g| ToneCurve::mid_tone_gain(g).expect("preset gains are valid"));
    PressModel {
        name: name.to_string(),
        primaries,
        tvi,
        yule_nielsen_n: n,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    name: String,
    yule_nielsen_n: f64,
    tvi: TviDocument,
    /// Primary name to `[X, Y, Z]`.
    primaries: IndexMap<String, [f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TviDocument {
    c: Vec<f64>,
    m: Vec<f64>,
    y: Vec<f64>,
    k: Vec<f64>,
}

impl From<&PressModel> for ModelDocument {
    fn from(m: &PressModel) -> Self {
        let curve = |i: usize| m.tvi[i].knots.to_vec();
        ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            name: m.name.clone(),
            yule_nielsen_n: m.yule_nielsen_n,
            tvi: TviDocument {
                c: curve(0),
                m: curve(1),
                y: curve(2),
                k: curve(3),
            },
            primaries: m
                .primaries
                .iter()
                .enumerate()
                .map(|(i, p)| (primary_name(i), p.to_array()))
                .collect(),
        }
    }
}

impl TryFrom<ModelDocument> for PressModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Unsupported(format!(
                "press model schema version {}",
                doc.schema_version
            )));
        }
        let curve = |knots: Vec<f64>| -> Result<ToneCurve> {
            let knots: [f64; TVI_KNOTS] = knots.try_into().map_err(|v: Vec<f64>| {
                Error::InvalidModel(format!("tone curve needs {TVI_KNOTS} knots, got {}", v.len()))
            })?;
            ToneCurve::new(knots)
        };
        let tvi = [
            curve(doc.tvi.c)?,
            curve(doc.tvi.m)?,
            curve(doc.tvi.y)?,
            curve(doc.tvi.k)?,
        ];
        let mut primaries = [None; PRIMARY_COUNT];
        for (name, xyz) in doc.primaries {
            let i = primary_index(&name).ok_or_else(|| Error::InvalidModel(format!("unknown primary `{name}`")))?;
            primaries[i] = Some(Xyz::from_array(xyz));
        }
        let mut out = [Xyz::default(); PRIMARY_COUNT];
        for (i, p) in primaries.iter().enumerate() {
            out[i] = p.ok_or_else(|| Error::InvalidModel(format!("missing primary {}", primary_name(i))))?;
        }
        let model = PressModel {
            name: doc.name,
            primaries: out,
            tvi,
            yule_nielsen_n: doc.yule_nielsen_n,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementSource {
    Simulated(String),
    File(PathBuf),
}

/// Measured CIELAB value per patch id, in chart order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub entries: IndexMap<String, Lab>,
    pub source: MeasurementSource,
}

impl MeasurementSet {
    pub fn new(source: MeasurementSource) -> Self {
        Self {
            entries: IndexMap::new(),
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<Lab> {
        self.entries.get(id).copied()
    }

    /// Inserts a measurement, rejecting duplicate ids and non-finite values.
    pub fn insert(&mut self, id: impl Into<String>, lab: Lab) -> Result<()> {
        let id = id.into();
        if !lab.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite Lab for `{id}`")));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate patch id `{id}`")));
        }
        self.entries.insert(id, lab);
        Ok(())
    }
}

/// Gaussian measurement noise. `sigma` is the RMS color difference of the
/// perturbation, split evenly over L*, a* and b*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoise {
    pub sigma: f64,
    pub seed: u64,
}

fn patch_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix finalizer with the seed mixed in.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// "Prints" a chart on the model and measures every patch.
pub fn simulate_print(
    chart: &TestChart,
    model: &PressModel,
    noise: Option<MeasurementNoise>,
) -> Result<MeasurementSet> {
    let predictor = model.predictor();
    let normal = match noise {
        Some(n) if n.sigma > 0.0 => Some(
            Normal::new(0.0, n.sigma / 3f64.sqrt()).map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?,
        ),
        Some(n) if n.sigma < 0.0 => return Err(Error::InvalidArgument("noise sigma must be >= 0".into())),
        _ => None,
    };
    let labs: Vec<Lab> = chart
        .patches
        .par_iter()
        .map(|p| {
            let mut lab = predictor.predict(&p.coverage);
            if let (Some(dist), Some(n)) = (&normal, noise) {
                let mut rng = ChaCha8Rng::seed_from_u64(patch_seed(n.seed, &p.id));
                lab.l += dist.sample(&mut rng);
                lab.a += dist.sample(&mut rng);
                lab.b += dist.sample(&mut rng);
                lab.l = lab.l.clamp(0.0, 100.0);
            }
            lab
        })
        .collect();
    let mut set = MeasurementSet::new(MeasurementSource::Simulated(model.name.clone()));
    for (p, lab) in chart.patches.iter().zip(labs) {
        set.insert(p.id.clone(), lab)?;
    }
    Ok(set)
}
