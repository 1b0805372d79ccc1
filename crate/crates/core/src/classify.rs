//! Lightness histograms and high-key / normal-key / low-key classification.
//!
//! Only L* is looked at. The lightness axis is split into three bands,
//! `[0, 40)` low-key, `[40, 60)` normal-key and `[60, 100]` high-key, and an
//! image is assigned to the band that holds most of its pixels (or, with the
//! alternative policy, the band containing its mean lightness).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::LabImage;
use crate::error::{Error, Result};

pub const BINS: usize = 101;

/// Pixels at or above this L* count as background when exclusion is on.
pub const DEFAULT_BACKGROUND_THRESHOLD: f64 = 98.0;

/// Pixel counts per integer L* step; bin `i` holds pixels with `round(L*) = i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LStarHistogram {
    bins: [u64; BINS],
    total: u64,
}

impl LStarHistogram {
    pub fn from_bins(bins: [u64; BINS]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[u64; BINS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count-weighted mean of the bin centers.
    pub fn mean(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::ZeroTotal);
        }
        let sum: f64 = self.bins.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
        Ok(sum / self.total as f64)
    }

    fn add(&mut self, l: f64) {
        let bin = l.round().clamp(0.0, 100.0) as usize;
        self.bins[bin] += 1;
        self.total += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageCategory {
    HighKey,
    NormalKey,
    LowKey,
}

impl ImageCategory {
    pub const ALL: [ImageCategory; 3] = [Self::HighKey, Self::NormalKey, Self::LowKey];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HighKey => "high-key",
            Self::NormalKey => "normal-key",
            Self::LowKey => "low-key",
        }
    }
}

impl fmt::Display for ImageCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "high-key" | "highkey" | "high" => Ok(Self::HighKey),
            "normal-key" | "normalkey" | "normal" => Ok(Self::NormalKey),
            "low-key" | "lowkey" | "low" => Ok(Self::LowKey),
            other => Err(Error::InvalidArgument(format!("unknown image category `{other}`"))),
        }
    }
}

/// Band borders on the L* axis: low `[0, normal_min)`, normal
/// `[normal_min, high_min)`, high `[high_min, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryBands {
    pub normal_min: f64,
    pub high_min: f64,
}

impl Default for CategoryBands {
    fn default() -> Self {
        Self {
            normal_min: 40.0,
            high_min: 60.0,
        }
    }
}

impl CategoryBands {
    pub fn new(normal_min: f64, high_min: f64) -> Result<Self> {
        if !(0.0 < normal_min && normal_min < high_min && high_min <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "band borders must satisfy 0 < {normal_min} < {high_min} <= 100"
            )));
        }
        Ok(Self { normal_min, high_min })
    }

    /// The band an L* value falls into.
    pub fn band_of(&self, l: f64) -> ImageCategory {
        if l >= self.high_min {
            ImageCategory::HighKey
        } else if l >= self.normal_min {
            ImageCategory::NormalKey
        } else {
            ImageCategory::LowKey
        }
    }

    pub fn contains(&self, category: ImageCategory, l: f64) -> bool {
        self.band_of(l) == category
    }
}

/// Fraction of histogram mass in each band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandMasses {
    pub high: f64,
    pub normal: f64,
    pub low: f64,
}

impl BandMasses {
    pub fn get(&self, category: ImageCategory) -> f64 {
        match category {
            ImageCategory::HighKey => self.high,
            ImageCategory::NormalKey => self.normal,
            ImageCategory::LowKey => self.low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifyPolicy {
    #[default]
    MaxBandMass,
    MeanL,
}

impl FromStr for ClassifyPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-band-mass" | "max" => Ok(Self::MaxBandMass),
            "mean-l" | "mean" => Ok(Self::MeanL),
            other => Err(Error::InvalidArgument(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramOptions {
    pub exclude_background: bool,
    pub background_threshold: f64,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        Self {
            exclude_background: false,
            background_threshold: DEFAULT_BACKGROUND_THRESHOLD,
        }
    }
}

pub fn lstar_histogram(img: &LabImage, opts: HistogramOptions) -> Result<LStarHistogram> {
    if img.pixels().is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut hist = LStarHistogram::from_bins([0; BINS]);
    for px in img.pixels() {
        if opts.exclude_background && px.l >= opts.background_threshold {
            continue;
        }
        hist.add(px.l);
    }
    Ok(hist)
}

pub fn band_masses(h: &LStarHistogram, bands: &CategoryBands) -> Result<BandMasses> {
    if h.total == 0 {
        return Err(Error::ZeroTotal);
    }
    let mut counts = [0u64; 3];
    for (i, &n) in h.bins.iter().enumerate() {
        let slot = match bands.band_of(i as f64) {
            ImageCategory::HighKey => 0,
            ImageCategory::NormalKey => 1,
            ImageCategory::LowKey => 2,
        };
        counts[slot] += n;
    }
    let total = h.total as f64;
    Ok(BandMasses {
        high: counts[0] as f64 / total,
        normal: counts[1] as f64 / total,
        low: counts[2] as f64 / total,
    })
}

pub fn classify(h: &LStarHistogram, bands: &CategoryBands, policy: ClassifyPolicy) -> Result<ImageCategory> {
    match policy {
        ClassifyPolicy::MaxBandMass => {
            let masses = band_masses(h, bands)?;
            // Ties resolve toward the darker category.
            let order = [ImageCategory::LowKey, ImageCategory::NormalKey, ImageCategory::HighKey];
            let mut best = order[0];
            for &c in &order[1..] {
                if masses.get(c) > masses.get(best) {
                    best = c;
                }
            }
            Ok(best)
        }
        ClassifyPolicy::MeanL => Ok(bands.band_of(h.mean()?)),
    }
}
