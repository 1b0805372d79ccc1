//! Forward characterization: a press model fitted to chart measurements.

use indexmap::IndexMap;
use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, InkCoverage, TestChart};
use crate::color::{delta_e76, lab_to_xyz, Lab, Xyz};
use crate::error::{Error, Result};
use crate::press::{
    demichel_weights, primary_name, MeasurementSet, PressModel, ToneCurve, PRIMARY_COUNT, TVI_KNOTS, WHITE,
};

pub const MIN_PATCHES: usize = 20;

/// Smallest Demichel weight a primary must reach on some patch to count as
/// exercised by the chart.
pub const MIN_PRIMARY_WEIGHT: f64 = 0.01;

/// Black coverage that counts as a high-K patch.
pub const HIGH_K: f64 = 0.8;

const N_MIN: f64 = 1.0;
const N_MAX: f64 = 3.0;
const N_STEP: f64 = 0.1;
const KNOT_SMOOTHING: f64 = 1e-2;

/// A fitted press model with its residuals on the training patches.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub model: PressModel,
    /// ΔE76 between prediction and measurement, per patch id in chart order.
    pub residuals: IndexMap<String, f64>,
    pub mean_delta_e: f64,
    pub max_delta_e: f64,
    /// Chart the measurements came from.
    pub source: ChartKind,
}

/// Residual summary in the shape written to reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub yule_nielsen_n: f64,
    pub mean_delta_e: f64,
    pub max_delta_e: f64,
    pub patches: usize,
}

impl ForwardModel {
    pub fn summary(&self) -> ResidualSummary {
        ResidualSummary {
            yule_nielsen_n: self.model.yule_nielsen_n,
            mean_delta_e: self.mean_delta_e,
            max_delta_e: self.max_delta_e,
            patches: self.residuals.len(),
        }
    }
}

struct Sample<'a> {
    id: &'a str,
    coverage: InkCoverage,
    lab: Lab,
    xyz: Xyz,
}

/// Fits the sixteen primaries, the four tone curves and (unless `n_fixed` is
/// given) the Yule–Nielsen factor to the measured patches of `chart`.
///
/// Paper white is pinned to the mean measurement of the unprinted patches.
/// Tone curves come from the single-ink patches of each ink, the remaining
/// primaries from linear least squares in Yule–Nielsen space, and `n` from a
/// grid search over `1.0..=3.0` in steps of 0.1, keeping the lowest mean ΔE.
pub fn fit_forward(meas: &MeasurementSet, chart: &TestChart, n_fixed: Option<f64>) -> Result<ForwardModel> {
    let samples: Vec<Sample> = chart
        .patches
        .iter()
        .filter_map(|p| {
            meas.get(&p.id).map(|lab| Sample {
                id: &p.id,
                coverage: p.coverage,
                lab,
                xyz: lab_to_xyz(lab),
            })
        })
        .collect();
    if samples.len() < MIN_PATCHES {
        return Err(Error::InsufficientPatches(format!(
            "{} measured chart patches, need at least {MIN_PATCHES}",
            samples.len()
        )));
    }
    check_rank(&samples)?;
    let whites: Vec<&Sample> = samples.iter().filter(|s| s.coverage.is_white()).collect();
    if whites.is_empty() {
        return Err(Error::InsufficientPatches("no paper-white patch measured".into()));
    }
    if !samples.iter().any(|s| s.coverage.k >= HIGH_K) {
        return Err(Error::InsufficientPatches(format!(
            "no patch with black coverage >= {HIGH_K}"
        )));
    }
    let white = mean_xyz(whites.iter().map(|s| s.xyz));

    let candidates: Vec<f64> = match n_fixed {
        Some(n) => {
            if !(n >= 1.0 && n.is_finite()) {
                return Err(Error::InvalidArgument(format!("Yule-Nielsen n must be >= 1, got {n}")));
            }
            vec![n]
        }
        None => {
            let steps = ((N_MAX - N_MIN) / N_STEP).round() as usize;
            // divide rather than accumulate so grid points are the nearest doubles to 1.1, 1.2, ...
            (0..=steps)
                .map(|i| (N_MIN / N_STEP + i as f64) / (1.0 / N_STEP))
                .collect()
        }
    };

    let mut best: Option<(f64, PressModel, Vec<f64>)> = None;
    for n in candidates {
        let model = fit_at(&samples, white, n)?;
        let predictor = model.predictor();
        let errors: Vec<f64> = samples
            .iter()
            .map(|s| delta_e76(predictor.predict(&s.coverage), s.lab))
            .collect();
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        if best.as_ref().is_none_or(|(m, _, _)| mean < *m) {
            best = Some((mean, model, errors));
        }
    }
    let (mean, model, errors) = best.expect("at least one candidate n");
    let max = errors.iter().copied().fold(0.0, f64::max);
    Ok(ForwardModel {
        model,
        residuals: samples.iter().zip(errors).map(|(s, e)| (s.id.to_string(), e)).collect(),
        mean_delta_e: mean,
        max_delta_e: max,
        source: chart.kind,
    })
}

fn mean_xyz(it: impl Iterator<Item = Xyz>) -> Xyz {
    let (mut acc, mut n) = ([0.0; 3], 0.0);
    for x in it {
        for (a, v) in acc.iter_mut().zip(x.to_array()) {
            *a += v;
        }
        n += 1.0;
    }
    Xyz::from_array(acc.map(|a| a / n))
}

/// Every primary must carry a noticeable Demichel weight somewhere. Nominal
/// coverages are used, since dot gain only ever raises a nonzero coverage.
fn check_rank(samples: &[Sample]) -> Result<()> {
    let mut max_w = [0.0f64; PRIMARY_COUNT];
    for s in samples {
        for (m, w) in max_w.iter_mut().zip(demichel_weights(&s.coverage)) {
            *m = m.max(w);
        }
    }
    let missing: Vec<String> = (0..PRIMARY_COUNT)
        .filter(|&i| max_w[i] <= MIN_PRIMARY_WEIGHT)
        .map(primary_name)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { missing })
    }
}

fn linearize(x: Xyz, n: f64) -> [f64; 3] {
    x.to_array().map(|v| v.max(0.0).powf(1.0 / n))
}

fn fit_at(samples: &[Sample], white: Xyz, n: f64) -> Result<PressModel> {
    let w_lin = linearize(white, n);
    let lin: Vec<[f64; 3]> = samples.iter().map(|s| linearize(s.xyz, n)).collect();

    let mut tvi = [ToneCurve::IDENTITY; 4];
    for (ink, curve) in tvi.iter_mut().enumerate() {
        *curve = fit_tone_curve(samples, &lin, w_lin, ink)?;
    }

    // Rows: patches; columns: the 15 printed primaries.
    let rows = samples.len();
    let mut a = DMatrix::<f64>::zeros(rows, PRIMARY_COUNT - 1);
    let mut b = DMatrix::<f64>::zeros(rows, 3);
    for (r, (s, p)) in samples.iter().zip(&lin).enumerate() {
        let effective = InkCoverage {
            c: tvi[0].eval(s.coverage.c),
            m: tvi[1].eval(s.coverage.m),
            y: tvi[2].eval(s.coverage.y),
            k: tvi[3].eval(s.coverage.k),
        };
        let w = demichel_weights(&effective);
        for i in 1..PRIMARY_COUNT {
            a[(r, i - 1)] = w[i];
        }
        for ch in 0..3 {
            b[(r, ch)] = p[ch] - w[WHITE] * w_lin[ch];
        }
    }
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidModel(format!("primary least squares failed: {e}")))?;

    let mut primaries = [white; PRIMARY_COUNT];
    for i in 1..PRIMARY_COUNT {
        let mut xyz = [0.0; 3];
        for ch in 0..3 {
            xyz[ch] = x[(i - 1, ch)].max(0.0).powf(n);
        }
        xyz[1] = xyz[1].min(white.y);
        primaries[i] = Xyz::from_array(xyz);
    }
    let model = PressModel {
        name: format!("fitted (n = {n:.1})"),
        primaries,
        tvi,
        yule_nielsen_n: n,
    };
    model.validate()?;
    Ok(model)
}

/// Effective coverages of one ink's single-ink patches, read off by
/// projecting each linearized measurement onto the segment from paper white
/// to the measured solid, then smoothed onto the eleven knots.
fn fit_tone_curve(samples: &[Sample], lin: &[[f64; 3]], w: [f64; 3], ink: usize) -> Result<ToneCurve> {
    let single: Vec<(f64, [f64; 3])> = samples
        .iter()
        .zip(lin)
        .filter_map(|(s, p)| {
            let inks = s.coverage.to_array();
            let only = inks.iter().enumerate().all(|(i, &v)| i == ink || v == 0.0);
            (only && inks[ink] > 0.0).then_some((inks[ink], *p))
        })
        .collect();
    let solids: Vec<[f64; 3]> = single.iter().filter(|(u, _)| *u == 1.0).map(|(_, p)| *p).collect();
    if solids.is_empty() {
        return Ok(ToneCurve::IDENTITY);
    }
    let mut s = [0.0; 3];
    for p in &solids {
        for ch in 0..3 {
            s[ch] += p[ch] / solids.len() as f64;
        }
    }
    let d = [s[0] - w[0], s[1] - w[1], s[2] - w[2]];
    let dd: f64 = d.iter().map(|v| v * v).sum();
    if dd <= 0.0 {
        return Ok(ToneCurve::IDENTITY);
    }
    let points: Vec<(f64, f64)> = single
        .iter()
        .filter(|(u, _)| *u < 1.0)
        .map(|(u, p)| {
            let e = (0..3).map(|ch| (p[ch] - w[ch]) * d[ch]).sum::<f64>() / dd;
            (*u, e.clamp(0.0, 1.0))
        })
        .collect();
    if points.is_empty() {
        return Ok(ToneCurve::IDENTITY);
    }
    ToneCurve::new(fit_knots(&points))
}

/// Knot values for a piecewise-linear curve through `points` with the end
/// knots fixed at 0 and 1. A symmetric dot-gain curve `u + 4g·u(1 − u)` is
/// fitted first; the knots then follow the data through smoothed deviations
/// from it, so knots the data barely touch fall back to that shape.
fn fit_knots(points: &[(f64, f64)]) -> [f64; TVI_KNOTS] {
    const FREE: usize = TVI_KNOTS - 2;
    let q = |u: f64| 4.0 * u * (1.0 - u);
    let (num, den) = points
        .iter()
        .fold((0.0, 0.0), |(n, d), &(u, e)| (n + q(u) * (e - u), d + q(u) * q(u)));
    let gain = if den > 0.0 { (num / den).clamp(0.0, 0.25) } else { 0.0 };
    let base = |u: f64| u + gain * q(u);

    let mut ata = SMatrix::<f64, FREE, FREE>::zeros();
    let mut atb = SVector::<f64, FREE>::zeros();
    // one equation over the interior knots of the deviation
    let mut add = |coef: [f64; TVI_KNOTS], rhs: f64, weight: f64| {
        for i in 0..FREE {
            atb[i] += weight * coef[i + 1] * rhs;
            for j in 0..FREE {
                ata[(i, j)] += weight * coef[i + 1] * coef[j + 1];
            }
        }
    };
    for &(u, e) in points {
        let x = u * 10.0;
        let i = (x.floor() as usize).min(TVI_KNOTS - 2);
        let t = x - i as f64;
        let mut coef = [0.0; TVI_KNOTS];
        coef[i] = 1.0 - t;
        coef[i + 1] = t;
        add(coef, e - base(u), 1.0);
    }
    for i in 1..TVI_KNOTS - 1 {
        let mut coef = [0.0; TVI_KNOTS];
        coef[i - 1] = 1.0;
        coef[i] = -2.0;
        coef[i + 1] = 1.0;
        add(coef, 0.0, KNOT_SMOOTHING);
    }
    let deviation = ata.lu().solve(&atb).unwrap_or_else(SVector::zeros);
    let mut knots = [0.0; TVI_KNOTS];
    knots[TVI_KNOTS - 1] = 1.0;
    let mut prev = 0.0;
    for i in 1..TVI_KNOTS - 1 {
        let v = (base(i as f64 / 10.0) + deviation[i - 1]).clamp(prev, 1.0);
        knots[i] = v;
        prev = v;
    }
    knots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{gray_scale, standard_chart, Patch};
    use crate::press::{simulate_print, MeasurementNoise, PaperPreset};

    fn fit_preset(preset: PaperPreset, chart: &TestChart) -> ForwardModel {
        let meas = simulate_print(chart, &preset.model(), None).unwrap();
        fit_forward(&meas, chart, None).unwrap()
    }

    #[test]
    fn self_consistent_on_standard_chart() {
        for preset in [PaperPreset::Coated, PaperPreset::Uncoated] {
            let fwd = fit_preset(preset, &standard_chart());
            assert!(fwd.mean_delta_e <= 0.1, "{preset}: mean {}", fwd.mean_delta_e);
            assert!(fwd.max_delta_e <= 0.5, "{preset}: max {}", fwd.max_delta_e);
            assert!((fwd.model.yule_nielsen_n - preset.model().yule_nielsen_n).abs() < 1e-9);
            assert_eq!(fwd.residuals.len(), 432);
        }
    }

    #[test]
    fn paper_white_is_pinned_to_its_measurement() {
        let chart = standard_chart();
        assert_eq!(chart.patches.iter().filter(|p| p.coverage.is_white()).count(), 1);
        let meas = simulate_print(
            &chart,
            &PaperPreset::Coated.model(),
            Some(MeasurementNoise { sigma: 0.5, seed: 3 }),
        )
        .unwrap();
        let fwd = fit_forward(&meas, &chart, None).unwrap();
        let measured = lab_to_xyz(meas.get("R0C0").unwrap());
        let fitted = fwd.model.primaries[WHITE];
        for (a, b) in measured.to_array().into_iter().zip(fitted.to_array()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn k_ramp_only_names_chromatic_primaries() {
        let chart = gray_scale(24, 1.0 / 24.0, 1.0).unwrap();
        let meas = simulate_print(&chart, &PaperPreset::Coated.model(), None).unwrap();
        match fit_forward(&meas, &chart, None) {
            Err(Error::RankDeficient { missing }) => {
                assert_eq!(missing.len(), 14);
                for name in ["C", "M", "Y", "CMY", "CMYK"] {
                    assert!(missing.iter().any(|m| m == name), "{name} not reported");
                }
                assert!(!missing.iter().any(|m| m == "W" || m == "K"));
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn too_few_patches() {
        let mut chart = standard_chart();
        chart.patches.truncate(19);
        let meas = simulate_print(&chart, &PaperPreset::Coated.model(), None).unwrap();
        assert!(matches!(
            fit_forward(&meas, &chart, None),
            Err(Error::InsufficientPatches(_))
        ));
    }

    #[test]
    fn requires_white_and_high_black() {
        let chart = standard_chart();
        let meas = simulate_print(&chart, &PaperPreset::Coated.model(), None).unwrap();
        let mut no_white = chart.clone();
        no_white.patches.retain(|p: &Patch| !p.coverage.is_white());
        assert!(matches!(
            fit_forward(&meas, &no_white, None),
            Err(Error::InsufficientPatches(_))
        ));
        let mut no_black = chart.clone();
        no_black.patches.retain(|p| p.coverage.k < HIGH_K);
        assert!(fit_forward(&meas, &no_black, None).is_err());
    }

    #[test]
    fn fixed_n_is_respected() {
        let chart = standard_chart();
        let meas = simulate_print(&chart, &PaperPreset::Coated.model(), None).unwrap();
        let fwd = fit_forward(&meas, &chart, Some(2.0)).unwrap();
        assert_eq!(fwd.model.yule_nielsen_n, 2.0);
        assert!(fwd.mean_delta_e > 0.0);
        assert!(fit_forward(&meas, &chart, Some(0.5)).is_err());
    }

    #[test]
    fn knots_recover_a_line_and_stay_monotone() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| (i as f64 / 10.0, i as f64 / 10.0)).collect();
        let k = fit_knots(&pts);
        for (i, v) in k.iter().enumerate() {
            assert!((v - i as f64 / 10.0).abs() < 1e-6);
        }
        let noisy = [(0.3, 0.5), (0.35, 0.4), (0.7, 0.9)];
        let k = fit_knots(&noisy);
        assert!(k.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(k[0], 0.0);
        assert_eq!(k[10], 1.0);
    }

    #[test]
    fn sparse_ramps_fall_back_to_dot_gain_shape() {
        let truth = ToneCurve::mid_tone_gain(0.13).unwrap();
        let pts: Vec<(f64, f64)> = [0.6, 0.8, 0.9].iter().map(|&u| (u, truth.eval(u))).collect();
        let k = fit_knots(&pts);
        for (a, b) in k.iter().zip(truth.knots()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fitted_tone_curves_track_the_press() {
        let fwd = fit_preset(PaperPreset::Uncoated, &standard_chart());
        let truth = PaperPreset::Uncoated.model();
        // ramp steps sit between knots, where the knot prior smooths slightly
        let mut worst: f64 = 0.0;
        for i in 1..100 {
            let u = i as f64 / 100.0;
            for ink in 0..4 {
                worst = worst.max((fwd.model.tvi[ink].eval(u) - truth.tvi[ink].eval(u)).abs());
            }
        }
        assert!(worst < 5e-3, "worst tone-curve error {worst}");
    }
}
