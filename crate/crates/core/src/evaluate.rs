//! Objective and subjective evaluation of reproductions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::{delta_e76, Lab, LabImage};
use crate::error::{Error, Result};
use crate::press::MeasurementSet;

pub const DEFAULT_SHADOW_THRESHOLD: f64 = 1.0;
pub const DEFAULT_SHADOW_BAND_MAX: f64 = 40.0;
pub const DEFAULT_BT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_BT_MAX_ITER: usize = 10_000;

/// Number of distinguishable dark steps on a gray scale: adjacent pairs in
/// `order` that both lie at or below `band_max` and differ in L* by at least
/// `threshold`.
///
/// ```
/// use keytone::color::Lab;
/// use keytone::evaluate::shadow_detail_count;
/// use keytone::press::{MeasurementSet, MeasurementSource};
///
/// let mut m = MeasurementSet::new(MeasurementSource::Simulated("demo".into()));
/// let ids: Vec<String> = ["a", "b", "c", "d"].map(String::from).to_vec();
/// for (id, l) in ids.iter().zip([10.0, 20.0, 39.0, 60.0]) {
///     m.insert(id.clone(), Lab::new(l, 0.0, 0.0)).unwrap();
/// }
/// assert_eq!(shadow_detail_count(&m, &ids, 1.0, 40.0).unwrap(), 2);
/// ```
pub fn shadow_detail_count(meas: &MeasurementSet, order: &[String], threshold: f64, band_max: f64) -> Result<usize> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let lightness = order
        .iter()
        .map(|id| {
            meas.get(id)
                .map(|lab| lab.l)
                .ok_or_else(|| Error::MissingPatch(id.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(lightness
        .windows(2)
        .filter(|w| w[0] <= band_max && w[1] <= band_max && (w[1] - w[0]).abs() >= threshold)
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEReport {
    pub mean: f64,
    pub max: f64,
    pub p95: f64,
    pub pixels: usize,
}

pub fn delta_e_report(original: &LabImage, reproduced: &LabImage) -> Result<DeltaEReport> {
    delta_e_report_where(original, reproduced, |_| true)
}

/// ΔE76 statistics over the pixels whose original color satisfies `keep`.
pub fn delta_e_report_where(
    original: &LabImage,
    reproduced: &LabImage,
    keep: impl Fn(Lab) -> bool,
) -> Result<DeltaEReport> {
    if original.width() != reproduced.width() || original.height() != reproduced.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            original.width(),
            original.height(),
            reproduced.width(),
            reproduced.height()
        )));
    }
    let mut d: Vec<f64> = original
        .pixels()
        .iter()
        .zip(reproduced.pixels())
        .filter(|(o, _)| keep(**o))
        .map(|(o, r)| delta_e76(*o, *r))
        .collect();
    if d.is_empty() {
        return Err(Error::EmptyInput);
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Ok(DeltaEReport {
        mean: d.iter().sum::<f64>() / n as f64,
        max: d[n - 1],
        p95: d[rank - 1],
        pixels: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    #[serde(alias = "left")]
    Left,
    #[serde(alias = "right")]
    Right,
}

/// One forced-choice decision of one judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub session_id: String,
    pub judge_id: String,
    pub pair_id: String,
    pub left: String,
    pub right: String,
    pub choice: Choice,
    /// ISO-8601 date and time.
    pub timestamp: String,
}

impl Judgment {
    pub fn winner(&self) -> &str {
        match self.choice {
            Choice::Left => &self.left,
            Choice::Right => &self.right,
        }
    }

    pub fn loser(&self) -> &str {
        match self.choice {
            Choice::Left => &self.right,
            Choice::Right => &self.left,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("session_id", &self.session_id),
            ("judge_id", &self.judge_id),
            ("pair_id", &self.pair_id),
            ("left", &self.left),
            ("right", &self.right),
        ] {
            if v.trim().is_empty() {
                return Err(Error::InvalidArgument(format!("judgment field `{name}` is empty")));
            }
        }
        if self.left == self.right {
            return Err(Error::InvalidArgument(format!(
                "judgment compares `{}` with itself",
                self.left
            )));
        }
        if !looks_like_iso8601(&self.timestamp) {
            return Err(Error::InvalidArgument(format!(
                "timestamp `{}` is not ISO-8601",
                self.timestamp
            )));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// `YYYY-MM-DDTHH:MM` followed by anything (seconds, fraction, zone).
fn looks_like_iso8601(s: &str) -> bool {
    let b = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| r.into_iter().all(|i| b.get(i).is_some_and(u8::is_ascii_digit));
    b.len() >= 16
        && digits(0..4)
        && b[4] == b'-'
        && digits(5..7)
        && b[7] == b'-'
        && digits(8..10)
        && (b[10] == b'T' || b[10] == b't' || b[10] == b' ')
        && digits(11..13)
        && b[13] == b':'
        && digits(14..16)
}

/// Reads JSON-lines judgments; blank lines are skipped.
pub fn parse_judgments(reader: impl BufRead) -> Result<Vec<Judgment>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let j: Judgment = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        j.validate().map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(j);
    }
    Ok(out)
}

pub fn read_judgments(path: &Path) -> Result<Vec<Judgment>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    /// Wins per judged variant.
    pub points: BTreeMap<String, u64>,
    /// Bradley–Terry strengths summing to 1, when they could be fitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strengths: Option<BTreeMap<String, f64>>,
    pub n_judgments: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl RankingResult {
    /// Plain-text table sorted by points, then name.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(&String, &u64)> = self.points.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(7);
        let mut out = format!("{:<width$}  {:>6}  {:>8}\n", "variant", "points", "strength");
        for (name, pts) in rows {
            let strength = self
                .strengths
                .as_ref()
                .and_then(|s| s.get(name))
                .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{name:<width$}  {pts:>6}  {strength:>8}");
        }
        let _ = writeln!(out, "judgments: {}", self.n_judgments);
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// One point per win. Variants that never appear are absent.
pub fn score_points(judgments: &[Judgment]) -> Result<RankingResult> {
    if judgments.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut points = BTreeMap::new();
    for j in judgments {
        *points.entry(j.winner().to_string()).or_insert(0) += 1;
        points.entry(j.loser().to_string()).or_insert(0);
    }
    Ok(RankingResult {
        points,
        strengths: None,
        n_judgments: judgments.len(),
        iterations: None,
        warning: None,
    })
}

/// Connected components of the comparison graph, each sorted, in order of
/// their smallest name.
fn components(names: &[String], judgments: &[Judgment]) -> Vec<Vec<String>> {
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..names.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in judgments {
        let (a, b) = (index[j.left.as_str()], index[j.right.as_str()]);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(name.clone());
    }
    groups.into_values().collect()
}

/// Bradley–Terry strengths by minorization–maximization, normalized to sum
/// to 1. Converges when the largest relative change drops below `tol`.
///
/// A variant without a win or without a loss has no finite estimate; the
/// result then carries points only, with a warning.
///
/// ```
/// use keytone::evaluate::{bradley_terry, Choice, Judgment};
///
/// let j = |choice| Judgment {
///     session_id: "s".into(),
///     judge_id: "j".into(),
///     pair_id: "p".into(),
///     left: "A".into(),
///     right: "B".into(),
///     choice,
///     timestamp: "2024-01-01T00:00:00Z".into(),
/// };
/// let r = bradley_terry(&[j(Choice::Left), j(Choice::Left), j(Choice::Left), j(Choice::Right)], 10_000, 1e-10).unwrap();
/// let s = r.strengths.unwrap();
/// assert!((s["A"] / s["B"] - 3.0).abs() < 1e-6);
/// ```
pub fn bradley_terry(judgments: &[Judgment], max_iter: usize, tol: f64) -> Result<RankingResult> {
    let mut result = score_points(judgments)?;
    let names: Vec<String> = result.points.keys().cloned().collect();
    let comps = components(&names, judgments);
    if comps.len() > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let n = names.len();
    let mut wins = vec![0.0; n];
    let mut losses = vec![0.0; n];
    let mut games = vec![vec![0.0; n]; n];
    for j in judgments {
        let (w, l) = (index[j.winner()], index[j.loser()]);
        wins[w] += 1.0;
        losses[l] += 1.0;
        games[w][l] += 1.0;
        games[l][w] += 1.0;
    }
    let degenerate: Vec<&str> = (0..n)
        .filter(|&i| wins[i] == 0.0 || losses[i] == 0.0)
        .map(|i| names[i].as_str())
        .collect();
    if !degenerate.is_empty() {
        result.warning = Some(format!(
            "Bradley-Terry is degenerate: {} never won or never lost; reporting points only",
            degenerate.join(", ")
        ));
        return Ok(result);
    }
    let mut p = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut next: Vec<f64> = (0..n)
            .map(|i| {
                let denom: f64 = (0..n)
                    .filter(|&k| k != i && games[i][k] > 0.0)
                    .map(|k| games[i][k] / (p[i] + p[k]))
                    .sum();
                wins[i] / denom
            })
            .collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        p = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        result.warning = Some(format!("Bradley-Terry did not converge in {max_iter} iterations"));
    }
    result.iterations = Some(iterations);
    result.strengths = Some(names.into_iter().zip(p).collect());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::press::MeasurementSource;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn judgment(left: &str, right: &str, choice: Choice) -> Judgment {
        Judgment {
            session_id: "s1".into(),
            judge_id: "j1".into(),
            pair_id: format!("{left}-{right}"),
            left: left.into(),
            right: right.into(),
            choice,
            timestamp: "2024-05-01T12:00:00Z".into(),
        }
    }

    fn wins(a: &str, b: &str, times: usize) -> Vec<Judgment> {
        vec![judgment(a, b, Choice::Left); times]
    }

    fn ramp(ls: &[f64]) -> (MeasurementSet, Vec<String>) {
        let mut m = MeasurementSet::new(MeasurementSource::Simulated("t".into()));
        let ids: Vec<String> = (0..ls.len()).map(|i| format!("P{i}")).collect();
        for (id, &l) in ids.iter().zip(ls) {
            m.insert(id.clone(), Lab::new(l, 0.0, 0.0)).unwrap();
        }
        (m, ids)
    }

    #[test]
    fn shadow_detail_examples() {
        let (m, ids) = ramp(&[10.0, 12.0, 14.0, 36.0]);
        assert_eq!(shadow_detail_count(&m, &ids, 1.0, 40.0).unwrap(), 3);
        let (m, ids) = ramp(&[10.0, 10.2, 10.4]);
        assert_eq!(shadow_detail_count(&m, &ids, 1.0, 40.0).unwrap(), 0);
        let (m, ids) = ramp(&[10.0, 20.0, 39.0, 60.0]);
        assert_eq!(shadow_detail_count(&m, &ids, 1.0, 40.0).unwrap(), 2);
    }

    #[test]
    fn shadow_detail_errors() {
        let (m, mut ids) = ramp(&[10.0, 12.0]);
        assert!(shadow_detail_count(&m, &ids, 0.0, 40.0).is_err());
        ids.push("missing".into());
        assert!(matches!(
            shadow_detail_count(&m, &ids, 1.0, 40.0),
            Err(Error::MissingPatch(_))
        ));
    }

    #[test]
    fn delta_e_examples() {
        let a = LabImage::filled(3, 2, Lab::new(30.0, 4.0, -2.0)).unwrap();
        let r = delta_e_report(&a, &a).unwrap();
        assert_eq!((r.mean, r.max, r.p95), (0.0, 0.0, 0.0));
        let b = a.map(|p| Lab::new(p.l + 10.0, p.a, p.b));
        let r = delta_e_report(&a, &b).unwrap();
        assert!((r.mean - 10.0).abs() < 1e-12 && (r.max - 10.0).abs() < 1e-12);
        let c = LabImage::filled(2, 3, Lab::default()).unwrap();
        assert!(matches!(delta_e_report(&a, &c), Err(Error::DimensionMismatch(_))));
        assert!(delta_e_report_where(&a, &b, |_| false).is_err());
    }

    #[test]
    fn points_examples() {
        let mut j = wins("A", "B", 3);
        j.push(judgment("A", "B", Choice::Right));
        let r = score_points(&j).unwrap();
        assert_eq!(r.points["A"], 3);
        assert_eq!(r.points["B"], 1);
        let r = score_points(&wins("X", "Y", 1)).unwrap();
        assert_eq!((r.points["X"], r.points["Y"]), (1, 0));
        assert!(!r.points.contains_key("Z"));
        assert!(score_points(&[]).is_err());
    }

    #[test]
    fn two_variant_closed_form() {
        let mut j = wins("A", "B", 3);
        j.push(judgment("B", "A", Choice::Left));
        let s = bradley_terry(&j, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE)
            .unwrap()
            .strengths
            .unwrap();
        assert!((s["A"] / s["B"] - 3.0).abs() < 1e-6);
        assert!((s["A"] + s["B"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_round_robin_is_uniform() {
        let names = ["A", "B", "C", "D"];
        let mut j = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                j.extend(wins(a, b, 2));
                j.extend(wins(b, a, 2));
            }
        }
        let s = bradley_terry(&j, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE)
            .unwrap()
            .strengths
            .unwrap();
        for v in s.values() {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn monte_carlo_recovery() {
        let truth = [("A", 0.5), ("B", 0.3), ("C", 0.2)];
        let mut rng = ChaCha8Rng::seed_from_u64(1983);
        let mut j = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            let i = rng.random_range(0..3);
            let k = (i + rng.random_range(1..3)) % 3;
            let (a, b) = (truth[i], truth[k]);
            let choice = if rng.random::<f64>() < a.1 / (a.1 + b.1) {
                Choice::Left
            } else {
                Choice::Right
            };
            j.push(judgment(a.0, b.0, choice));
        }
        let s = bradley_terry(&j, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE)
            .unwrap()
            .strengths
            .unwrap();
        for (name, p) in truth {
            assert!((s[name] - p).abs() <= 0.02, "{name}: {} vs {p}", s[name]);
        }
    }

    #[test]
    fn disconnected_graph_lists_components() {
        let mut j = wins("A", "B", 1);
        j.extend(wins("B", "A", 1));
        j.extend(wins("C", "D", 1));
        j.extend(wins("D", "C", 1));
        match bradley_terry(&j, 100, 1e-10) {
            Err(Error::Disconnected { components }) => {
                assert_eq!(
                    components,
                    vec![vec!["A".to_string(), "B".into()], vec!["C".into(), "D".into()]]
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_returns_points_with_warning() {
        let r = bradley_terry(&wins("A", "B", 3), 100, 1e-10).unwrap();
        assert!(r.strengths.is_none());
        assert!(r.warning.unwrap().contains("degenerate"));
        assert_eq!(r.points["A"], 3);
    }

    #[test]
    fn judgments_validate_and_round_trip() {
        let j = judgment("A", "B", Choice::Right);
        let line = j.to_json_line().unwrap();
        assert!(line.contains("\"choice\":\"Right\""));
        let back = parse_judgments(line.as_bytes()).unwrap();
        assert_eq!(back, vec![j.clone()]);
        let lower = line.replace("\"Right\"", "\"right\"");
        assert_eq!(parse_judgments(lower.as_bytes()).unwrap()[0].choice, Choice::Right);
        let same = Judgment {
            right: "A".into(),
            ..j.clone()
        };
        assert!(same.validate().is_err());
        let bad_time = Judgment {
            timestamp: "yesterday".into(),
            ..j.clone()
        };
        assert!(bad_time.validate().is_err());
        let text = format!("{line}\nnot json\n");
        assert!(matches!(
            parse_judgments(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn table_lists_every_variant() {
        let mut j = wins("A", "B", 3);
        j.push(judgment("A", "B", Choice::Right));
        let t = bradley_terry(&j, 1000, 1e-10).unwrap().to_table();
        assert!(t.contains("A") && t.contains("B") && t.contains("judgments: 4"));
    }

    fn arb_judgments() -> impl Strategy<Value = Vec<Judgment>> {
        let names = ["A", "B", "C", "D"];
        prop::collection::vec((0..4usize, 1..4usize, any::<bool>()), 1..60).prop_map(move |v| {
            v.into_iter()
                .map(|(i, d, left)| {
                    judgment(
                        names[i],
                        names[(i + d) % 4],
                        if left { Choice::Left } else { Choice::Right },
                    )
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn points_sum_to_judgments(j in arb_judgments()) {
            let r = score_points(&j).unwrap();
            prop_assert_eq!(r.points.values().sum::<u64>() as usize, j.len());
        }

        #[test]
        fn duplication_and_relabeling_leave_strengths_unchanged(j in arb_judgments()) {
            let Ok(r) = bradley_terry(&j, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE) else { return Ok(()) };
            let Some(s) = r.strengths else { return Ok(()) };
            let doubled: Vec<Judgment> = j.iter().chain(&j).cloned().collect();
            let s2 = bradley_terry(&doubled, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE).unwrap().strengths.unwrap();
            for (k, v) in &s {
                prop_assert!((v - s2[k]).abs() < 1e-6);
            }
            let rename = |n: &str| format!("v-{n}");
            let relabeled: Vec<Judgment> = j
                .iter()
                .map(|x| Judgment { left: rename(&x.left), right: rename(&x.right), ..x.clone() })
                .collect();
            let s3 = bradley_terry(&relabeled, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE).unwrap().strengths.unwrap();
            for (k, v) in &s {
                prop_assert!((v - s3[&rename(k)]).abs() < 1e-6);
            }
        }

        #[test]
        fn shadow_count_is_non_increasing_in_threshold(
            ls in prop::collection::vec(0.0..100.0f64, 2..30),
            t1 in 0.01..5.0f64,
            dt in 0.0..5.0f64,
        ) {
            let (m, ids) = ramp(&ls);
            let a = shadow_detail_count(&m, &ids, t1, 40.0).unwrap();
            let b = shadow_detail_count(&m, &ids, t1 + dt, 40.0).unwrap();
            prop_assert!(b <= a);
        }

        #[test]
        fn mean_never_exceeds_max(
            px in prop::collection::vec((0.0..100.0f64, -50.0..50.0f64, -50.0..50.0f64), 6),
            qx in prop::collection::vec((0.0..100.0f64, -50.0..50.0f64, -50.0..50.0f64), 6),
        ) {
            let img = |v: &[(f64, f64, f64)]| LabImage::new(3, 2, v.iter().map(|&(l, a, b)| Lab::new(l, a, b)).collect()).unwrap();
            let r = delta_e_report(&img(&px), &img(&qx)).unwrap();
            prop_assert!(r.mean <= r.max + 1e-12);
            prop_assert!(r.p95 <= r.max);
        }
    }
}
