//! CGATS.17-style text files for charts and measurements.
//!
//! ```text
//! CGATS.17
//! ORIGINATOR	"keytone"
//! CHART_KIND	"adapted-new"
//! CATEGORY	"low-key"
//! GAMMA	"2.2"
//! STEPS_PER_RAMP	"8"
//! NUMBER_OF_FIELDS	5
//! BEGIN_DATA_FORMAT
//! SAMPLE_ID	CMYK_C	CMYK_M	CMYK_Y	CMYK_K
//! END_DATA_FORMAT
//! NUMBER_OF_SETS	432
//! BEGIN_DATA
//! R0C0	0.00	0.00	0.00	0.00
//! ...
//! END_DATA
//! ```
//!
//! Chart coverages are written in percent with two decimals. Measurement
//! files carry `LAB_L`, `LAB_A`, `LAB_B` instead. Output uses tabs and LF
//! line endings; the reader also accepts spaces, CRLF and `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use crate::chart::{AdaptationParams, ChartKind, InkCoverage, Patch, TestChart, COLS};
use crate::classify::ImageCategory;
use crate::color::Lab;
use crate::error::{Error, Result};
use crate::press::{MeasurementSet, MeasurementSource};

const CHART_FIELDS: [&str; 5] = ["SAMPLE_ID", "CMYK_C", "CMYK_M", "CMYK_Y", "CMYK_K"];
const LAB_FIELDS: [&str; 4] = ["SAMPLE_ID", "LAB_L", "LAB_A", "LAB_B"];

/// A parsed CGATS document: header keywords in order, the data format and
/// the rows of the data block as raw strings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CgatsDocument {
    pub keywords: Vec<(String, String)>,
    pub fields: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CgatsDocument {
    pub fn keyword(&self, name: &str) -> Option<&str> {
        self.keywords.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f == name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = CgatsDocument::default();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut seen_format = false;
        let mut seen_data = false;
        let mut declared_sets = None;

        let (first, ident) = lines
            .by_ref()
            .find(|(_, l)| !is_blank(l))
            .ok_or_else(|| Error::parse(1, "empty CGATS file"))?;
        if !ident.trim().starts_with("CGATS") {
            return Err(Error::parse(first, "missing CGATS identifier"));
        }

        while let Some((n, line)) = lines.next() {
            if is_blank(line) {
                continue;
            }
            let mut tokens = tokenize(line, n)?;
            let head = tokens.remove(0);
            match head.as_str() {
                "BEGIN_DATA_FORMAT" => {
                    for (n, line) in lines.by_ref() {
                        if is_blank(line) {
                            continue;
                        }
                        let tokens = tokenize(line, n)?;
                        if tokens.first().map(String::as_str) == Some("END_DATA_FORMAT") {
                            seen_format = true;
                            break;
                        }
                        doc.fields.extend(tokens);
                    }
                    if !seen_format {
                        return Err(Error::parse(n, "unterminated BEGIN_DATA_FORMAT"));
                    }
                }
                "BEGIN_DATA" => {
                    if !seen_format {
                        return Err(Error::parse(n, "BEGIN_DATA before data format"));
                    }
                    for (n, line) in lines.by_ref() {
                        if is_blank(line) {
                            continue;
                        }
                        let tokens = tokenize(line, n)?;
                        if tokens.first().map(String::as_str) == Some("END_DATA") {
                            seen_data = true;
                            break;
                        }
                        if tokens.len() != doc.fields.len() {
                            return Err(Error::parse(
                                n,
                                format!("expected {} values, found {}", doc.fields.len(), tokens.len()),
                            ));
                        }
                        doc.rows.push(tokens);
                    }
                    if !seen_data {
                        return Err(Error::parse(n, "unterminated BEGIN_DATA"));
                    }
                }
                "NUMBER_OF_SETS" => {
                    let v = tokens
                        .first()
                        .ok_or_else(|| Error::parse(n, "NUMBER_OF_SETS without value"))?;
                    declared_sets = Some(v.parse::<usize>().map_err(|e| Error::parse(n, e.to_string()))?);
                }
                "NUMBER_OF_FIELDS" => {}
                _ => {
                    doc.keywords.push((head, tokens.join(" ")));
                }
            }
        }
        if !seen_data {
            return Err(Error::parse(0, "no data block"));
        }
        if let Some(sets) = declared_sets {
            if sets != doc.rows.len() {
                return Err(Error::parse(
                    0,
                    format!(
                        "NUMBER_OF_SETS is {sets} but the data block has {} rows",
                        doc.rows.len()
                    ),
                ));
            }
        }
        Ok(doc)
    }

    pub fn write(&self) -> String {
        let mut out = String::from("CGATS.17\n");
        for (k, v) in &self.keywords {
            let _ = writeln!(out, "{k}\t\"{v}\"");
        }
        let _ = writeln!(out, "NUMBER_OF_FIELDS\t{}", self.fields.len());
        out.push_str("BEGIN_DATA_FORMAT\n");
        out.push_str(&self.fields.join("\t"));
        out.push_str("\nEND_DATA_FORMAT\n");
        let _ = writeln!(out, "NUMBER_OF_SETS\t{}", self.rows.len());
        out.push_str("BEGIN_DATA\n");
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out.push_str("END_DATA\n");
        out
    }
}

fn is_blank(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Whitespace-separated tokens, with double-quoted strings kept whole.
fn tokenize(line: &str, n: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut chars = line.trim().chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => return Err(Error::parse(n, "unterminated string")),
                }
            }
            tokens.push(s);
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            tokens.push(s);
        }
    }
    Ok(tokens)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(0, format!("bad {what} value `{s}`")))
}

fn require_fields(doc: &CgatsDocument, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            doc.field_index(name)
                .ok_or_else(|| Error::parse(0, format!("data format lacks {name}")))
        })
        .collect()
}

/// `R{row}C{col}` back to grid coordinates.
fn parse_patch_id(id: &str) -> Option<(usize, usize)> {
    let rest = id.strip_prefix('R')?;
    let (row, col) = rest.split_once('C')?;
    Some((row.parse().ok()?, col.parse().ok()?))
}

pub fn chart_to_cgats(chart: &TestChart) -> String {
    let mut keywords = vec![
        ("ORIGINATOR".to_string(), "keytone".to_string()),
        ("DESCRIPTOR".to_string(), "CMYK printer test chart".to_string()),
        ("CHART_KIND".to_string(), chart.kind.label().to_string()),
    ];
    if let Some(c) = chart.kind.category() {
        keywords.push(("CATEGORY".to_string(), c.to_string()));
    }
    keywords.push(("GAMMA".to_string(), chart.params.gamma.to_string()));
    keywords.push(("STEPS_PER_RAMP".to_string(), chart.params.steps_per_ramp.to_string()));
    let rows = chart
        .patches
        .iter()
        .map(|p| {
            let mut row = vec![p.id.clone()];
            row.extend(p.coverage.to_array().iter().map(|v| format!("{:.2}", v * 100.0)));
            row
        })
        .collect();
    CgatsDocument {
        keywords,
        fields: CHART_FIELDS.iter().map(|s| s.to_string()).collect(),
        rows,
    }
    .write()
}

pub fn chart_from_cgats(text: &str) -> Result<TestChart> {
    let doc = CgatsDocument::parse(text)?;
    let cols = require_fields(&doc, &CHART_FIELDS)?;
    let category = doc.keyword("CATEGORY").map(str::parse::<ImageCategory>).transpose()?;
    let kind = ChartKind::from_parts(doc.keyword("CHART_KIND").unwrap_or("standard"), category)?;
    let params = AdaptationParams {
        gamma: doc
            .keyword("GAMMA")
            .map(|g| parse_f64(g, "GAMMA"))
            .transpose()?
            .unwrap_or(1.0),
        steps_per_ramp: match doc.keyword("STEPS_PER_RAMP") {
            Some(s) => s
                .parse()
                .map_err(|_| Error::parse(0, format!("bad STEPS_PER_RAMP `{s}`")))?,
            None => crate::chart::DEFAULT_STEPS_PER_RAMP,
        },
    };
    let mut patches = Vec::with_capacity(doc.rows.len());
    for (i, row) in doc.rows.iter().enumerate() {
        let id = row[cols[0]].clone();
        let (r, c) = parse_patch_id(&id).unwrap_or((i / COLS, i % COLS));
        let mut inks = [0.0; 4];
        for (slot, &col) in inks.iter_mut().zip(&cols[1..]) {
            *slot = parse_f64(&row[col], "coverage")? / 100.0;
        }
        let coverage = InkCoverage::from_array(inks)?.quantized();
        patches.push(Patch {
            row: r,
            col: c,
            id,
            coverage,
        });
    }
    let chart = TestChart { kind, params, patches };
    chart.validate()?;
    Ok(chart)
}

/// Measurements in chart order, or in insertion order without a chart.
pub fn measurements_to_cgats(set: &MeasurementSet) -> String {
    let source = match &set.source {
        MeasurementSource::Simulated(name) => format!("simulated:{name}"),
        MeasurementSource::File(path) => format!("file:{}", path.display()),
    };
    let rows = set
        .entries
        .iter()
        .map(|(id, lab)| {
            vec![
                id.clone(),
                format!("{:.6}", lab.l),
                format!("{:.6}", lab.a),
                format!("{:.6}", lab.b),
            ]
        })
        .collect();
    CgatsDocument {
        keywords: vec![
            ("ORIGINATOR".to_string(), "keytone".to_string()),
            ("DESCRIPTOR".to_string(), "CIELAB D50 measurements".to_string()),
            ("MEASUREMENT_SOURCE".to_string(), source),
        ],
        fields: LAB_FIELDS.iter().map(|s| s.to_string()).collect(),
        rows,
    }
    .write()
}

pub fn measurements_from_cgats(text: &str, source: MeasurementSource) -> Result<MeasurementSet> {
    let doc = CgatsDocument::parse(text)?;
    let cols = require_fields(&doc, &LAB_FIELDS)?;
    let mut set = MeasurementSet::new(source);
    for row in &doc.rows {
        let lab = Lab::new(
            parse_f64(&row[cols[1]], "LAB_L")?,
            parse_f64(&row[cols[2]], "LAB_A")?,
            parse_f64(&row[cols[3]], "LAB_B")?,
        );
        set.insert(row[cols[0]].clone(), lab)?;
    }
    Ok(set)
}

pub fn read_chart(path: &Path) -> Result<TestChart> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    chart_from_cgats(&text)
}

pub fn write_chart(path: &Path, chart: &TestChart) -> Result<()> {
    std::fs::write(path, chart_to_cgats(chart)).map_err(|e| Error::io(path, e))
}

pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    measurements_from_cgats(&text, MeasurementSource::File(path.to_path_buf()))
}

pub fn write_measurements(path: &Path, set: &MeasurementSet) -> Result<()> {
    std::fs::write(path, measurements_to_cgats(set)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{adapted_chart_new, gray_scale, standard_chart};
    use crate::press::{default_model, simulate_print};
    use proptest::prelude::*;

    #[test]
    fn standard_chart_block_has_432_lines() {
        let text = chart_to_cgats(&standard_chart());
        let start = text.lines().position(|l| l == "BEGIN_DATA").unwrap();
        let end = text.lines().position(|l| l == "END_DATA").unwrap();
        assert_eq!(end - start - 1, 432);
        assert!(text.contains("R0C0\t0.00\t0.00\t0.00\t0.00\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn header_records_adaptation() {
        let chart = adapted_chart_new(ImageCategory::LowKey, &AdaptationParams::default()).unwrap();
        let text = chart_to_cgats(&chart);
        assert!(text.contains("CHART_KIND\t\"adapted-new\""));
        assert!(text.contains("CATEGORY\t\"low-key\""));
        assert!(text.contains("GAMMA\t\"2.2\""));
        assert_eq!(chart_from_cgats(&text).unwrap(), chart);
    }

    #[test]
    fn generation_is_byte_deterministic() {
        assert_eq!(chart_to_cgats(&standard_chart()), chart_to_cgats(&standard_chart()));
    }

    #[test]
    fn measurement_round_trip() {
        let chart = gray_scale(11, 0.0, 1.0).unwrap();
        let set = simulate_print(&chart, &default_model(), None).unwrap();
        let back = measurements_from_cgats(&measurements_to_cgats(&set), set.source.clone()).unwrap();
        assert_eq!(back.len(), set.len());
        for (id, lab) in &set.entries {
            let b = back.get(id).unwrap();
            assert!((b.l - lab.l).abs() < 1e-6 && (b.a - lab.a).abs() < 1e-6 && (b.b - lab.b).abs() < 1e-6);
        }
    }

    #[test]
    fn tolerant_reader() {
        let text = "CGATS.17\r\n# comment\r\nCHART_KIND \"gray-scale\"\r\nBEGIN_DATA_FORMAT\r\nSAMPLE_ID CMYK_C CMYK_M CMYK_Y CMYK_K\r\nEND_DATA_FORMAT\r\nBEGIN_DATA\r\nR0C0 0 0 0 10\r\nR0C1 0 0 0 90.5\r\nEND_DATA\r\n";
        let chart = chart_from_cgats(text).unwrap();
        assert_eq!(chart.kind, ChartKind::GrayScale);
        assert_eq!(chart.patches[1].coverage.k, 0.905);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(CgatsDocument::parse("").is_err());
        assert!(CgatsDocument::parse("NOT_CGATS\n").is_err());
        let short_row =
            "CGATS.17\nBEGIN_DATA_FORMAT\nSAMPLE_ID LAB_L LAB_A LAB_B\nEND_DATA_FORMAT\nBEGIN_DATA\nA 1 2\nEND_DATA\n";
        assert!(CgatsDocument::parse(short_row).is_err());
        let truncated =
            "CGATS.17\nBEGIN_DATA_FORMAT\nSAMPLE_ID LAB_L LAB_A LAB_B\nEND_DATA_FORMAT\nBEGIN_DATA\nA 1 2 3\n";
        assert!(CgatsDocument::parse(truncated).is_err());
        let count = "CGATS.17\nBEGIN_DATA_FORMAT\nSAMPLE_ID LAB_L LAB_A LAB_B\nEND_DATA_FORMAT\nNUMBER_OF_SETS 2\nBEGIN_DATA\nA 1 2 3\nEND_DATA\n";
        assert!(CgatsDocument::parse(count).is_err());
        let dup = "CGATS.17\nBEGIN_DATA_FORMAT\nSAMPLE_ID LAB_L LAB_A LAB_B\nEND_DATA_FORMAT\nBEGIN_DATA\nA 1 2 3\nA 1 2 3\nEND_DATA\n";
        assert!(measurements_from_cgats(dup, MeasurementSource::Simulated("x".into())).is_err());
    }

    proptest! {
        #[test]
        fn chart_round_trip_is_lossless(
            gamma in 0.2..5.0f64,
            cat in prop::sample::select(ImageCategory::ALL.to_vec()),
            remap in any::<bool>(),
        ) {
            let p = AdaptationParams::with_gamma(gamma);
            let chart = if remap {
                crate::chart::adapt_standard_chart(&standard_chart(), cat, &p).unwrap()
            } else {
                adapted_chart_new(cat, &p).unwrap()
            };
            let back = chart_from_cgats(&chart_to_cgats(&chart)).unwrap();
            prop_assert_eq!(back.kind, chart.kind);
            prop_assert_eq!(back.params, chart.params);
            for (a, b) in chart.patches.iter().zip(&back.patches) {
                prop_assert_eq!(&a.id, &b.id);
                for (u, v) in a.coverage.to_array().into_iter().zip(b.coverage.to_array()) {
                    prop_assert!((u - v).abs() < 1e-6);
                }
            }
        }
    }
}
