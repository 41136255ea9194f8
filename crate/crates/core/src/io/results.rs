//! Result tables: per-layer curves as CSV (canonical) or JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 6] = ["model_id", "index", "pair", "layer", "score", "degenerate_count"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub layer: usize,
    pub score: f64,
    pub degenerate_count: usize,
}

/// Per-layer scores for one `(model, index, language pair)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub model_id: String,
    pub index: String,
    /// `src-tgt`, e.g. `en-fr`.
    pub pair: String,
    /// Ascending by layer.
    pub points: Vec<CurvePoint>,
}

impl LayerCurve {
    pub fn scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.score).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidParam(format!("unknown output format '{other}'"))),
        }
    }
}

/// Formats like C's `%.10g`: ten significant digits, trailing zeros
/// dropped, exponent form outside `1e-4 <= |v| < 1e10`.
pub fn format_score(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..10).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        strip_zeros(&format!("{v:.*}", (9 - exp) as usize)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Sorts curves by `(model, index, pair)` and points by layer.
pub fn sort_curves(curves: &mut [LayerCurve]) {
    for c in curves.iter_mut() {
        c.points.sort_by_key(|p| p.layer);
    }
    curves.sort_by(|a, b| (&a.model_id, &a.index, &a.pair).cmp(&(&b.model_id, &b.index, &b.pair)));
}

pub fn curves_to_csv(curves: &[LayerCurve]) -> String {
    let mut sorted = curves.to_vec();
    sort_curves(&mut sorted);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for c in &sorted {
        for p in &c.points {
            w.write_record([
                c.model_id.as_str(),
                c.index.as_str(),
                c.pair.as_str(),
                &p.layer.to_string(),
                &format_score(p.score),
                &p.degenerate_count.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn curves_to_json(curves: &[LayerCurve]) -> String {
    let mut sorted = curves.to_vec();
    sort_curves(&mut sorted);
    let mut s = serde_json::to_string_pretty(&sorted).expect("curves serialize");
    s.push('\n');
    s
}

pub fn write_results(path: impl AsRef<Path>, curves: &[LayerCurve], format: OutputFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        OutputFormat::Csv => curves_to_csv(curves),
        OutputFormat::Json => curves_to_json(curves),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<LayerCurve>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable CSV header: {e}")))?
        .clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::Format(format!(
            "expected columns {}, found {}",
            CURVE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut curves: Vec<LayerCurve> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("CSV row {}: {e}", line + 2)))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| Error::Format(format!("CSV row {}: bad {what}", line + 2));
        let point = CurvePoint {
            layer: field(3).parse().map_err(|_| bad("layer"))?,
            score: field(4).parse().map_err(|_| bad("score"))?,
            degenerate_count: field(5).parse().map_err(|_| bad("degenerate_count"))?,
        };
        match curves.last_mut() {
            Some(c) if c.model_id == field(0) && c.index == field(1) && c.pair == field(2) => c.points.push(point),
            _ => curves.push(LayerCurve {
                model_id: field(0).into(),
                index: field(1).into(),
                pair: field(2).into(),
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<LayerCurve>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    } else {
        parse_curves_csv(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Mean and min–max band of one `(model, index, layer)` across language pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAggregate {
    pub model_id: String,
    pub index: String,
    pub layer: usize,
    pub pair_count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate_pairs(curves: &[LayerCurve]) -> Vec<PairAggregate> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for c in curves {
        for p in &c.points {
            groups
                .entry((c.model_id.clone(), c.index.clone(), p.layer))
                .or_default()
                .push(p.score);
        }
    }
    groups
        .into_iter()
        .map(|((model_id, index, layer), scores)| PairAggregate {
            model_id,
            index,
            layer,
            pair_count: scores.len(),
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

pub fn aggregates_to_csv(rows: &[PairAggregate]) -> String {
    let mut out = String::from("model_id,index,layer,pair_count,mean,min,max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model_id,
            r.index,
            r.layer,
            r.pair_count,
            format_score(r.mean),
            format_score(r.min),
            format_score(r.max)
        ));
    }
    out
}

/// Matching-probe accuracy for one `(model, pair, layer)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRow {
    pub model_id: String,
    pub pair: String,
    pub layer: usize,
    pub accuracy: f64,
    pub hits: usize,
    pub m: usize,
    pub degenerate_count: usize,
}

pub fn matching_to_csv(rows: &[MatchingRow]) -> String {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (&a.model_id, &a.pair, a.layer).cmp(&(&b.model_id, &b.pair, b.layer)));
    let mut out = String::from("model_id,pair,layer,accuracy,hits,m,degenerate_count\n");
    for r in &sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model_id,
            r.pair,
            r.layer,
            format_score(r.accuracy),
            r.hits,
            r.m,
            r.degenerate_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pair: &str, scores: &[f64]) -> LayerCurve {
        LayerCurve {
            model_id: "toy".into(),
            index: "anc".into(),
            pair: pair.into(),
            points: scores
                .iter()
                .enumerate()
                .map(|(layer, &score)| CurvePoint { layer, score, degenerate_count: 0 })
                .collect(),
        }
    }

    #[test]
    fn ten_significant_digits() {
        assert_eq!(format_score(0.0), "0");
        assert_eq!(format_score(1.0), "1");
        assert_eq!(format_score(0.5), "0.5");
        assert_eq!(format_score(2.0 / 3.0), "0.6666666667");
        assert_eq!(format_score(17.0 / 18.0), "0.9444444444");
        assert_eq!(format_score(0.123456789012345), "0.123456789");
        assert_eq!(format_score(1.0e-5), "1e-05");
        assert_eq!(format_score(-2.5e-7), "-2.5e-07");
        assert_eq!(format_score(0.00012345678901), "0.000123456789");
        assert_eq!(format_score(12345678901.0), "1.23456789e+10");
        assert_eq!(format_score(0.99999999999), "1");
    }

    #[test]
    fn three_layers_three_rows() {
        let csv = curves_to_csv(&[curve("en-fr", &[0.25, 0.5, 0.75])]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "model_id,index,pair,layer,score,degenerate_count");
        assert_eq!(lines[2], "toy,anc,en-fr,1,0.5,0");
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(curves_to_csv(&[]), "model_id,index,pair,layer,score,degenerate_count\n");
    }

    #[test]
    fn rows_are_sorted() {
        let csv = curves_to_csv(&[curve("en-fr", &[0.1]), curve("en-de", &[0.2])]);
        let pairs: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
        assert_eq!(pairs, ["en-de", "en-fr"]);
    }

    #[test]
    fn header_mismatch_is_format_error() {
        assert!(matches!(parse_curves_csv("a,b\n1,2\n"), Err(Error::Format(_))));
        let bad = "model_id,index,pair,layer,score,degenerate_count\ntoy,anc,en-fr,x,0.1,0\n";
        assert!(matches!(parse_curves_csv(bad), Err(Error::Format(_))));
    }

    #[test]
    fn aggregate_reports_min_max_band() {
        let rows = aggregate_pairs(&[curve("en-fr", &[0.2, 0.6]), curve("en-de", &[0.4, 0.8])]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].layer, 0);
        assert!((rows[0].mean - 0.3).abs() < 1e-15);
        assert_eq!((rows[0].min, rows[0].max), (0.2, 0.4));
        assert_eq!(rows[1].pair_count, 2);
    }
}
