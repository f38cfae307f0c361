//! Rule-based chart recommendation. The rule table is original to this crate:
//!
//! | rule | condition                                  | chart       | score |
//! |------|--------------------------------------------|-------------|-------|
//! | R1   | two numeric columns                        | scatter     | 0.90, 0.95 with a color column |
//! | R2   | a categorical column and another numeric   | bar (+ pie when ≤ 6 distinct) | 0.80 / 0.50 |
//! | R3   | a time column and a numeric column         | line        | 0.85  |
//! | R4   | exactly one numeric column                 | histogram   | 0.70  |
//! | R5   | parent/child or id/parentId columns        | dendrogram  | 0.60  |
//!
//! Numeric means int or float and not a time column. Categorical means a
//! string or int column with at most [`CATEGORICAL_MAX_DISTINCT`] distinct
//! values. Time columns are recognised by name: `time`, `timestamp`, `date`,
//! `datetime`, `ts`, or a `_time`, `_ts`, `_at`, `_date` suffix.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frame::TableFrame;
use crate::value::{Dtype, Value};

pub const CATEGORICAL_MAX_DISTINCT: usize = 12;
const PIE_MAX_DISTINCT: usize = 6;
/// Distinct counts are exact up to this many rows and estimated on a sample above it.
pub const DISTINCT_SAMPLE_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Scatter,
    Bar,
    Line,
    Histogram,
    Pie,
    Dendrogram,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRecommendation {
    pub chart_type: ChartType,
    pub encoding: Encoding,
    pub score: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub dtype: Dtype,
    pub distinct: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    pub columns: Vec<ColumnStats>,
    pub row_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecommendError {
    #[error("cannot recommend charts for an empty frame")]
    EmptyFrame,
}

pub fn is_time_column(name: &str) -> bool {
    let n = name.to_ascii_lowercase();
    matches!(n.as_str(), "time" | "timestamp" | "date" | "datetime" | "ts")
        || ["_time", "_ts", "_at", "_date"].iter().any(|s| n.ends_with(s))
}

/// Per-column distinct counts, estimated on a seeded uniform row sample for large frames.
pub fn frame_stats(frame: &TableFrame) -> FrameStats {
    let n = frame.num_rows();
    let sample: Vec<usize> = if n <= DISTINCT_SAMPLE_ROWS {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut picked = index::sample(&mut rng, n, DISTINCT_SAMPLE_ROWS).into_vec();
        picked.sort_unstable();
        picked
    };
    let columns = frame
        .schema()
        .iter()
        .enumerate()
        .map(|(c, field)| {
            let distinct: BTreeSet<DistinctKey> = sample.iter().map(|&r| DistinctKey::of(&frame.rows()[r][c])).collect();
            ColumnStats { name: field.name.clone(), dtype: field.dtype, distinct: distinct.len() }
        })
        .collect();
    FrameStats { columns, row_count: n }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum DistinctKey {
    Bool(bool),
    Int(i64),
    Bits(u64),
    Str(String),
}

impl DistinctKey {
    fn of(v: &Value) -> Self {
        match v {
            Value::Bool(b) => DistinctKey::Bool(*b),
            Value::Int(i) => DistinctKey::Int(*i),
            // -0.0 and 0.0 count as one value
            Value::Float(f) => DistinctKey::Bits((f + 0.0).to_bits()),
            Value::Str(s) => DistinctKey::Str(s.clone()),
        }
    }
}

pub fn recommend_charts(frame: &TableFrame) -> Result<Vec<ChartRecommendation>, RecommendError> {
    if frame.is_empty() {
        return Err(RecommendError::EmptyFrame);
    }
    Ok(recommend_from_stats(&frame_stats(frame)))
}

fn rec(chart_type: ChartType, encoding: Encoding, score: f64, reason: impl ToString) -> ChartRecommendation {
    ChartRecommendation { chart_type, encoding, score, reason: reason.to_string() }
}

fn some(s: &str) -> Option<String> {
    Some(s.to_string())
}

/// Applies the rule table to column statistics. Sorted by descending score,
/// ties in rule order.
pub fn recommend_from_stats(stats: &FrameStats) -> Vec<ChartRecommendation> {
    let cols = &stats.columns;
    let is_cat = |c: &ColumnStats| {
        matches!(c.dtype, Dtype::String | Dtype::Int) && c.distinct <= CATEGORICAL_MAX_DISTINCT && !is_time_column(&c.name)
    };
    let num: Vec<&ColumnStats> = cols.iter().filter(|c| c.dtype.is_numeric() && !is_time_column(&c.name)).collect();
    let cat: Vec<&ColumnStats> = cols.iter().filter(|c| is_cat(c)).collect();
    let time: Vec<&ColumnStats> = cols.iter().filter(|c| is_time_column(&c.name)).collect();
    let mut out = Vec::new();

    // R1
    if num.len() >= 2 {
        let mut axes: Vec<&ColumnStats> = num.iter().copied().filter(|c| !is_cat(c)).collect();
        axes.extend(num.iter().copied().filter(|c| is_cat(c)));
        let (x, y) = (axes[0].name.as_str(), axes[1].name.as_str());
        let color = cat.iter().find(|c| c.name != x && c.name != y);
        let mut enc = Encoding { x: some(x), y: some(y), ..Default::default() };
        match color {
            Some(c) => {
                enc.color = some(&c.name);
                out.push(rec(ChartType::Scatter, enc, 0.95, alloc::format!("{x} vs {y}, colored by categorical {}", c.name)));
            }
            None => out.push(rec(ChartType::Scatter, enc, 0.9, alloc::format!("two numeric columns {x} and {y}"))),
        }
    }

    // R2
    if let Some((c, n)) = cat.iter().find_map(|c| num.iter().find(|n| n.name != c.name).map(|n| (*c, *n))) {
        let enc = Encoding { x: some(&c.name), y: some(&n.name), ..Default::default() };
        out.push(rec(ChartType::Bar, enc, 0.8, alloc::format!("{} by categorical {}", n.name, c.name)));
        if c.distinct <= PIE_MAX_DISTINCT {
            let enc = Encoding { color: some(&c.name), value: some(&n.name), ..Default::default() };
            out.push(rec(ChartType::Pie, enc, 0.5, alloc::format!("{} has {} categories", c.name, c.distinct)));
        }
    }

    // R3
    if let (Some(t), Some(n)) = (time.first(), num.first()) {
        let enc = Encoding { x: some(&t.name), y: some(&n.name), ..Default::default() };
        out.push(rec(ChartType::Line, enc, 0.85, alloc::format!("{} over time column {}", n.name, t.name)));
    }

    // R4
    if let [n] = num[..] {
        let enc = Encoding { x: some(&n.name), ..Default::default() };
        out.push(rec(ChartType::Histogram, enc, 0.7, alloc::format!("distribution of {}", n.name)));
    }

    // R5
    let find = |names: &[&str]| cols.iter().find(|c| names.iter().any(|n| c.name.eq_ignore_ascii_case(n)));
    let tree = match (find(&["child"]), find(&["parent"])) {
        (Some(child), Some(parent)) => Some((child, parent)),
        _ => find(&["id"]).zip(find(&["parentId", "parent_id"])),
    };
    if let Some((child, parent)) = tree {
        let enc = Encoding { x: some(&child.name), y: some(&parent.name), ..Default::default() };
        out.push(rec(ChartType::Dendrogram, enc, 0.6, alloc::format!("hierarchy {} -> {}", child.name, parent.name)));
    }

    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Field;
    use alloc::vec;

    fn stats(cols: &[(&str, Dtype, usize)]) -> FrameStats {
        FrameStats {
            columns: cols.iter().map(|&(n, d, k)| ColumnStats { name: n.into(), dtype: d, distinct: k }).collect(),
            row_count: 5000,
        }
    }

    #[test]
    fn clustered_routes_scatter_first() {
        let recs = recommend_from_stats(&stats(&[
            ("cluster", Dtype::Int, 3),
            ("sourceAirport_idx", Dtype::Int, 400),
            ("destinationAirport_idx", Dtype::Int, 420),
        ]));
        let top = &recs[0];
        assert_eq!(top.chart_type, ChartType::Scatter);
        assert_eq!(top.encoding.x.as_deref(), Some("sourceAirport_idx"));
        assert_eq!(top.encoding.y.as_deref(), Some("destinationAirport_idx"));
        assert_eq!(top.encoding.color.as_deref(), Some("cluster"));
        assert_eq!(top.score, 0.95);
        let kinds: Vec<ChartType> = recs.iter().map(|r| r.chart_type).collect();
        assert_eq!(kinds, [ChartType::Scatter, ChartType::Bar, ChartType::Pie]);
    }

    #[test]
    fn single_float_is_histogram() {
        let frame = TableFrame::new(vec![Field::new("v", Dtype::Float)], vec![vec![1.5.into()], vec![2.5.into()]]).unwrap();
        let recs = recommend_charts(&frame).unwrap();
        assert_eq!(recs[0].chart_type, ChartType::Histogram);
    }

    #[test]
    fn dendrogram_and_line() {
        let recs = recommend_from_stats(&stats(&[("id", Dtype::Int, 5000), ("parentId", Dtype::Int, 700)]));
        assert!(recs.iter().any(|r| r.chart_type == ChartType::Dendrogram));
        let recs = recommend_from_stats(&stats(&[("created_at", Dtype::Int, 5000), ("load", Dtype::Float, 4000)]));
        assert_eq!(recs[0].chart_type, ChartType::Line);
        assert_eq!(recs[1].chart_type, ChartType::Histogram);
    }

    #[test]
    fn empty_frame() {
        let frame = TableFrame::empty(vec![Field::new("v", Dtype::Float)]);
        assert_eq!(recommend_charts(&frame), Err(RecommendError::EmptyFrame));
    }

    #[test]
    fn large_frames_are_sampled() {
        let rows = (0..25_000).map(|i| vec![Value::Int(i % 7)]).collect();
        let frame = TableFrame::new(vec![Field::new("k", Dtype::Int)], rows).unwrap();
        let s = frame_stats(&frame);
        assert_eq!(s.columns[0].distinct, 7);
        assert_eq!(s.row_count, 25_000);
    }
}
