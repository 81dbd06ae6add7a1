use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::write_atomic;
use crate::error::{Error, Result};

/// Scores of one k-means repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub nmi_pct: f64,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub fscore_pct: f64,
    pub n_hyp_boundaries: u64,
    pub n_ref_boundaries: u64,
    pub inertia: f64,
}

/// Per-metric mean or standard deviation over repetitions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub nmi_pct: f64,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub fscore_pct: f64,
    pub n_hyp_boundaries: f64,
    pub n_ref_boundaries: f64,
    pub inertia: f64,
}

impl MetricSummary {
    pub(crate) fn from_fn(rows: &[MetricRow], f: impl Fn(&[f64]) -> f64) -> Self {
        let col = |g: fn(&MetricRow) -> f64| f(&rows.iter().map(g).collect::<Vec<_>>());
        Self {
            nmi_pct: col(|r| r.nmi_pct),
            precision_pct: col(|r| r.precision_pct),
            recall_pct: col(|r| r.recall_pct),
            fscore_pct: col(|r| r.fscore_pct),
            n_hyp_boundaries: col(|r| r.n_hyp_boundaries as f64),
            n_ref_boundaries: col(|r| r.n_ref_boundaries as f64),
            inertia: col(|r| r.inertia),
        }
    }
}

/// Settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k: usize,
    pub method: String,
    pub s: usize,
    pub tolerance_ms: f64,
    /// Per-repetition k-means seeds, in repetition order.
    pub seeds: Vec<u64>,
    pub mode: String,
    pub frame_shift_ms: f64,
    pub tolerance_frames: usize,
    pub nmi_norm: String,
    pub boundary_average: String,
    pub boundary_matching: String,
    pub merge_adjacent: bool,
    /// Full effective configuration the report was produced from.
    #[serde(default)]
    pub resolved: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_rep: Vec<MetricRow>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
    pub config: ReportConfig,
}

impl EvalReport {
    /// Checks percentage ranges, non-negative std and the repetition count.
    pub fn validate(&self, expected_reps: usize) -> Result<()> {
        if self.per_rep.len() != expected_reps {
            return Err(Error::Invariant(format!(
                "report has {} repetitions, expected {expected_reps}",
                self.per_rep.len()
            )));
        }
        let pct_ok = |v: f64| (0.0..=100.0).contains(&v);
        for (i, r) in self.per_rep.iter().enumerate() {
            for v in [r.nmi_pct, r.precision_pct, r.recall_pct, r.fscore_pct] {
                if !pct_ok(v) {
                    return Err(Error::Invariant(format!("repetition {i}: percentage {v} out of range")));
                }
            }
        }
        let s = &self.std;
        for v in [
            s.nmi_pct,
            s.precision_pct,
            s.recall_pct,
            s.fscore_pct,
            s.n_hyp_boundaries,
            s.n_ref_boundaries,
            s.inertia,
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Invariant(format!("negative standard deviation {v}")));
            }
        }
        Ok(())
    }
}

/// Pretty JSON with every floating-point number printed with six decimals.
pub fn report_to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::Invariant(format!("report is not serializable: {e}")))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    const STEP: usize = 2;
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => write!(out, "{f:.6}").unwrap(),
            _ => write!(out, "{n}").unwrap(),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            let scalar = items.iter().all(|i| !i.is_array() && !i.is_object());
            if scalar {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&" ".repeat(indent + STEP));
                write_value(out, item, indent + STEP);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&" ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&" ".repeat(indent + STEP));
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push_str(": ");
                write_value(out, item, indent + STEP);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&" ".repeat(indent));
            out.push('}');
        }
    }
}

pub fn write_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), report_to_json(report)?.as_bytes())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format_at(e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_get_six_decimals_integers_stay_integral() {
        let v = serde_json::json!({"a": 1.0, "b": 2, "c": [0.1234567, 3], "d": {"e": "x"}});
        let s = report_to_json(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": 1.000000,\n  \"b\": 2,\n  \"c\": [0.123457, 3],\n  \"d\": {\n    \"e\": \"x\"\n  }\n}\n"
        );
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], 2);
    }

    #[test]
    fn keys_follow_field_order() {
        let row = MetricRow {
            nmi_pct: 1.0,
            precision_pct: 2.0,
            recall_pct: 3.0,
            fscore_pct: 4.0,
            n_hyp_boundaries: 5,
            n_ref_boundaries: 6,
            inertia: 7.5,
        };
        let s = report_to_json(&row).unwrap();
        let keys: Vec<&str> = s
            .lines()
            .filter_map(|l| l.trim().strip_prefix('"')?.split('"').next())
            .collect();
        assert_eq!(
            keys,
            [
                "nmi_pct",
                "precision_pct",
                "recall_pct",
                "fscore_pct",
                "n_hyp_boundaries",
                "n_ref_boundaries",
                "inertia"
            ]
        );
        assert!(s.contains("\"n_hyp_boundaries\": 5,"));
        assert!(s.contains("\"inertia\": 7.500000\n"));
    }
}
