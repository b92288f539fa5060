//! Report files: JSON and CSV writers, and the JSON-lines metric input reader.
//!
//! Floats are rounded to 6 significant digits before writing. Field order
//! follows the struct definitions. CSV output has one row per strategy
//! (ablation), per sentence (metrics) or per check (gradient suite), with
//! nested objects flattened to dotted column names such as `flops.additions`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Number, Value};

use super::ablation::AblationReport;
use super::gradsuite::SuiteReport;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_corpus, MetricReport, Pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::param(format!("unknown format {s:?}, expected json or csv"))),
        }
    }
}

/// A report that can be written as one JSON object or as CSV rows.
pub trait Tabular: Serialize {
    /// Column names in output order.
    fn columns() -> &'static [&'static str];
    /// One flat record per CSV row, keyed by column.
    fn rows(&self) -> Result<Vec<Map<String, Value>>>;
}

pub const ABLATION_COLUMNS: &[&str] = &[
    "strategy",
    "accuracy",
    "top_view_hit_rate",
    "final_loss",
    "flops.additions",
    "flops.multiplications",
    "flops.exponentials",
    "flops.comparisons",
    "flops.divisions",
    "flops.total",
    "wall_time_s",
    "error",
];

pub const METRIC_COLUMNS: &[&str] =
    &["id", "bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor", "rouge_l", "cider", "flags"];

pub const GRAD_CHECK_COLUMNS: &[&str] = &["check", "n_views", "seed", "max_rel_error", "passed"];

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(|x| round_sig(x, 6)).and_then(Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// JSON value of `report` with every float rounded to 6 significant digits.
pub fn rounded_json<T: Serialize>(report: &T) -> Result<Value> {
    let mut v = serde_json::to_value(report).map_err(|e| Error::param(format!("report is not serializable: {e}")))?;
    round_value(&mut v);
    Ok(v)
}

/// Flattens nested objects into dotted keys; arrays become `key.1`, `key.2`, ...
fn flatten_into(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten_into(&format!("{prefix}.{}", i + 1), x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn flat_rows<T: Serialize>(items: &[T]) -> Result<Vec<Map<String, Value>>> {
    items
        .iter()
        .map(|it| {
            let mut out = Map::new();
            flatten_into("", &rounded_json(it)?, &mut out);
            Ok(out)
        })
        .collect()
}

impl Tabular for AblationReport {
    fn columns() -> &'static [&'static str] {
        ABLATION_COLUMNS
    }

    fn rows(&self) -> Result<Vec<Map<String, Value>>> {
        flat_rows(&self.results)
    }
}

impl Tabular for MetricReport {
    fn columns() -> &'static [&'static str] {
        METRIC_COLUMNS
    }

    fn rows(&self) -> Result<Vec<Map<String, Value>>> {
        let mut rows = flat_rows(&self.per_sentence)?;
        for (row, s) in rows.iter_mut().zip(&self.per_sentence) {
            for n in 1..=4 {
                if let Some(v) = row.remove(&format!("bleu.{n}")) {
                    row.insert(format!("bleu_{n}"), v);
                }
            }
            row.insert("flags".into(), Value::String(s.flags.join(";")));
        }
        Ok(rows)
    }
}

impl Tabular for SuiteReport {
    fn columns() -> &'static [&'static str] {
        GRAD_CHECK_COLUMNS
    }

    fn rows(&self) -> Result<Vec<Map<String, Value>>> {
        flat_rows(&self.entries)
    }
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

/// The report rendered in `format`, as written by [`emit_report`].
pub fn render_report<T: Tabular>(report: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let v = rounded_json(report)?;
            let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::param(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let cols = T::columns();
            w.write_record(cols).map_err(|e| Error::Io(e.to_string()))?;
            for row in report.rows()? {
                w.write_record(cols.iter().map(|c| cell(row.get(*c)))).map_err(|e| Error::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

/// Writes `report` to `out_path`; IO errors are returned verbatim.
pub fn emit_report<T: Tabular>(report: &T, format: Format, out_path: &Path) -> Result<()> {
    let text = render_report(report, format)?;
    fs::write(out_path, text).map_err(|e| Error::Io(format!("{}: {e}", out_path.display())))
}

/// Parses JSON-lines `{"id", "hypothesis", "references"}` records. Blank lines
/// are skipped; line numbers in errors are 1-based.
pub fn parse_pairs(text: &str) -> Result<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: Pair =
            serde_json::from_str(line).map_err(|e| Error::Input { line: i + 1, message: e.to_string() })?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::param("no pairs"));
    }
    Ok(pairs)
}

pub fn eval_metrics_file(path: &Path) -> Result<MetricReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    evaluate_corpus(&parse_pairs(&text)?)
}

/// Default output location for a metrics report: next to the input, with a
/// `.report.json` (or `.report.csv`) suffix.
pub fn default_report_path(input: &Path, format: Format) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "metrics".into());
    let ext = match format {
        Format::Json => "report.json",
        Format::Csv => "report.csv",
    };
    input.with_file_name(format!("{stem}.{ext}"))
}
