//! Report writers: wide CSV, JSON, and long CSV with one metric per row.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde_json::Value;
use tokenlens::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Long,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "long" => Ok(ReportFormat::Long),
            other => Err(format!("unknown report format `{other}` (csv, json or long)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Long => "long",
        })
    }
}

/// Columns of the wide table: the fields of every row in first-seen order.
pub fn columns(rows: &[MetricsReport]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for row in rows {
        for (name, _) in row.fields() {
            if !cols.contains(&name) {
                cols.push(name);
            }
        }
    }
    cols
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

const LONG_KEYS: [&str; 6] = ["cell", "domain", "test_domain", "family", "vocab_size", "train_chars"];

pub fn write_report<W: Write>(rows: &[MetricsReport], format: ReportFormat, out: W) -> anyhow::Result<()> {
    match format {
        ReportFormat::Csv => {
            let cols = columns(rows);
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&cols)?;
            for row in rows {
                let fields = row.fields();
                let record: Vec<String> = cols
                    .iter()
                    .map(|c| {
                        fields
                            .iter()
                            .find(|(n, _)| n == c)
                            .map(|(_, v)| cell_text(v))
                            .unwrap_or_default()
                    })
                    .collect();
                w.write_record(&record)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let array: Vec<Value> = rows
                .iter()
                .map(|r| Value::Object(r.fields().into_iter().collect()))
                .collect();
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &array)?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Long => {
            let mut w = csv::Writer::from_writer(out);
            let mut header: Vec<&str> = LONG_KEYS.to_vec();
            header.extend(["metric", "value"]);
            w.write_record(&header)?;
            for row in rows {
                let fields = row.fields();
                let key: Vec<String> = LONG_KEYS
                    .iter()
                    .map(|k| {
                        fields
                            .iter()
                            .find(|(n, _)| n == k)
                            .map(|(_, v)| cell_text(v))
                            .unwrap_or_default()
                    })
                    .collect();
                for (metric, value) in row.metrics() {
                    let mut rec = key.clone();
                    rec.push(metric);
                    rec.push(Value::from(value).to_string());
                    w.write_record(&rec)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes `rows` to `path`, replacing any previous file atomically.
pub fn emit_report(rows: &[MetricsReport], format: ReportFormat, path: &Path) -> anyhow::Result<()> {
    if rows.is_empty() {
        bail!("no report rows to write");
    }
    let mut buf = Vec::new();
    write_report(rows, format, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}
