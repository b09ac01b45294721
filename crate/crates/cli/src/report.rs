//! CSV outputs and the strict schema they follow.

use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Float,
    Bool,
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, ColumnType)],
}

use ColumnType::*;

pub const LOSS: Schema = Schema {
    name: "loss",
    columns: &[
        ("epoch", Int),
        ("recon", Float),
        ("pred", Float),
        ("kl", Float),
        ("static", Float),
        ("contrastive", Float),
        ("reward", Float),
        ("total", Float),
    ],
};

pub const METRICS: Schema = Schema {
    name: "metrics",
    columns: &[("split", Text), ("metric", Text), ("value", Float)],
};

pub const GRAPHS: Schema = Schema {
    name: "graphs",
    columns: &[
        ("regime", Text),
        ("episode", Int),
        ("seed", Int),
        ("steps", Int),
        ("nshd", Float),
        ("tp", Int),
        ("fp", Int),
        ("fn", Int),
    ],
};

pub const PROBE: Schema = Schema {
    name: "probe",
    columns: &[("features", Text), ("target", Text), ("mse", Float)],
};

pub const RESULTS: Schema = Schema {
    name: "results",
    columns: &[
        ("task", Text),
        ("seed", Int),
        ("success", Bool),
        ("steps", Int),
        ("subgoals_used", Int),
        ("unique_graphs_visited", Int),
    ],
};

pub const PPO: Schema = Schema {
    name: "ppo",
    columns: &[("task", Text), ("batch", Int), ("unique_graphs", Int), ("success_rate", Float)],
};

pub const ALL: [Schema; 6] = [LOSS, METRICS, GRAPHS, PROBE, RESULTS, PPO];

/// One `split,metric,value` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl Metric {
    pub fn new(split: &str, metric: impl Into<String>, value: f64) -> Self {
        Self {
            split: split.to_string(),
            metric: metric.into(),
            value,
        }
    }
}

/// Write `rows` under `schema`'s header. Non-finite floats are rejected
/// before anything is written.
pub fn write_csv<T: Serialize>(path: &Path, schema: &Schema, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(schema.columns.iter().map(|(n, _)| *n)).map_err(CliError::data)?;
    for r in rows {
        w.serialize(r).map_err(CliError::data)?;
    }
    let bytes = w.into_inner().map_err(CliError::data)?;
    let text = String::from_utf8(bytes).map_err(CliError::data)?;
    check_csv_str(&text, schema).map_err(|e| CliError::Data(format!("{} output violates its schema: {e}", schema.name)))?;
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Validate CSV text against `schema`; returns the data row count.
pub fn check_csv_str(text: &str, schema: &Schema) -> std::result::Result<usize, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = r.records();
    let header = records.next().ok_or("empty file")?.map_err(|e| e.to_string())?;
    let expected: Vec<&str> = schema.columns.iter().map(|(n, _)| *n).collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(format!("header {got:?}, expected {expected:?}"));
    }
    let mut n = 0;
    for (k, rec) in records.enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = k + 2;
        if rec.len() != expected.len() {
            return Err(format!("row {row}: {} fields, expected {}", rec.len(), expected.len()));
        }
        for ((name, ty), v) in schema.columns.iter().zip(rec.iter()) {
            let ok = match ty {
                Int => v.parse::<i128>().is_ok(),
                Float => v.parse::<f64>().is_ok_and(f64::is_finite),
                Bool => v == "true" || v == "false",
                Text => !v.is_empty(),
            };
            if !ok {
                return Err(format!("row {row}: column `{name}` has invalid value `{v}`"));
            }
        }
        n += 1;
    }
    Ok(n)
}

pub fn check_csv(path: &Path, schema: &Schema) -> std::result::Result<usize, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    check_csv_str(&text, schema)
}

/// Schema for an output file, by file stem. `*_summary.csv` files hold
/// metrics.
pub fn schema_for(path: &Path) -> Option<Schema> {
    let stem = path.file_stem()?.to_str()?;
    if stem.ends_with("_summary") {
        return Some(METRICS);
    }
    ALL.iter().copied().find(|s| s.name == stem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_accepts_valid_and_rejects_broken() {
        let good = "split,metric,value\nheldout,nshd,0.1\n";
        assert_eq!(check_csv_str(good, &METRICS), Ok(1));
        assert!(check_csv_str("split,metric\n", &METRICS).is_err());
        assert!(check_csv_str("split,metric,value\nheldout,nshd,NaN\n", &METRICS).is_err());
        assert!(check_csv_str("split,metric,value\nheldout,nshd\n", &METRICS).is_err());
        assert!(check_csv_str("task,seed,success,steps,subgoals_used,unique_graphs_visited\nreach(1),1,yes,3,1,2\n", &RESULTS).is_err());
    }

    #[test]
    fn writer_refuses_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        assert!(write_csv(&p, &METRICS, &[Metric::new("train", "x", f64::NAN)]).is_err());
        assert!(!p.exists());
        write_csv(&p, &METRICS, &[Metric::new("train", "x", 0.25)]).unwrap();
        assert_eq!(check_csv(&p, &METRICS), Ok(1));
        assert_eq!(schema_for(&p).unwrap().name, "metrics");
    }
}
