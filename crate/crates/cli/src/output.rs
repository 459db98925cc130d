//! Result tables, `summary.json` and provenance.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use isslab_core::format_float;

use crate::config::RunConfig;
use crate::error::CliError;

/// Format revision of `summary.json`.
pub const SUMMARY_FORMAT: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))
    }
}

pub fn f(x: f64) -> String {
    format_float(x)
}

pub fn f_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// `null` for non-finite values, which JSON cannot carry.
pub fn jf(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Everything a command produces; written by [`write_outcome`].
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub pass: bool,
    pub passed: usize,
    pub total: usize,
    pub min_slack_ratio: Option<f64>,
    pub metrics: Map<String, Value>,
    pub results: Table,
    /// Further CSV files (e.g. `trajectory.csv`).
    pub extra: Vec<(String, Vec<u8>)>,
}

/// SHA-256 of the effective configuration (seed override applied, output
/// directory excluded) in compact JSON.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = None;
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn provenance(cfg: &RunConfig) -> Value {
    json!({
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {
            "isslab-core": isslab_core::VERSION,
            "isslab-cli": env!("CARGO_PKG_VERSION"),
        },
        "summary_format": SUMMARY_FORMAT,
    })
}

pub fn summary(cfg: &RunConfig, out: &Outcome) -> Value {
    let mut m = Map::new();
    m.insert("command".into(), json!(cfg.command.name()));
    m.insert("pass".into(), json!(out.pass));
    m.insert("passed".into(), json!(out.passed));
    m.insert("total".into(), json!(out.total));
    m.insert("min_slack_ratio".into(), out.min_slack_ratio.map_or(Value::Null, jf));
    for (k, v) in &out.metrics {
        m.insert(k.clone(), v.clone());
    }
    let mut inputs = cfg.clone();
    inputs.out_dir = None;
    m.insert("inputs".into(), serde_json::to_value(&inputs).expect("config serializes"));
    m.insert("provenance".into(), provenance(cfg));
    Value::Object(m)
}

pub fn write_outcome(dir: &Path, cfg: &RunConfig, out: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), out.results.to_csv()?)?;
    for (name, bytes) in &out.extra {
        fs::write(dir.join(name), bytes)?;
    }
    let text = serde_json::to_string_pretty(&summary(cfg, out)).expect("summary serializes");
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_directory_but_not_seed() {
        let a = RunConfig::parse(r#"{"command":"fp-gap","seed":1,"out_dir":"x"}"#).unwrap();
        let mut b = a.clone();
        b.out_dir = Some("y".into());
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = Some(2);
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn non_finite_metrics_become_null() {
        assert_eq!(jf(f64::INFINITY), Value::Null);
        assert_eq!(jf(1.5), json!(1.5));
        assert_eq!(f_opt(None), "");
    }

    #[test]
    fn table_csv_has_header_and_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), f(0.5)]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "a,b\n1,5.0000000000000000e-1\n");
    }
}
