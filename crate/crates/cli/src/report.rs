//! `isslab report`: aggregates the `summary.json` files of finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;
use crate::output::Table;

#[derive(Debug, Clone)]
pub struct RunEntry {
    pub dir: PathBuf,
    pub summary: Value,
}

impl RunEntry {
    fn command(&self) -> &str {
        self.summary["command"].as_str().unwrap_or("?")
    }

    fn pass(&self) -> bool {
        self.summary["pass"].as_bool().unwrap_or(false)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub runs: Vec<RunEntry>,
    /// Directories without a readable `summary.json`, with the reason.
    pub missing: Vec<(PathBuf, String)>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.runs.iter().all(RunEntry::pass)
    }
}

pub fn collect(dirs: &[PathBuf]) -> Report {
    let mut rep = Report::default();
    for d in dirs {
        let path = d.join("summary.json");
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<Value>(&s).map_err(|e| e.to_string()));
        match parsed {
            Ok(summary) if summary.is_object() => rep.runs.push(RunEntry { dir: d.clone(), summary }),
            Ok(_) => rep.missing.push((d.clone(), "summary.json is not an object".into())),
            Err(e) => rep.missing.push((d.clone(), e)),
        }
    }
    rep
}

fn num(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}

pub fn aggregate_table(rep: &Report) -> Table {
    let mut t = Table::new(&["run", "command", "pass", "passed", "total", "min_slack_ratio", "config_sha256"]);
    for r in &rep.runs {
        let s = &r.summary;
        t.push(vec![
            r.dir.display().to_string(),
            r.command().into(),
            r.pass().to_string(),
            num(&s["passed"]),
            num(&s["total"]),
            num(&s["min_slack_ratio"]),
            s["provenance"]["config_sha256"].as_str().unwrap_or("").into(),
        ]);
    }
    t
}

/// `(N, log10 value)` rows of a scan run's `results.csv`.
fn scan_rows(dir: &Path) -> Result<Vec<(u64, f64)>, String> {
    let mut rd = csv::Reader::from_path(dir.join("results.csv")).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let n = rec.get(0).and_then(|s| s.parse().ok()).ok_or("bad N column")?;
        let v = rec.get(2).and_then(|s| s.parse().ok()).ok_or("bad log10_value column")?;
        out.push((n, v));
    }
    Ok(out)
}

pub fn markdown(rep: &Report) -> String {
    let mut md = String::new();
    let passed = rep.runs.iter().filter(|r| r.pass()).count();
    let _ = writeln!(md, "# isslab report\n");
    let _ = writeln!(md, "{passed} of {} runs pass.\n", rep.runs.len());
    if !rep.runs.is_empty() {
        let _ = writeln!(md, "| run | command | pass | passed/total | min slack ratio |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for r in &rep.runs {
            let s = &r.summary;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {}/{} | {} |",
                r.dir.display(),
                r.command(),
                if r.pass() { "PASS" } else { "FAIL" },
                num(&s["passed"]),
                num(&s["total"]),
                num(&s["min_slack_ratio"]),
            );
        }
        md.push('\n');
    }
    if !rep.missing.is_empty() {
        let _ = writeln!(md, "## Missing summaries\n");
        for (d, why) in &rep.missing {
            let _ = writeln!(md, "- {}: {why}", d.display());
        }
        md.push('\n');
    }

    let scans: Vec<&RunEntry> = rep.runs.iter().filter(|r| r.command() == "admissibility-scan").collect();
    if !scans.is_empty() {
        let _ = writeln!(md, "## Admissibility growth\n");
        let _ = writeln!(md, "| run | p | N | log10 value | monotone in N |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for r in scans {
            let p = num(&r.summary["p"]);
            match scan_rows(&r.dir) {
                Ok(rows) => {
                    let monotone = rows.windows(2).all(|w| w[0].0 > w[1].0 || w[1].1 >= w[0].1);
                    for (n, v) in rows.iter().filter(|(n, _)| n % 10 == 0 || *n == 1) {
                        let _ = writeln!(md, "| {} | {p} | {n} | {v:.4} | {monotone} |", r.dir.display());
                    }
                }
                Err(e) => {
                    let _ = writeln!(md, "| {} | {p} | | results.csv unreadable: {e} | |", r.dir.display());
                }
            }
        }
        md.push('\n');
    }

    let gaps: Vec<&RunEntry> = rep.runs.iter().filter(|r| r.command() == "fp-gap").collect();
    if !gaps.is_empty() {
        let _ = writeln!(md, "## Fokker-Planck decay\n");
        let _ = writeln!(md, "| run | J | omega | decay exponent | relative error |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for r in gaps {
            let s = &r.summary;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                r.dir.display(),
                num(&s["J"]),
                num(&s["omega"]),
                num(&s["decay_exponent"]),
                num(&s["decay_rel_error"]),
            );
        }
        md.push('\n');
    }
    md
}

pub fn write(rep: &Report, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("aggregate.csv"), aggregate_table(rep).to_csv()?)?;
    fs::write(out.join("report.md"), markdown(rep))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_report_passes() {
        let rep = collect(&[]);
        assert!(rep.all_pass());
        assert!(markdown(&rep).contains("0 of 0 runs pass"));
        assert_eq!(aggregate_table(&rep).rows.len(), 0);
    }

    #[test]
    fn failing_run_fails_report() {
        let rep = Report {
            runs: vec![
                RunEntry { dir: "a".into(), summary: json!({"command": "fp-gap", "pass": true}) },
                RunEntry { dir: "b".into(), summary: json!({"command": "audit-iss", "pass": false}) },
            ],
            missing: vec![],
        };
        assert!(!rep.all_pass());
        let md = markdown(&rep);
        assert!(md.contains("| b | audit-iss | FAIL |"));
        assert!(md.contains("Fokker-Planck decay"));
    }
}
