use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::Failure;

/// A named metric compared against its limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub metric: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value < limit`.
    pub fn below(metric: &str, value: f64, limit: f64) -> Self {
        Check { metric: metric.to_string(), value, limit, passed: value < limit }
    }

    /// Passes when `flag` holds; recorded as 1 or 0 against a limit of 1.
    pub fn holds(metric: &str, flag: bool) -> Self {
        Check { metric: metric.to_string(), value: if flag { 1.0 } else { 0.0 }, limit: 1.0, passed: flag }
    }
}

/// What a command produced before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub csv: Option<Vec<u8>>,
    pub rows: Vec<Value>,
    pub summary: Value,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Serializes `rows` both as CSV (with a header) and as JSON values.
pub fn table<T: Serialize>(rows: &[T]) -> Result<(Vec<u8>, Vec<Value>), Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Output { path: "csv".into(), detail: e.to_string() })?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Output { path: "csv".into(), detail: e.to_string() })?;
    let json = rows.iter().map(|r| serde_json::to_value(r).expect("row serializes")).collect();
    Ok((bytes, json))
}

#[derive(Debug, Serialize)]
pub struct ReportRecord<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub status: &'static str,
    pub wall_time_s: f64,
    pub threads: usize,
    pub rows_file: Option<String>,
    pub rows: &'a [Value],
    pub summary: &'a Value,
    pub checks: &'a [Check],
}

/// Writes `<command>.csv` (when present) and `<command>.json` under the
/// configured output directory and returns the JSON path.
pub fn write(command: &str, cfg: &RunConfig, out: &Outcome, wall_time_s: f64) -> Result<PathBuf, Failure> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let rows_file = match &out.csv {
        Some(bytes) => {
            let p = dir.join(format!("{command}.csv"));
            std::fs::write(&p, bytes).map_err(|e| io_failure(&p, e))?;
            Some(format!("{command}.csv"))
        }
        None => None,
    };
    let record = ReportRecord {
        command,
        config_hash: cfg.hash(),
        config: cfg,
        status: if out.first_failure().is_some() { "fail" } else { "pass" },
        wall_time_s,
        threads: rayon::current_num_threads(),
        rows_file,
        rows: &out.rows,
        summary: &out.summary,
        checks: &out.checks,
    };
    let p = dir.join(format!("{command}.json"));
    let text = serde_json::to_string_pretty(&record).expect("report serializes");
    std::fs::write(&p, text + "\n").map_err(|e| io_failure(&p, e))?;
    Ok(p)
}

fn io_failure(p: &Path, e: std::io::Error) -> Failure {
    Failure::Output { path: p.display().to_string(), detail: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        k: usize,
        v: f64,
        note: Option<f64>,
    }

    #[test]
    fn csv_has_header_and_round_trip_floats() {
        let rows = [Row { k: 0, v: 0.1 + 0.2, note: None }, Row { k: 1, v: -1.5e-300, note: Some(2.0) }];
        let (bytes, json) = table(&rows).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,v,note");
        assert_eq!(lines[1], "0,0.30000000000000004,");
        assert_eq!(lines[2].split(',').nth(1).unwrap().parse::<f64>().unwrap(), -1.5e-300);
        assert_eq!(json.len(), 2);
    }

    #[test]
    fn checks() {
        assert!(Check::below("r", 1e-9, 1e-8).passed);
        assert!(!Check::below("r", f64::NAN, 1e-8).passed);
        assert!(!Check::holds("v", false).passed);
    }
}
