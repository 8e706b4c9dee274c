#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_stokes-lab");

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn default_config() -> PathBuf {
    manifest_dir().join("configs/default.json")
}

/// Runs `stokes-lab <cmd>` on the default config with its output directed
/// to `out`, plus extra overrides.
pub fn run(cmd: &str, out: &Path, overrides: &[&str]) -> Output {
    let mut c = Command::new(BIN);
    c.arg(cmd).arg("--config").arg(default_config());
    c.arg("--override").arg(format!("output_dir={}", out.display()));
    for o in overrides {
        c.arg("--override").arg(o);
    }
    c.output().expect("binary runs")
}

pub fn report(out: &Path, cmd: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{cmd}.json"))).expect("report written");
    serde_json::from_str(&text).expect("report is JSON")
}

fn load(name: &str) -> Value {
    let text = std::fs::read_to_string(manifest_dir().join("schema").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Schema violations of a report, as messages.
pub fn report_violations(doc: &Value) -> Vec<String> {
    let registry = jsonschema::Registry::new()
        .add("urn:stokes-lab:config", load("config.schema.json"))
        .unwrap()
        .prepare()
        .unwrap();
    let v = jsonschema::options().with_registry(&registry).build(&load("report.schema.json")).unwrap();
    v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect()
}

pub fn config_violations(doc: &Value) -> Vec<String> {
    let v = jsonschema::validator_for(&load("config.schema.json")).unwrap();
    v.iter_errors(doc).map(|e| e.to_string()).collect()
}
