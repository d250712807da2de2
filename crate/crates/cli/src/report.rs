//! JSON and CSV output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// One named pass/fail assertion of an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub experiment: &'static str,
    pub assertions: Vec<Assertion>,
    pub data: Value,
    /// `(label, h, residual)` rows for the sweep CSV.
    pub sweep_rows: Vec<(String, f64, f64)>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "passed": self.passed(),
            "assertions": self.assertions,
            "data": self.data,
        })
    }
}

/// Write `<experiment>.json` and, when there are sweep rows, `<experiment>_sweep.csv`.
pub fn write_outcome(out: &Path, o: &ExperimentOutcome) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let json_path = out.join(format!("{}.json", o.experiment));
    fs::write(&json_path, serde_json::to_string_pretty(&o.to_json())? + "\n")?;
    written.push(json_path);
    if !o.sweep_rows.is_empty() {
        let csv_path = out.join(format!("{}_sweep.csv", o.experiment));
        let mut f = fs::File::create(&csv_path)?;
        writeln!(f, "label,h,residual")?;
        for (label, h, r) in &o.sweep_rows {
            writeln!(f, "{label},{h:e},{r:e}")?;
        }
        written.push(csv_path);
    }
    Ok(written)
}

pub fn print_summary(o: &ExperimentOutcome) {
    for a in &o.assertions {
        println!("[{}] {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
}
