//! Report types and artifact writers.

use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: &str = "1.0.0";

pub fn report_schema_version() -> &'static str {
    SCHEMA_VERSION
}

/// One pass/fail decision inside a suite.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    /// Human-readable acceptance rule.
    pub criterion: String,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, measured: f64, criterion: impl Into<String>) -> Self {
        Self { name: name.into(), pass, measured, criterion: criterion.into(), detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// `(x, y, series)` triple for external plotting.
#[derive(Debug, Clone, Serialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

/// Everything a suite produces.
#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub checks: Vec<Check>,
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub tables: Vec<Table>,
    pub plot: Vec<PlotPoint>,
}

impl SuiteOutput {
    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.summary.insert(key.into(), v);
    }

    pub fn point(&mut self, series: &str, x: f64, y: f64) {
        self.plot.push(PlotPoint { x, y, series: series.into() });
    }
}

/// JSON report of one suite. Contains nothing run-dependent besides the inputs.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub schema_version: &'static str,
    pub suite: String,
    pub description: String,
    pub seed: u64,
    pub pass: bool,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub data_files: Vec<String>,
}

/// Timing and provenance of a run, kept apart from the reports.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    pub config_path: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub threads: usize,
    pub suites: Vec<SuiteTiming>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteTiming {
    pub suite: String,
    pub pass: bool,
    pub seconds: f64,
}

pub fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `<suite>.json`, one CSV per table and `<suite>_plot.csv`; returns the report.
pub fn write_suite(
    dir: &Path,
    suite: &str,
    description: &str,
    seed: u64,
    outcome: Result<SuiteOutput, String>,
) -> anyhow::Result<SuiteReport> {
    fs::create_dir_all(dir)?;
    let mut report = SuiteReport {
        schema_version: SCHEMA_VERSION,
        suite: suite.into(),
        description: description.into(),
        seed,
        pass: false,
        error: None,
        checks: Vec::new(),
        summary: Default::default(),
        data_files: Vec::new(),
    };
    match outcome {
        Err(e) => report.error = Some(e),
        Ok(out) => {
            report.pass = !out.checks.is_empty() && out.checks.iter().all(|c| c.pass);
            for t in &out.tables {
                let file = format!("{suite}_{}.csv", t.name);
                let mut w = csv::Writer::from_path(dir.join(&file))?;
                w.write_record(&t.header)?;
                for row in &t.rows {
                    w.write_record(row.iter().map(|v| format_number(*v)))?;
                }
                w.flush()?;
                report.data_files.push(file);
            }
            if !out.plot.is_empty() {
                let file = format!("{suite}_plot.csv");
                let mut w = csv::Writer::from_path(dir.join(&file))?;
                w.write_record(["x", "y", "series"])?;
                for p in &out.plot {
                    w.write_record([format_number(p.x), format_number(p.y), p.series.clone()])?;
                }
                w.flush()?;
                report.data_files.push(file);
            }
            report.checks = out.checks;
            report.summary = out.summary;
        }
    }
    write_json(&dir.join(format!("{suite}.json")), &report)?;
    Ok(report)
}

pub fn write_metadata(dir: &Path, meta: &RunMetadata) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("metadata.json");
    write_json(&path, meta)?;
    Ok(path)
}

/// Shortest round-trip representation; `NaN`/`inf` spelled out.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
