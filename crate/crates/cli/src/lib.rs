//! Batch experiment runner: configuration, suites and report writers.

pub mod config;
pub mod report;
pub mod suites;

use config::{suite_seed, ExperimentConfig};
use report::{RunMetadata, SuiteReport, SuiteTiming};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use report::report_schema_version;

/// Result of a full run.
#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub reports: Vec<SuiteReport>,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Runs every suite of `cfg` in order. Suites that error are recorded as
/// failed without stopping the others. With `parallel` unset the suites run
/// on a single worker thread; results do not depend on the thread count.
pub fn run(cfg: &ExperimentConfig, config_path: &Path, parallel: bool) -> anyhow::Result<RunSummary> {
    let threads = if parallel { rayon::current_num_threads() } else { 1 };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let dir = cfg.resolved_output_dir();
    let started = report::unix_ms();
    let mut reports = Vec::new();
    let mut timings = Vec::new();
    for &suite in &cfg.suites {
        let seed = suite_seed(cfg.discretization.master_seed, suite);
        let clock = Instant::now();
        let outcome = pool
            .install(|| suites::run_suite_with_context(cfg, suite, seed))
            .map_err(|e| format!("{e:#}"));
        let rep = report::write_suite(&dir, suite.as_str(), suite.description(), seed, outcome)?;
        let seconds = clock.elapsed().as_secs_f64();
        eprintln!("{:<22} {}  ({seconds:.2} s)", suite.as_str(), if rep.pass { "PASS" } else { "FAIL" });
        if let Some(e) = &rep.error {
            eprintln!("  error: {e}");
        }
        for c in rep.checks.iter().filter(|c| !c.pass) {
            eprintln!("  failed check {}: measured {:e} ({})", c.name, c.measured, c.criterion);
        }
        timings.push(SuiteTiming { suite: suite.as_str().into(), pass: rep.pass, seconds });
        reports.push(rep);
    }
    let meta = RunMetadata {
        schema_version: report::SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_path: config_path.display().to_string(),
        started_unix_ms: started,
        finished_unix_ms: report::unix_ms(),
        threads,
        suites: timings,
    };
    report::write_metadata(&dir, &meta)?;
    Ok(RunSummary { output_dir: dir, reports })
}
