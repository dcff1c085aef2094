//! Experiment orchestration: configuration, replica runs, metrics and output files.
//!
//! Every run validates its configuration before any computation, executes
//! replicas in parallel, merges their results in replica order and writes
//! `summary.json` plus CSV tables into the output directory.

mod config;
mod fields;
mod output;
mod particles;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    Experiment, ExperimentConfig, HierarchyParams, InitFamily, InitParams, KernelParams,
    OutputParams, SimParams, UuParams, UuStart,
};
pub use fields::{run_hierarchy_check, run_uu_solve};
pub use output::{EVENTS_HEADER, FIELD_HEADER};
pub use particles::{run_chaos, run_converge, run_relax};

use crate::error::{Error, Result};

/// Outcome of one built-in acceptance check of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Machine-readable result of a run.
///
/// `metrics` depends only on the configuration and seed; wall-clock data
/// lives in `timing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub seed: u64,
    pub config: String,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub timing: BTreeMap<String, f64>,
}

impl RunSummary {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: cfg.experiment,
            seed: cfg.seed,
            config: cfg.to_text(),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            timing: BTreeMap::new(),
        }
    }

    /// Records a metric; non-finite values are numerical errors.
    pub fn metric(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::numerical(format!(
                "metric {name} is not finite ({value})"
            )));
        }
        self.metrics.insert(name, value);
        Ok(())
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn write_json(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Runs the experiment named in the configuration.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    match cfg.experiment {
        Experiment::Relax => run_relax(cfg),
        Experiment::Converge => run_converge(cfg),
        Experiment::Chaos => run_chaos(cfg),
        Experiment::HierarchyCheck => run_hierarchy_check(cfg),
        Experiment::UuSolve => run_uu_solve(cfg),
    }
}

/// Metric key `name/N=../t=..`.
pub fn key(name: &str, n: Option<usize>, t: Option<f64>) -> String {
    let mut s = name.to_string();
    if let Some(n) = n {
        s.push_str(&format!("/N={n}"));
    }
    if let Some(t) = t {
        s.push_str(&format!("/t={t}"));
    }
    s
}

fn start(cfg: &ExperimentConfig) -> Result<(RunSummary, Instant)> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok((RunSummary::new(cfg), Instant::now()))
}

fn finish(mut summary: RunSummary, t0: Instant, cfg: &ExperimentConfig) -> Result<RunSummary> {
    summary
        .timing
        .insert("wall_seconds".into(), t0.elapsed().as_secs_f64());
    summary.write_json(&cfg.out_dir)?;
    Ok(summary)
}

/// Verdict of a sweep: each value below its predecessor by more than the
/// combined standard error.
pub fn decreasing_beyond_error(values: &[(f64, f64)]) -> bool {
    values
        .windows(2)
        .all(|w| w[0].0 - w[1].0 > (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_verdicts() {
        assert!(decreasing_beyond_error(&[
            (1.0, 0.1),
            (0.5, 0.1),
            (0.1, 0.05)
        ]));
        assert!(!decreasing_beyond_error(&[(1.0, 0.3), (0.7, 0.3)]));
        assert!(!decreasing_beyond_error(&[(1.0, 0.0), (1.2, 0.0)]));
        assert!(decreasing_beyond_error(&[(1.0, 0.0)]));
    }

    #[test]
    fn metric_names_and_finiteness() {
        assert_eq!(key("l1", Some(2000), Some(0.5)), "l1/N=2000/t=0.5");
        assert_eq!(key("x", None, None), "x");
        let mut s = RunSummary::new(&ExperimentConfig::new(Experiment::Relax));
        assert!(matches!(
            s.metric("bad", f64::NAN),
            Err(Error::Numerical { .. })
        ));
        s.metric("good", 1.0).unwrap();
        assert_eq!(s.get("good"), Some(1.0));
    }
}
