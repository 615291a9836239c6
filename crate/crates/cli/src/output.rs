use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dspopt::SimulationReport;
use serde::Serialize;

/// Refuses to clobber existing files unless forced.
pub struct Writer {
    force: bool,
}

impl Writer {
    pub fn new(force: bool) -> Self {
        Self { force }
    }

    /// Fails before any work is done if an output already exists.
    pub fn check(&self, paths: &[&Path]) -> Result<()> {
        if !self.force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                bail!("{} already exists (use --force to overwrite)", p.display());
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path, contents: &str) -> Result<()> {
        self.check(&[path])?;
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
    }
}

/// `a.json` -> `a.quality.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.quality.json"))
}

/// `a.csv` -> `a.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Debug, Serialize)]
pub struct SolverManifest {
    pub max_iters: usize,
    pub step_scale: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct SimulationManifest {
    pub runs: usize,
    pub base_seed: u64,
}

/// Inputs and settings of one pipeline invocation.
#[derive(Debug, Serialize)]
pub struct ExperimentManifest {
    pub instance: String,
    pub plan: Option<String>,
    pub solver: Option<SolverManifest>,
    pub simulation: SimulationManifest,
    pub output: String,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    runs: usize,
    base_seed: u64,
    lagrangian: &'a dspopt::sim::PolicySummary,
    greedy: &'a dspopt::sim::PolicySummary,
    relative_profit: &'a dspopt::sim::RelativeStat,
    relative_cost: &'a dspopt::sim::RelativeStat,
    relative_revenue: &'a dspopt::sim::RelativeStat,
}

pub fn report_json(report: &SimulationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ReportDoc {
        runs: report.runs,
        base_seed: report.base_seed,
        lagrangian: &report.first,
        greedy: &report.second,
        relative_profit: &report.relative_profit,
        relative_cost: &report.relative_cost,
        relative_revenue: &report.relative_revenue,
    })?)
}
