use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ExperimentResult, ExperimentSpec};
use crate::error::ExperimentError;

/// Run details that vary between otherwise identical runs; written to
/// `meta.txt` so that the CSV files stay byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub git_describe: String,
    pub wall_clock_secs: f64,
    pub threads: usize,
}

pub fn git_describe_fallback() -> &'static str {
    "unknown"
}

/// Writes `{out}/{experiment}/{report.csv, summary.csv, meta.txt}` and, for
/// simulations, `dumps/{system}/{batch}.csv`. Returns the experiment
/// directory.
pub fn write_outputs(
    out: &Path,
    spec: &ExperimentSpec,
    result: &ExperimentResult,
    meta: &RunMeta,
) -> Result<PathBuf, ExperimentError> {
    let dir = out.join(spec.kind().name());
    fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    result.report().write_csv(&dir.join("report.csv"))?;
    result.summary().write_csv(&dir.join("summary.csv"))?;
    if let ExperimentResult::Simulate(sim) = result {
        for (system, paths) in &sim.systems {
            for (b, p) in paths.iter().enumerate() {
                p.write_csv(&dir.join("dumps").join(system).join(format!("{b}.csv")))?;
            }
        }
    }
    let mut text = String::new();
    let _ = writeln!(text, "experiment = {}", spec.kind());
    let _ = writeln!(text, "git_describe = {}", meta.git_describe);
    let _ = writeln!(text, "wall_clock_secs = {:.3}", meta.wall_clock_secs);
    let _ = writeln!(text, "threads = {}", meta.threads);
    let _ = writeln!(text, "diverged = {}", result.diverged());
    let _ = writeln!(text, "\n# resolved configuration");
    text.push_str(&spec.to_toml());
    let path = dir.join("meta.txt");
    fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(dir)
}
