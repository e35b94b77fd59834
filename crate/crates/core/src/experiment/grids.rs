use rayon::prelude::*;

use super::report::{Cell, Report};
use super::{ExpGridSpec, PowerLawGridSpec};
use crate::analysis::{fit_decay, rate_p, threshold_f, DecayFit, DecayModel};
use crate::error::{ExperimentError, VolterraError};
use crate::grid::{GridFunction, TimeGrid};
use crate::kernel::Kernel;
use crate::volterra::{solve_integro_ode_with, IntegroOdeProblem, SolverOptions};

/// Damping at or below `1.2 f(beta)` is reported but not held to the
/// kernel's rate.
pub const THRESHOLD_MARGIN: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawCell {
    pub a: f64,
    pub beta: f64,
    /// `f(beta)`, equal to `k_hat(0)`.
    pub threshold: f64,
    /// `ok`, `diverged` or `fit_failed`.
    pub status: &'static str,
    pub fit: Option<DecayFit>,
    /// `r / beta`, zero when `a < f(beta)`.
    pub ratio: f64,
}

impl PowerLawCell {
    pub fn above_threshold(&self) -> bool {
        self.a > self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawGridResult {
    pub spec: PowerLawGridSpec,
    /// Sorted by `a`, then `beta`.
    pub cells: Vec<PowerLawCell>,
}

fn solve(a: f64, kernel: &Kernel, grid: TimeGrid, fast: bool) -> Result<GridFunction, VolterraError> {
    let p = IntegroOdeProblem::from_kernel(a, kernel, GridFunction::zeros(grid), 1.0)?;
    solve_integro_ode_with(
        &p,
        SolverOptions {
            fast_path: fast,
            ..Default::default()
        },
    )
}

fn pairs(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().flat_map(|x| b.iter().map(move |y| (*x, *y))).collect()
}

/// Solves `x' = -a x + k * x`, `x(0) = 1` with `k = c (t + alpha)^{-beta}`
/// on every `(a, beta)` and fits `x ~ t^{-r}` on the fit window.
pub fn run_powerlaw_grid(spec: &PowerLawGridSpec) -> Result<PowerLawGridResult, ExperimentError> {
    let grid = TimeGrid::with_horizon(spec.dt, spec.t_final)?;
    let cells = pairs(&spec.a_values, &spec.beta_values)
        .into_par_iter()
        .map(|(a, beta)| -> Result<PowerLawCell, ExperimentError> {
            let threshold = threshold_f(spec.c, spec.alpha, beta)?;
            let kernel = Kernel::power_law(spec.c, spec.alpha, beta)?;
            let (status, fit) = match solve(a, &kernel, grid, false) {
                Ok(x) => match fit_decay(
                    &x,
                    DecayModel::PowerLaw,
                    (spec.fit_window[0], spec.fit_window[1]),
                ) {
                    Ok(f) => ("ok", Some(f)),
                    Err(_) => ("fit_failed", None),
                },
                Err(VolterraError::Divergence { .. }) => ("diverged", None),
                Err(e) => return Err(e.into()),
            };
            let ratio = match fit {
                Some(f) if a >= threshold => f.rate / beta,
                _ => 0.0,
            };
            Ok(PowerLawCell {
                a,
                beta,
                threshold,
                status,
                fit,
                ratio,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PowerLawGridResult {
        spec: spec.clone(),
        cells,
    })
}

impl PowerLawGridResult {
    pub fn report(&self) -> Report {
        let mut r = Report::new(&[
            "a",
            "beta",
            "threshold_f",
            "regime",
            "status",
            "fitted_rate",
            "r_squared",
            "ratio",
            "condition_lhs",
            "condition_rhs",
            "condition_holds",
        ]);
        for c in &self.cells {
            let regime = if c.a > THRESHOLD_MARGIN * c.threshold {
                "above_margin"
            } else if c.above_threshold() {
                "near_threshold"
            } else {
                "below_threshold"
            };
            r.push(vec![
                c.a.into(),
                c.beta.into(),
                c.threshold.into(),
                regime.into(),
                c.status.into(),
                Cell::opt(c.fit.map(|f| f.rate), c.status),
                Cell::opt(c.fit.map(|f| f.r_squared), c.status),
                c.ratio.into(),
                c.a.into(),
                c.threshold.into(),
                c.above_threshold().into(),
            ]);
        }
        r
    }

    pub fn summary(&self) -> Report {
        let mut r = Report::new(&["metric", "value"]);
        let checked: Vec<&PowerLawCell> = self
            .cells
            .iter()
            .filter(|c| c.a > THRESHOLD_MARGIN * c.threshold)
            .collect();
        let in_band = checked
            .iter()
            .filter(|c| (0.9..=1.1).contains(&c.ratio))
            .count();
        r.push(vec!["cells".into(), self.cells.len().into()]);
        r.push(vec!["cells_above_margin".into(), checked.len().into()]);
        r.push(vec!["ratio_within_10pct".into(), in_band.into()]);
        r.push(vec![
            "diverged".into(),
            self.cells.iter().filter(|c| c.status == "diverged").count().into(),
        ]);
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpGridCell {
    pub a: f64,
    pub beta: f64,
    /// `-p(a, beta)`, positive when the solution decays.
    pub theory_rate: f64,
    /// `ok`, `no_decay`, `diverged` or `fit_failed`.
    pub status: &'static str,
    pub fit: Option<DecayFit>,
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpGridResult {
    pub spec: ExpGridSpec,
    pub cells: Vec<ExpGridCell>,
}

impl ExpGridResult {
    /// Mean and maximum relative error over cells with a decay to fit.
    pub fn error_stats(&self) -> Option<(f64, f64, usize)> {
        let errs: Vec<f64> = self.cells.iter().filter_map(|c| c.rel_error).collect();
        if errs.is_empty() {
            return None;
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let max = errs.iter().copied().fold(0.0, f64::max);
        Some((mean, max, errs.len()))
    }
}

/// Characteristic rates below this are treated as no decay.
const NO_DECAY: f64 = 1e-12;

/// Solves with `k = c e^{-beta t}` (exponential-mode recursion) and fits
/// `x ~ e^{-r t}` against `-p(a, beta)`.
pub fn run_exp_grid(spec: &ExpGridSpec) -> Result<ExpGridResult, ExperimentError> {
    let grid = TimeGrid::with_horizon(spec.dt, spec.t_final)?;
    let window = spec
        .fit_window
        .map(|w| (w[0], w[1]))
        .unwrap_or((0.5 * grid.horizon(), grid.horizon()));
    let cells = pairs(&spec.a_values, &spec.beta_values)
        .into_par_iter()
        .map(|(a, beta)| -> Result<ExpGridCell, ExperimentError> {
            let theory_rate = -rate_p(a, beta, spec.c);
            let kernel = Kernel::exponential(spec.c, beta)?;
            let (mut status, fit) = match solve(a, &kernel, grid, true) {
                Ok(x) => match fit_decay(&x, DecayModel::Exponential, window) {
                    Ok(f) => ("ok", Some(f)),
                    Err(_) => ("fit_failed", None),
                },
                Err(VolterraError::Divergence { .. }) => ("diverged", None),
                Err(e) => return Err(e.into()),
            };
            let no_decay = theory_rate.abs() < NO_DECAY;
            if no_decay && status == "ok" {
                status = "no_decay";
            }
            let rel_error = match fit {
                Some(f) if !no_decay => Some((f.rate - theory_rate).abs() / theory_rate.abs()),
                _ => None,
            };
            Ok(ExpGridCell {
                a,
                beta,
                theory_rate,
                status,
                fit,
                rel_error,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExpGridResult {
        spec: spec.clone(),
        cells,
    })
}

impl ExpGridResult {
    pub fn report(&self) -> Report {
        let mut r = Report::new(&[
            "a",
            "beta",
            "theory_rate",
            "status",
            "fitted_rate",
            "r_squared",
            "rel_error",
            "condition_lhs",
            "condition_rhs",
            "condition_holds",
        ]);
        for c in &self.cells {
            let k_hat = self.spec.c / c.beta;
            r.push(vec![
                c.a.into(),
                c.beta.into(),
                c.theory_rate.into(),
                c.status.into(),
                Cell::opt(c.fit.map(|f| f.rate), c.status),
                Cell::opt(c.fit.map(|f| f.r_squared), c.status),
                Cell::opt(c.rel_error, c.status),
                c.a.into(),
                k_hat.into(),
                (c.a > k_hat).into(),
            ]);
        }
        r
    }

    pub fn summary(&self) -> Report {
        let mut r = Report::new(&["metric", "value"]);
        let stats = self.error_stats();
        r.push(vec!["cells".into(), self.cells.len().into()]);
        r.push(vec![
            "cells_compared".into(),
            stats.map(|s| s.2).unwrap_or(0).into(),
        ]);
        r.push(vec!["mean_rel_error".into(), Cell::opt(stats.map(|s| s.0), "none")]);
        r.push(vec!["max_rel_error".into(), Cell::opt(stats.map(|s| s.1), "none")]);
        r.push(vec![
            "diverged".into(),
            self.cells.iter().filter(|c| c.status == "diverged").count().into(),
        ]);
        r
    }
}
