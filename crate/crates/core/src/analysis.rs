//! Decay-rate fits, empirical bound constants, linearity of constants against
//! squared kernel errors, and ensemble moments of coupled paths.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::gle_sim::{lyapunov_distance_sq, CoupledEnsemble, LyapunovParams, Trajectory};
use crate::grid::{GridFunction, TimeGrid};
use crate::kernel::WeightFunction;
use crate::volterra::gamma_star;

/// Values at or below this are treated as underflow and dropped from fits.
pub const UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `x(t) ~ t^{-rate}`.
    PowerLaw,
    /// `x(t) ~ e^{-rate t}`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Negated least-squares slope, positive for a decaying series.
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// Points used by the fit.
    pub used: usize,
    /// Points in the window dropped as non-positive or underflowed.
    pub dropped: usize,
}

/// Ordinary least squares on `(log t, log x)` or `(t, log x)` over the grid
/// points in `window`. Power-law fits also skip `t = 0`.
pub fn fit_decay(
    series: &GridFunction,
    model: DecayModel,
    window: (f64, f64),
) -> Result<DecayFit, AnalysisError> {
    let grid = series.grid();
    let (lo, hi) = clamp_window(grid, window)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for i in grid.window_indices(lo, hi) {
        let t = grid.time(i);
        if model == DecayModel::PowerLaw && t <= 0.0 {
            continue;
        }
        let v = series.get(i);
        if v <= UNDERFLOW {
            dropped += 1;
            continue;
        }
        xs.push(match model {
            DecayModel::PowerLaw => t.ln(),
            DecayModel::Exponential => t,
        });
        ys.push(v.ln());
    }
    if xs.len() < 5 {
        return Err(AnalysisError::TooFewPoints { usable: xs.len() });
    }
    let line = least_squares(&xs, &ys)?;
    Ok(DecayFit {
        model,
        rate: -line.slope,
        intercept: line.intercept,
        window: (lo, hi),
        r_squared: line.r_squared,
        used: xs.len(),
        dropped,
    })
}

fn clamp_window(grid: &TimeGrid, (lo, hi): (f64, f64)) -> Result<(f64, f64), AnalysisError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(AnalysisError::Invalid(format!("bad window [{lo}, {hi}]")));
    }
    let lo = lo.max(0.0);
    let hi = hi.min(grid.horizon());
    if lo > hi {
        return Err(AnalysisError::Invalid(format!(
            "window [{lo}, {hi}] lies outside the horizon {}",
            grid.horizon()
        )));
    }
    Ok((lo, hi))
}

struct Line {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    pearson: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<Line, AnalysisError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(AnalysisError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let pearson = if syy > 0.0 {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(Line {
        slope,
        intercept,
        r_squared,
        pearson,
    })
}

/// Fit window that avoids the transient and the noise floor: it starts at
/// the largest value of the series for `t >= t_start` and ends at the last
/// time the series is at least `factor` times its mean over the final
/// quarter of the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorWindow {
    pub start: f64,
    pub end: f64,
    pub floor: f64,
}

pub fn noise_floor_window(
    series: &GridFunction,
    t_start: f64,
    factor: f64,
) -> Result<FloorWindow, AnalysisError> {
    let grid = series.grid();
    let v = series.values();
    let n = grid.n_steps();
    let tail = &v[(3 * n) / 4..];
    let floor = tail.iter().sum::<f64>() / tail.len() as f64;
    let first = grid.window_indices(t_start.max(0.0), grid.horizon());
    let start = first
        .clone()
        .max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a)))
        .ok_or(AnalysisError::NotEnoughData {
            needed: 5,
            found: 0,
        })?;
    let end = (0..=n)
        .rev()
        .find(|&i| v[i] >= factor * floor)
        .unwrap_or(n);
    if end < start + 4 {
        return Err(AnalysisError::NotEnoughData {
            needed: 5,
            found: end.saturating_sub(start) + 1,
        });
    }
    Ok(FloorWindow {
        start: grid.time(start),
        end: grid.time(end),
        floor,
    })
}

/// `sup_t series(t) / (h(t) + offset)` over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstant {
    pub value: f64,
    /// `Tr(sigma sigma^T)`.
    pub offset: f64,
    pub weight: WeightFunction,
    pub window: (f64, f64),
    pub argmax_time: f64,
}

/// Window covering the grid except `t = 0`.
pub fn positive_times(grid: &TimeGrid) -> (f64, f64) {
    (grid.dt(), grid.horizon())
}

pub fn empirical_sup_ratio(
    series: &GridFunction,
    h: &WeightFunction,
    offset: f64,
    window: (f64, f64),
) -> Result<BoundConstant, AnalysisError> {
    if !(offset.is_finite() && offset >= 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "offset must be nonnegative, got {offset}"
        )));
    }
    let grid = series.grid();
    let (lo, hi) = clamp_window(grid, window)?;
    let mut value = 0.0;
    let mut argmax_time = lo;
    for i in grid.window_indices(lo, hi) {
        let t = grid.time(i);
        let denom = h.eval(t) + offset;
        if !(denom > 0.0) {
            return Err(AnalysisError::Invalid(format!(
                "h + offset vanishes at t = {t}"
            )));
        }
        let r = series.get(i) / denom;
        if r > value {
            value = r;
            argmax_time = t;
        }
    }
    Ok(BoundConstant {
        value,
        offset,
        weight: *h,
        window: (lo, hi),
        argmax_time,
    })
}

/// `c alpha^{1-beta} / (beta - 1)`, the damping above which the power-law
/// comparison equation decays at the kernel's own rate.
pub fn threshold_f(c: f64, alpha: f64, beta: f64) -> Result<f64, AnalysisError> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(AnalysisError::Invalid(format!("need beta > 1, got {beta}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(AnalysisError::Invalid(format!(
            "need alpha > 0, got {alpha}"
        )));
    }
    Ok(c * alpha.powf(1.0 - beta) / (beta - 1.0))
}

/// `p(a, beta) = ((a + beta)^2 - 4(a beta - c))^{1/2} / 2 - (a + beta) / 2`.
pub fn rate_p(a: f64, beta: f64, c: f64) -> f64 {
    gamma_star(a, c, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub slope: f64,
    pub intercept: f64,
    /// Zero when the `y` values are constant.
    pub pearson_r: f64,
    pub points: usize,
}

pub fn linearity_report(xs: &[f64], ys: &[f64]) -> Result<LinearityReport, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 4 {
        return Err(AnalysisError::NotEnoughData {
            needed: 4,
            found: xs.len(),
        });
    }
    let line = least_squares(xs, ys)?;
    Ok(LinearityReport {
        slope: line.slope,
        intercept: line.intercept,
        pearson_r: line.pearson,
        points: xs.len(),
    })
}

/// Median of the finite values, or `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Pointwise functional averaged over an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// Squared Euclidean distance between true and perturbed states.
    DiffSq,
    /// Squared Lyapunov distance between true and perturbed second-order
    /// states.
    LyapunovSq,
    /// Squared norm of the true state.
    NormSq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub mean: GridFunction,
    /// Standard error of the batch mean; zero for a single batch.
    pub std_err: GridFunction,
}

pub fn ensemble_moments(
    ens: &CoupledEnsemble,
    functional: Functional,
    params: Option<&LyapunovParams>,
) -> Result<EnsembleMoments, AnalysisError> {
    match functional {
        Functional::NormSq => path_moments(&ens.true_paths, |p, i| {
            p.state(i).iter().map(|v| v * v).sum()
        }),
        Functional::DiffSq => pair_moments(ens, |a, b, i| {
            a.state(i)
                .iter()
                .zip(b.state(i))
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        }),
        Functional::LyapunovSq => {
            let p = params.ok_or_else(|| {
                AnalysisError::Invalid("Lyapunov distance needs parameters".into())
            })?;
            if let Some(t) = ens.true_paths.first() {
                if t.position(0).is_none() {
                    return Err(AnalysisError::Invalid(
                        "Lyapunov distance needs second-order paths".into(),
                    ));
                }
                if t.dim() != p.dim() {
                    return Err(AnalysisError::Invalid(format!(
                        "parameters have dimension {}, paths {}",
                        p.dim(),
                        t.dim()
                    )));
                }
            }
            pair_moments(ens, |a, b, i| {
                let diff = |u: &[f64], w: &[f64]| -> Vec<f64> {
                    u.iter().zip(w).map(|(x, y)| x - y).collect()
                };
                let z = diff(a.position(i).unwrap_or(&[]), b.position(i).unwrap_or(&[]));
                let w = diff(a.velocity(i), b.velocity(i));
                lyapunov_distance_sq(p, &z, &w)
            })
        }
    }
}

/// Batch mean and standard error of `f(path, i)`.
pub fn path_moments(
    paths: &[Trajectory],
    f: impl Fn(&Trajectory, usize) -> f64,
) -> Result<EnsembleMoments, AnalysisError> {
    let first = paths.first().ok_or(AnalysisError::EmptyEnsemble)?;
    let grid = *first.grid();
    let cols: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| (0..grid.len()).map(|i| f(p, i)).collect())
        .collect();
    moments_from_columns(grid, &cols)
}

fn pair_moments(
    ens: &CoupledEnsemble,
    f: impl Fn(&Trajectory, &Trajectory, usize) -> f64,
) -> Result<EnsembleMoments, AnalysisError> {
    let first = ens.true_paths.first().ok_or(AnalysisError::EmptyEnsemble)?;
    let grid = *first.grid();
    let cols: Vec<Vec<f64>> = ens
        .true_paths
        .iter()
        .zip(&ens.pert_paths)
        .map(|(a, b)| (0..grid.len()).map(|i| f(a, b, i)).collect())
        .collect();
    moments_from_columns(grid, &cols)
}

fn moments_from_columns(grid: TimeGrid, cols: &[Vec<f64>]) -> Result<EnsembleMoments, AnalysisError> {
    let b = cols.len() as f64;
    let mut mean = vec![0.0; grid.len()];
    let mut se = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let m = cols.iter().map(|c| c[i]).sum::<f64>() / b;
        mean[i] = m;
        if cols.len() > 1 {
            let var = cols.iter().map(|c| (c[i] - m) * (c[i] - m)).sum::<f64>() / (b - 1.0);
            se[i] = (var / b).sqrt();
        }
    }
    Ok(EnsembleMoments {
        mean: GridFunction::new(grid, mean)?,
        std_err: GridFunction::new(grid, se)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::with_horizon(0.01, 20.0).unwrap()
    }

    #[test]
    fn exact_fits() {
        let g = grid();
        let s = GridFunction::from_fn(g, |t| 7.0 * t.max(0.5).powi(-3)).unwrap();
        let f = fit_decay(&s, DecayModel::PowerLaw, (1.0, 20.0)).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.intercept - 7f64.ln()).abs() < 1e-9);
        let s = GridFunction::from_fn(g, |t| 2.0 * (-0.5 * t).exp()).unwrap();
        let f = fit_decay(&s, DecayModel::Exponential, (0.0, 20.0)).unwrap();
        assert!((f.rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_needs_points() {
        let g = grid();
        let s = GridFunction::from_fn(g, |t| if t < 19.97 { 0.0 } else { 1.0 }).unwrap();
        assert!(matches!(
            fit_decay(&s, DecayModel::Exponential, (0.0, 20.0)),
            Err(AnalysisError::TooFewPoints { usable: 4 })
        ));
    }

    #[test]
    fn threshold_examples() {
        assert!((threshold_f(1.0, 0.1, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((threshold_f(1.0, 0.1, 4.0).unwrap() - 1000.0 / 3.0).abs() < 1e-9);
        assert!(threshold_f(1.0, 0.1, 1.0).is_err());
        assert_eq!(rate_p(3.0, 2.0, 6.0), 0.0);
        assert!((rate_p(3.0, 2.0, 1.0) + (5.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn linearity_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = linearity_report(&xs, &xs.map(|x| 3.0 * x)).unwrap();
        assert!((r.slope - 3.0).abs() < 1e-14);
        assert!((r.pearson_r - 1.0).abs() < 1e-14);
        let r = linearity_report(&xs, &[2.0; 5]).unwrap();
        assert_eq!((r.slope, r.pearson_r), (0.0, 0.0));
        assert_eq!(
            linearity_report(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]),
            Err(AnalysisError::DegenerateX)
        );
        assert!(linearity_report(&xs[..3], &xs[..3]).is_err());
    }

    #[test]
    fn sup_ratio_examples() {
        let g = grid();
        let h = WeightFunction::power_law(1.0, 6.0).unwrap();
        let s = h.sample(&g);
        let w = positive_times(&g);
        assert!((empirical_sup_ratio(&s, &h, 0.0, w).unwrap().value - 1.0).abs() < 1e-15);
        let zero = GridFunction::zeros(g);
        assert_eq!(empirical_sup_ratio(&zero, &h, 1e-6, w).unwrap().value, 0.0);
        let off = 1e-6;
        let s2 = s.map(|v| 2.0 * v + off).unwrap();
        let c = empirical_sup_ratio(&s2, &h, 0.0, w).unwrap().value;
        let min_h = h.eval(g.horizon());
        assert!(c >= 2.0 - 1e-12 && c <= 2.0 + off / min_h);
    }

    #[test]
    fn floor_window_cuts_plateau() {
        let g = grid();
        let s = GridFunction::from_fn(g, |t| (1.0 + t).powi(-8) + 1e-9).unwrap();
        let w = noise_floor_window(&s, 1.0, 10.0).unwrap();
        assert_eq!(w.start, 1.0);
        // (1+t)^{-8} = 9e-9 at t ~ 9.0
        assert!((w.end - 9.0).abs() < 0.2, "{w:?}");
    }

    #[test]
    fn median_handles_parity() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }
}
