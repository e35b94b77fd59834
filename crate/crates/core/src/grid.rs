//! Uniform time grids and scalar functions sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Uniform discretization `{0, dt, 2dt, ..., n_steps * dt}`.
///
/// Every quadrature and every simulation in the crate runs on one of these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self, GridError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(GridError::InvalidStep(dt));
        }
        if n_steps < 2 {
            return Err(GridError::TooFewSteps(n_steps));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid with step `dt` covering `[0, horizon]`; the step count is rounded
    /// to the nearest integer, so the realized horizon may differ from the
    /// request by less than `dt / 2`.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self, GridError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(GridError::InvalidHorizon(horizon));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(GridError::InvalidStep(dt));
        }
        Self::new(dt, (horizon / dt).round() as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// `t_i = i * dt`; `t_0` is exactly zero.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.time(i))
    }

    /// Same horizon, half the step.
    pub fn refined(&self) -> Self {
        Self {
            dt: self.dt / 2.0,
            n_steps: self.n_steps * 2,
        }
    }

    /// Indices of grid points with `lo <= t_i <= hi`, with a small slack so
    /// that window ends that are grid points up to rounding are included.
    pub fn window_indices(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let slack = 1e-9 * self.dt;
        let first = ((lo - slack) / self.dt).ceil().max(0.0) as usize;
        let last = (((hi + slack) / self.dt).floor().max(0.0) as usize).min(self.n_steps);
        first..=last
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<(), GridError> {
        if self == other {
            Ok(())
        } else {
            Err(GridError::Mismatch {
                left: (self.dt, self.n_steps),
                right: (other.dt, other.n_steps),
            })
        }
    }
}

/// A real-valued function sampled at every point of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index: i });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(grid, grid.times().map(f).collect())
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn last(&self) -> f64 {
        self.values[self.grid.n_steps]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Pointwise `self + c * other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<Self, GridError> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max of `|self - other|` over the grid.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64, GridError> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Composite trapezoid integral over the whole grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.dt)
    }

    /// Every other sample; the inverse of running the same computation on
    /// [`TimeGrid::refined`].
    pub fn coarsened(&self) -> Option<Self> {
        if self.grid.n_steps % 2 != 0 || self.grid.n_steps < 4 {
            return None;
        }
        let grid = TimeGrid {
            dt: self.grid.dt * 2.0,
            n_steps: self.grid.n_steps / 2,
        };
        Some(Self {
            grid,
            values: self.values.iter().step_by(2).copied().collect(),
        })
    }
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integrals `int_0^{t_i}` for every grid point.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * dt * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Trapezoid convolution `(f * g)(t_i) = int_0^{t_i} f(t_i - s) g(s) ds` on
/// uniformly spaced samples; the value at `t_0` is zero.
pub fn trapezoid_convolution(f: &[f64], g: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len().min(g.len());
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut acc = 0.5 * (f[i] * g[0] + f[0] * g[i]);
        for j in 1..i {
            acc += f[i - j] * g[j];
        }
        out[i] = dt * acc;
    }
    out
}
