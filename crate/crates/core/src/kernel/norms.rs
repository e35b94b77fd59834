use serde::{Deserialize, Serialize};

use super::{Kernel, WeightFunction};
use crate::error::{GridError, KernelError};
use crate::grid::{trapezoid, trapezoid_convolution, GridFunction, TimeGrid};
use crate::quad;

/// Weighted Schur-type norm of a kernel with its quadrature diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurNorm {
    pub value: f64,
    /// Squared norm accumulated on the grid.
    pub head: f64,
    /// Squared contribution of lags beyond the horizon (translation-invariant
    /// kernels only).
    pub tail: f64,
    /// Grid time where the supremum binds; `None` when it is the `t -> inf`
    /// limit.
    pub argmax_time: Option<f64>,
    /// The weighted integral did not settle; `value` then covers the head only.
    pub divergent: bool,
    pub negative_memory: bool,
}

/// `sup_t ( int_0^t |K(t,s)|^2 / h(t-s) ds )^{1/2}` with `|.|` the operator norm.
///
/// Translation-invariant kernels have a nondecreasing inner integral, so the
/// supremum is its `t -> inf` limit: the grid trapezoid sum plus an adaptive
/// quadrature tail beyond the horizon. Two-time kernels take the maximum over
/// grid times.
pub fn schur_norm(
    kernel: &Kernel,
    h: &WeightFunction,
    grid: &TimeGrid,
) -> Result<SchurNorm, KernelError> {
    let dt = grid.dt();
    let negative_memory = kernel.may_be_negative();
    if kernel.is_translation_invariant() {
        let q = |tau: f64| weighted_square(kernel.norm_at(tau, 0.0), h.eval(tau));
        let samples: Vec<f64> = grid.times().map(q).collect();
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(KernelError::Grid(GridError::NonFinite { index: i }));
        }
        let head = trapezoid(&samples, dt);
        let horizon = grid.horizon();
        let (tail, divergent) = match lag_tail(kernel, &q, horizon) {
            Ok(v) => (v, false),
            Err(_) => (0.0, true),
        };
        Ok(SchurNorm {
            value: (head + tail).sqrt(),
            head,
            tail,
            argmax_time: divergent.then_some(horizon),
            divergent,
            negative_memory,
        })
    } else {
        let n = grid.len();
        let mut best = (0.0, 0usize);
        let mut row = vec![0.0; n];
        for i in 1..n {
            let t = grid.time(i);
            for (j, r) in row.iter_mut().enumerate().take(i + 1) {
                let s = grid.time(j);
                *r = weighted_square(kernel.norm_at(t, s), h.eval(t - s));
            }
            let v = trapezoid(&row[..=i], dt);
            if !v.is_finite() {
                return Err(KernelError::Grid(GridError::NonFinite { index: i }));
            }
            if v > best.0 {
                best = (v, i);
            }
        }
        Ok(SchurNorm {
            value: best.0.sqrt(),
            head: best.0,
            tail: 0.0,
            argmax_time: Some(grid.time(best.1)),
            divergent: false,
            negative_memory,
        })
    }
}

fn weighted_square(k: f64, h: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * k / h
    }
}

fn lag_tail(kernel: &Kernel, q: &impl Fn(f64) -> f64, from: f64) -> Result<f64, KernelError> {
    if let Some(end) = kernel.support_end() {
        if end <= from {
            return Ok(0.0);
        }
    }
    let mut total = 0.0;
    let mut lo = from;
    for b in kernel.discontinuities().into_iter().filter(|b| *b > from) {
        total += quad::integrate(q, lo, b, 1e-300, 1e-12)?.value;
        lo = b;
    }
    if kernel.support_end().is_some_and(|e| e <= lo) {
        return Ok(total);
    }
    Ok(total + quad::integrate_to_infinity(q, lo, 1.0, 1e-12)?.value)
}

/// `M_h = sup_t (h*h)(t) / h(t)` over the grid, joined with the limit
/// `2 h_hat(0)` for subexponential weights.
pub fn mh_constant(h: &WeightFunction, grid: &TimeGrid) -> f64 {
    let samples = h.sample(grid);
    let conv = trapezoid_convolution(samples.values(), samples.values(), grid.dt());
    let grid_sup = conv
        .iter()
        .zip(samples.values())
        .skip(1)
        .map(|(c, v)| c / v)
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max);
    if h.is_subexponential() {
        grid_sup.max(2.0 * h.laplace_transform(0.0).unwrap_or(0.0))
    } else {
        grid_sup
    }
}

/// `M_h * sup_t |f(t) / h(t)|`.
pub fn weighted_sup_norm(
    f: &GridFunction,
    h: &WeightFunction,
    grid: &TimeGrid,
) -> Result<f64, KernelError> {
    grid.ensure_same(f.grid())?;
    let ratio = grid
        .times()
        .zip(f.values())
        .map(|(t, v)| (v / h.eval(t)).abs())
        .fold(0.0, f64::max);
    if ratio == 0.0 {
        return Ok(0.0);
    }
    Ok(mh_constant(h, grid) * ratio)
}

/// Empirical limits of the subexponential class, for `e^{-mu t} h(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubexpDiagnostic {
    /// `(h*h)/h` at the first grid point after 0; should vanish.
    pub ratio_near_zero: f64,
    /// `(h*h)/h` at the horizon; should approach `2 h_hat(0)`.
    pub ratio_at_horizon: f64,
    /// `2 h_hat(0)` by grid quadrature.
    pub twice_h_hat: f64,
    /// `max_{s <= S} |h(T-s)/h(T) - 1|`; should vanish.
    pub shift_deviation: f64,
    /// The second half of the horizon carries more than 5% of `h_hat(0)`.
    pub divergent: bool,
    pub near_zero_ok: bool,
    pub convolution_ok: bool,
    pub shift_ok: bool,
}

impl SubexpDiagnostic {
    pub const TOLERANCE: f64 = 0.05;

    pub fn passes(&self) -> bool {
        self.near_zero_ok && self.convolution_ok && self.shift_ok && !self.divergent
    }
}

/// Diagnostic for a parametric weight, with shift window `S = 1`.
pub fn subexponential_diagnostic(h: &WeightFunction, grid: &TimeGrid) -> SubexpDiagnostic {
    subexponential_diagnostic_sampled(&h.sample(grid), h.mu(), 1.0)
}

/// Diagnostic on sampled values, so that functions outside the parametric
/// weight families (constants, pure exponentials at their own rate) can be
/// inspected too.
pub fn subexponential_diagnostic_sampled(
    h: &GridFunction,
    mu: f64,
    shift_window: f64,
) -> SubexpDiagnostic {
    let grid = h.grid();
    let dt = grid.dt();
    let hbar: Vec<f64> = grid
        .times()
        .zip(h.values())
        .map(|(t, v)| (-mu * t).exp() * v)
        .collect();
    let n = hbar.len() - 1;
    let conv = trapezoid_convolution(&hbar, &hbar, dt);
    let ratio = |i: usize| conv[i] / hbar[i];
    let total = trapezoid(&hbar, dt);
    let second_half = trapezoid(&hbar[n / 2..], dt);
    let divergent = second_half > SubexpDiagnostic::TOLERANCE * total;
    let twice_h_hat = 2.0 * total;
    let ratio_near_zero = ratio(1);
    let ratio_at_horizon = ratio(n);
    let shift_steps = ((shift_window / dt).round() as usize).min(n);
    let shift_deviation = (0..=shift_steps)
        .map(|j| (hbar[n - j] / hbar[n] - 1.0).abs())
        .fold(0.0, f64::max);
    let tol = SubexpDiagnostic::TOLERANCE;
    SubexpDiagnostic {
        ratio_near_zero,
        ratio_at_horizon,
        twice_h_hat,
        shift_deviation,
        divergent,
        near_zero_ok: ratio_near_zero.abs() <= tol * twice_h_hat,
        convolution_ok: !divergent
            && (ratio_at_horizon - twice_h_hat).abs() <= tol * twice_h_hat,
        shift_ok: shift_deviation <= tol,
    }
}

/// Which stability inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionTag {
    /// `mu + 2 gamma > 2 |K| h_hat^{1/2}`.
    FirstOrderMoment,
    /// `mu + 2 gamma > 2 |dK| (2 h_hat)^{1/2}`.
    FirstOrderError,
    /// `mu + 2 gamma lambda > 2 (2 |K|^2 h_hat)^{1/2}`.
    SecondOrderMoment,
    /// `mu + 2 gamma lambda > 4 (|dK|^2 h_hat)^{1/2}`.
    SecondOrderError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionInputs {
    pub gamma: f64,
    pub mu: f64,
    /// Contraction parameter; required by the second-order conditions.
    pub lambda: Option<f64>,
    /// Schur norm of the kernel (or of the kernel error).
    pub kernel_norm: f64,
    /// `h_hat(mu)`, or `None` when it diverges.
    pub h_hat: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    Holds,
    Fails,
    NotCheckable,
}

impl ConditionStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Holds => "holds",
            Self::Fails => "fails",
            Self::NotCheckable => "not_checkable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub status: ConditionStatus,
    pub lhs: f64,
    pub rhs: f64,
}

impl ConditionCheck {
    pub fn holds(&self) -> bool {
        self.status == ConditionStatus::Holds
    }
}

pub fn check_condition(tag: ConditionTag, p: &ConditionInputs) -> ConditionCheck {
    let second = matches!(
        tag,
        ConditionTag::SecondOrderMoment | ConditionTag::SecondOrderError
    );
    let lambda = if second { p.lambda } else { Some(1.0) };
    let (Some(lambda), Some(h_hat)) = (lambda, p.h_hat.filter(|v| v.is_finite())) else {
        let lhs = p.mu + 2.0 * p.gamma * p.lambda.unwrap_or(if second { 0.0 } else { 1.0 });
        return ConditionCheck {
            status: ConditionStatus::NotCheckable,
            lhs,
            rhs: f64::INFINITY,
        };
    };
    let k = p.kernel_norm;
    let lhs = p.mu + 2.0 * p.gamma * lambda;
    let rhs = match tag {
        ConditionTag::FirstOrderMoment => 2.0 * k * h_hat.sqrt(),
        ConditionTag::FirstOrderError => 2.0 * k * (2.0 * h_hat).sqrt(),
        ConditionTag::SecondOrderMoment => 2.0 * (2.0 * k * k * h_hat).sqrt(),
        ConditionTag::SecondOrderError => 4.0 * (k * k * h_hat).sqrt(),
    };
    ConditionCheck {
        status: if lhs > rhs {
            ConditionStatus::Holds
        } else {
            ConditionStatus::Fails
        },
        lhs,
        rhs,
    }
}
