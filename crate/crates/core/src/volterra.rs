//! Convolutions, resolvents and linear integro-differential equations on a
//! uniform grid.
//!
//! All time integrals use the composite trapezoid rule, so the discrete
//! objects here satisfy their defining identities exactly in the discrete
//! sense and approximate the continuous ones to second order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::VolterraError;
use crate::grid::{trapezoid, trapezoid_convolution, GridFunction, TimeGrid};
use crate::kernel::{ConditionStatus, ExpMode, Kernel};

/// `(f * g)(t) = int_0^t f(t - s) g(s) ds`.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction, VolterraError> {
    f.grid().ensure_same(g.grid())?;
    let values = trapezoid_convolution(f.values(), g.values(), f.grid().dt());
    Ok(GridFunction::new(*f.grid(), values)?)
}

/// `int_0^T |h|` by the trapezoid rule.
pub fn l1_norm(h: &GridFunction) -> f64 {
    trapezoid(
        &h.values().iter().map(|v| v.abs()).collect::<Vec<_>>(),
        h.grid().dt(),
    )
}

/// Solution of `r = h + h * r` by forward substitution in the trapezoid
/// system: `r_0 = h_0` and
/// `r_i (1 - dt h_0 / 2) = h_i + dt (h_i r_0 / 2 + sum_{0<j<i} h_{i-j} r_j)`.
pub fn resolvent(h: &GridFunction) -> Result<GridFunction, VolterraError> {
    let dt = h.grid().dt();
    let hv = h.values();
    let denom = 1.0 - 0.5 * dt * hv[0];
    if denom == 0.0 {
        return Err(VolterraError::SingularStep);
    }
    let mut r = vec![0.0; hv.len()];
    r[0] = hv[0];
    for i in 1..hv.len() {
        let mut acc = 0.5 * hv[i] * r[0];
        for j in 1..i {
            acc += hv[i - j] * r[j];
        }
        r[i] = (hv[i] + dt * acc) / denom;
        if !r[i].is_finite() {
            return Err(VolterraError::Divergence {
                step: i,
                time: h.grid().time(i),
            });
        }
    }
    Ok(GridFunction::new(*h.grid(), r)?)
}

/// Partial sums of `sum_{n >= 1} h^{*n}`.
#[derive(Debug, Clone)]
pub struct NeumannSeries {
    pub sum: GridFunction,
    pub terms: usize,
    /// Sup norm of the last term added.
    pub last_term_sup: f64,
}

/// Neumann series of the resolvent; stops once a term's sup norm drops
/// below `1e-12` or after 200 terms.
pub fn neumann_series(h: &GridFunction) -> Result<NeumannSeries, VolterraError> {
    neumann_series_with(h, 200, 1e-12)
}

pub fn neumann_series_with(
    h: &GridFunction,
    max_terms: usize,
    tol: f64,
) -> Result<NeumannSeries, VolterraError> {
    let dt = h.grid().dt();
    let mut term = h.values().to_vec();
    let mut sum = term.clone();
    let mut terms = 1;
    let mut last = sup(&term);
    while last >= tol && terms < max_terms {
        term = trapezoid_convolution(h.values(), &term, dt);
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        terms += 1;
        last = sup(&term);
        if !last.is_finite() {
            return Err(VolterraError::Divergence {
                step: terms,
                time: h.grid().horizon(),
            });
        }
    }
    Ok(NeumannSeries {
        sum: GridFunction::new(*h.grid(), sum)?,
        terms,
        last_term_sup: last,
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Resolvent with the Neumann-series cross-check applied when `|h|_1 < 1`.
#[derive(Debug, Clone)]
pub struct ResolventReport {
    pub r: GridFunction,
    pub l1_norm: f64,
    /// Sup distance between the direct solve and the Neumann series.
    pub neumann_gap: Option<f64>,
    pub warning: Option<String>,
}

pub fn resolvent_checked(h: &GridFunction) -> Result<ResolventReport, VolterraError> {
    let r = resolvent(h)?;
    let l1 = l1_norm(h);
    if l1 >= 1.0 {
        return Ok(ResolventReport {
            r,
            l1_norm: l1,
            neumann_gap: None,
            warning: Some(format!(
                "|h|_1 = {l1:.4} >= 1: Neumann cross-check skipped"
            )),
        });
    }
    let series = neumann_series(h)?;
    let gap = r.sup_distance(&series.sum)?;
    Ok(ResolventReport {
        r,
        l1_norm: l1,
        neumann_gap: Some(gap),
        warning: None,
    })
}

/// Time stepper for [`solve_integro_ode_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stepper {
    Euler,
    #[default]
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolverOptions {
    pub stepper: Stepper,
    /// Use the sum-of-exponentials recursion for the memory term when the
    /// problem's kernel admits one.
    pub fast_path: bool,
}

/// `x'(t) = -a x(t) + int_0^t k(t - s) x(s) ds + g(t)`, `x(0) = y0`.
#[derive(Debug, Clone)]
pub struct IntegroOdeProblem {
    a: f64,
    k: GridFunction,
    g: GridFunction,
    y0: f64,
    kernel: Option<Kernel>,
}

impl IntegroOdeProblem {
    /// Requires `a > 0`, `g >= 0` and `y0 >= 0`. Sign-changing `k` is
    /// accepted and reported by [`IntegroOdeProblem::has_negative_memory`].
    pub fn new(a: f64, k: GridFunction, g: GridFunction, y0: f64) -> Result<Self, VolterraError> {
        let p = Self::new_unchecked(a, k, g, y0)?;
        if p.g.values().iter().any(|v| *v < 0.0) {
            return Err(VolterraError::InvalidProblem(
                "forcing g must be nonnegative".into(),
            ));
        }
        if !(y0 >= 0.0) {
            return Err(VolterraError::InvalidProblem(format!(
                "initial value must be nonnegative, got {y0}"
            )));
        }
        Ok(p)
    }

    fn new_unchecked(
        a: f64,
        k: GridFunction,
        g: GridFunction,
        y0: f64,
    ) -> Result<Self, VolterraError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(VolterraError::InvalidProblem(format!(
                "damping a must be positive, got {a}"
            )));
        }
        if !y0.is_finite() {
            return Err(VolterraError::InvalidProblem("non-finite y0".into()));
        }
        k.grid().ensure_same(g.grid())?;
        Ok(Self {
            a,
            k,
            g,
            y0,
            kernel: None,
        })
    }

    /// Problem with the kernel sampled on `grid`; keeps the kernel for the
    /// exponential fast path and Laplace-transform checks.
    pub fn from_kernel(
        a: f64,
        kernel: &Kernel,
        g: GridFunction,
        y0: f64,
    ) -> Result<Self, VolterraError> {
        let k = kernel.sample(g.grid())?;
        let mut p = Self::new(a, k, g, y0)?;
        p.kernel = Some(kernel.clone());
        Ok(p)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn k(&self) -> &GridFunction {
        &self.k
    }

    pub fn g(&self) -> &GridFunction {
        &self.g
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.k.grid()
    }

    pub fn has_negative_memory(&self) -> bool {
        self.k.values().iter().any(|v| *v < 0.0)
    }

    /// Same problem with forcing `g - defect`; used to build sub-solutions.
    fn with_forcing(&self, g: GridFunction) -> Self {
        Self {
            g,
            ..self.clone()
        }
    }
}

/// Solves with Heun's method and the direct memory sum.
pub fn solve_integro_ode(p: &IntegroOdeProblem) -> Result<GridFunction, VolterraError> {
    solve_integro_ode_with(p, SolverOptions::default())
}

/// Explicit stepping `x_{i+1} = x_i + dt F_i` (Euler) or its trapezoid
/// corrector (Heun), where `F_i = -a x_i + I_i + g_i` and `I_i` is the
/// trapezoid memory sum over `x_0..x_i`. Heun is positivity preserving for
/// `k, g, y0 >= 0` when `a dt <= 1`.
pub fn solve_integro_ode_with(
    p: &IntegroOdeProblem,
    opts: SolverOptions,
) -> Result<GridFunction, VolterraError> {
    let modes = if opts.fast_path {
        p.kernel.as_ref().and_then(|k| k.exp_modes())
    } else {
        None
    };
    let grid = *p.grid();
    let dt = grid.dt();
    let n = grid.len();
    let kv = p.k.values();
    let gv = p.g.values();
    let mut memory: Box<dyn Memory> = match modes {
        Some(m) => Box::new(ModeMemory::new(&m, dt)),
        None => Box::new(DirectMemory { k: kv, dt }),
    };
    let half_k0 = 0.5 * dt * kv[0];
    let mut x = vec![0.0; n];
    x[0] = p.y0;
    // Memory integral at the current step, including its own endpoint.
    let mut current_mem = 0.0;
    for i in 0..n - 1 {
        let f_i = -p.a * x[i] + current_mem + gv[i];
        // Memory at step i+1 without the x_{i+1} endpoint contribution.
        let partial = memory.partial_next(&x, i);
        let next = match opts.stepper {
            Stepper::Euler => x[i] + dt * f_i,
            Stepper::Heun => {
                let pred = x[i] + dt * f_i;
                let f_pred = -p.a * pred + partial + half_k0 * pred + gv[i + 1];
                x[i] + 0.5 * dt * (f_i + f_pred)
            }
        };
        if !next.is_finite() {
            return Err(VolterraError::Divergence {
                step: i + 1,
                time: grid.time(i + 1),
            });
        }
        x[i + 1] = next;
        memory.push(next);
        current_mem = partial + half_k0 * next;
    }
    Ok(GridFunction::new(grid, x)?)
}

trait Memory {
    /// `dt (k_{i+1} x_0 / 2 + sum_{j=1}^{i} k_{i+1-j} x_j)`.
    fn partial_next(&mut self, x: &[f64], i: usize) -> f64;
    fn push(&mut self, _x_next: f64) {}
}

struct DirectMemory<'a> {
    k: &'a [f64],
    dt: f64,
}

impl Memory for DirectMemory<'_> {
    fn partial_next(&mut self, x: &[f64], i: usize) -> f64 {
        let k = self.k;
        let mut acc = 0.5 * k[i + 1] * x[0];
        for j in 1..=i {
            acc += k[i + 1 - j] * x[j];
        }
        self.dt * acc
    }
}

/// Scalar sum-of-exponentials memory: `S_i = rho S_{i-1} + x_i`, `S_0 = x_0 / 2`,
/// so that the partial sum for step `i+1` is `dt Re(amp rho S_i)`.
struct ModeMemory {
    rho: Vec<Complex64>,
    amp: Vec<Complex64>,
    state: Vec<Complex64>,
    dt: f64,
    started: bool,
}

impl ModeMemory {
    fn new(modes: &[ExpMode], dt: f64) -> Self {
        Self {
            rho: modes.iter().map(|m| (-m.rate * dt).exp()).collect(),
            amp: modes.iter().map(|m| m.amp * m.proj[0]).collect(),
            state: vec![Complex64::new(0.0, 0.0); modes.len()],
            dt,
            started: false,
        }
    }
}

impl Memory for ModeMemory {
    fn partial_next(&mut self, x: &[f64], _i: usize) -> f64 {
        if !self.started {
            self.state.iter_mut().for_each(|s| *s = Complex64::new(0.5 * x[0], 0.0));
            self.started = true;
        }
        let mut acc = 0.0;
        for ((s, rho), amp) in self.state.iter().zip(&self.rho).zip(&self.amp) {
            acc += (amp * rho * s).re;
        }
        self.dt * acc
    }

    fn push(&mut self, x_next: f64) {
        for (s, rho) in self.state.iter_mut().zip(&self.rho) {
            *s = rho * *s + x_next;
        }
    }
}

/// `z' = -a z + k * z`, `z(0) = 1`.
pub fn differential_resolvent(a: f64, k: &GridFunction) -> Result<GridFunction, VolterraError> {
    let g = GridFunction::zeros(*k.grid());
    let p = IntegroOdeProblem::new_unchecked(a, k.clone(), g, 1.0)?;
    solve_integro_ode(&p)
}

/// Largest real root of `lambda + a = c / (beta + lambda)`, in the
/// cancellation-free form `(a beta - c) / lambda_-` with
/// `lambda_- = -((a + beta) + sqrt((a - beta)^2 + 4c)) / 2`.
pub fn gamma_star(a: f64, c: f64, beta: f64) -> f64 {
    let disc = (a - beta) * (a - beta) + 4.0 * c;
    let lambda_minus = -0.5 * ((a + beta) + disc.sqrt());
    (a * beta - c) / lambda_minus
}

/// [`gamma_star`] for an exponential kernel.
pub fn characteristic_gamma_star(a: f64, kernel: &Kernel) -> Result<f64, VolterraError> {
    match kernel {
        Kernel::Exponential { c, beta } => {
            if !(a.is_finite() && a > 0.0) {
                return Err(VolterraError::InvalidProblem(format!(
                    "damping a must be positive, got {a}"
                )));
            }
            Ok(gamma_star(a, *c, *beta))
        }
        other => Err(VolterraError::InvalidProblem(format!(
            "characteristic root needs an exponential kernel, got {}",
            other.family_name()
        ))),
    }
}

/// Outcome of [`comparison_bound_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `mu + a > k_hat(mu)`.
    pub status: ConditionStatus,
    pub lhs: f64,
    pub rhs: f64,
    /// `sup_t x(t) / (y0 k(t) + (k * g)(t))` over the window.
    /// Infinite when the solution overflows.
    pub sup_ratio: f64,
    pub argmax_time: f64,
    /// Step at which the solution overflowed, if it did.
    pub diverged_at: Option<usize>,
    /// `None` when the solution diverged.
    pub dominance: Option<DominanceReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    /// `max_t (y(t) - x(t))`; nonpositive when the sub-solution stays below.
    pub max_excess: f64,
    pub holds: bool,
}

/// Window and defect used by [`comparison_bound_check`].
#[derive(Debug, Clone)]
pub struct ComparisonOptions {
    pub mu: f64,
    /// Start of the sup-ratio window; avoids `0 / 0` near `t = 0`.
    pub t_min: f64,
    pub t_max: Option<f64>,
    /// Nonnegative defect subtracted from the forcing to build a sub-solution.
    pub defect: Option<GridFunction>,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            mu: 0.0,
            t_min: 1.0,
            t_max: None,
            defect: None,
        }
    }
}

/// Evaluates the comparison condition, the empirical constant of the
/// comparison bound and dominance of a sub-solution.
///
/// `k_hat(mu)` comes from the problem's kernel when it was built with
/// [`IntegroOdeProblem::from_kernel`], and from grid quadrature otherwise.
pub fn comparison_bound_check(
    p: &IntegroOdeProblem,
    opts: &ComparisonOptions,
) -> Result<ComparisonReport, VolterraError> {
    let grid = *p.grid();
    let k_hat = match &p.kernel {
        Some(k) => k.laplace_transform(opts.mu).ok(),
        None => {
            let w: Vec<f64> = grid
                .times()
                .zip(p.k.values())
                .map(|(t, v)| (-opts.mu * t).exp() * v)
                .collect();
            Some(trapezoid(&w, grid.dt()))
        }
    };
    let lhs = opts.mu + p.a;
    let (status, rhs) = match k_hat {
        Some(v) if lhs > v => (ConditionStatus::Holds, v),
        Some(v) => (ConditionStatus::Fails, v),
        None => (ConditionStatus::NotCheckable, f64::INFINITY),
    };
    let x = match solve_integro_ode(p) {
        Ok(x) => x,
        Err(VolterraError::Divergence { step, time }) => {
            return Ok(ComparisonReport {
                status,
                lhs,
                rhs,
                sup_ratio: f64::INFINITY,
                argmax_time: time,
                diverged_at: Some(step),
                dominance: None,
            })
        }
        Err(e) => return Err(e),
    };
    let kg = convolve(&p.k, &p.g)?;
    let window = grid.window_indices(opts.t_min, opts.t_max.unwrap_or(grid.horizon()));
    let mut sup_ratio = 0.0;
    let mut argmax_time = grid.time(*window.start());
    for i in window {
        let denom = p.y0 * p.k.get(i) + kg.get(i);
        if denom > 0.0 {
            let r = x.get(i) / denom;
            if r > sup_ratio {
                sup_ratio = r;
                argmax_time = grid.time(i);
            }
        }
    }
    let defect = match &opts.defect {
        Some(d) => d.clone(),
        None => GridFunction::from_fn(grid, |t| 0.5 * (1.0 + t).powi(-2))?,
    };
    let dominance = dominance_check(p, &defect)?;
    Ok(ComparisonReport {
        status,
        lhs,
        rhs,
        sup_ratio,
        argmax_time,
        diverged_at: None,
        dominance: Some(dominance),
    })
}

/// Solves the sub-solution problem with forcing `g - defect` and compares it
/// with the equality solution pointwise.
pub fn dominance_check(
    p: &IntegroOdeProblem,
    defect: &GridFunction,
) -> Result<DominanceReport, VolterraError> {
    if defect.values().iter().any(|v| *v < 0.0) {
        return Err(VolterraError::InvalidProblem(
            "defect must be nonnegative".into(),
        ));
    }
    let x = solve_integro_ode(p)?;
    let sub = p.with_forcing(p.g.axpy(-1.0, defect)?);
    let y = solve_integro_ode(&sub)?;
    let mut max_excess = f64::NEG_INFINITY;
    let mut holds = true;
    for (yi, xi) in y.values().iter().zip(x.values()) {
        let e = yi - xi;
        max_excess = max_excess.max(e);
        if e > 1e-12 * (1.0 + xi.abs()) {
            holds = false;
        }
    }
    Ok(DominanceReport { max_excess, holds })
}
