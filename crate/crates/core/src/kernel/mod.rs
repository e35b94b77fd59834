//! Memory kernels, weight functions and potentials, with the norms and
//! class diagnostics that enter the stability conditions.

mod norms;
mod potential;
mod weight;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::grid::{GridFunction, TimeGrid};
use crate::linalg::Matrix;
use crate::quad;

pub use norms::{
    check_condition, mh_constant, schur_norm, subexponential_diagnostic,
    subexponential_diagnostic_sampled, weighted_sup_norm,
    ConditionCheck, ConditionInputs, ConditionStatus, ConditionTag, SchurNorm, SubexpDiagnostic,
};
pub use potential::{ConvexPart, GradientFn, PotentialSpec};
pub use weight::{WeightForm, WeightFunction};

/// How a base kernel is deformed by a [`Kernel::Perturbed`] wrapper.
///
/// For power-law bases `Translation` shifts time and `Dilation` raises the
/// exponent; for exponential bases `Translation` shifts the rates (a factor
/// `e^{-alpha t}`) and `Dilation` shifts time. `Cutoff` and `Oscillation`
/// multiply any base by `1_{tau <= alpha}` and `cos(alpha tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationFamily {
    Translation,
    Dilation,
    Cutoff,
    Oscillation,
}

impl PerturbationFamily {
    pub const ALL: [PerturbationFamily; 4] = [
        PerturbationFamily::Translation,
        PerturbationFamily::Dilation,
        PerturbationFamily::Cutoff,
        PerturbationFamily::Oscillation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Translation => "translation",
            Self::Dilation => "dilation",
            Self::Cutoff => "cutoff",
            Self::Oscillation => "oscillation",
        }
    }
}

impl fmt::Display for PerturbationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// User-supplied two-time kernel `(t, s) -> K(t, s)`.
pub type TwoTimeFn = Arc<dyn Fn(f64, f64) -> Matrix + Send + Sync>;

/// One term `Re(amp * e^{-rate * tau}) * proj` of a sum-of-exponentials kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpMode {
    pub rate: Complex64,
    pub amp: Complex64,
    /// Row-major `d x d` matrix.
    pub proj: Vec<f64>,
}

/// A matrix-valued memory kernel `K(t, s)`.
#[derive(Clone)]
pub enum Kernel {
    /// `c (tau + alpha)^{-beta}`.
    PowerLaw { c: f64, alpha: f64, beta: f64 },
    /// `c e^{-beta tau}`.
    Exponential { c: f64, beta: f64 },
    /// `Q e^{-Sigma tau} Q^T`.
    MatrixExponential { eigvecs: Matrix, eigvals: Vec<f64> },
    Perturbed {
        base: Box<Kernel>,
        family: PerturbationFamily,
        alpha: f64,
    },
    TwoTime { evaluator: TwoTimeFn, dim: usize },
    /// `sum_i c_i K_i`; the empty sum is the zero kernel.
    Linear { terms: Vec<(f64, Kernel)>, dim: usize },
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PowerLaw { c, alpha, beta } => f
                .debug_struct("PowerLaw")
                .field("c", c)
                .field("alpha", alpha)
                .field("beta", beta)
                .finish(),
            Self::Exponential { c, beta } => f
                .debug_struct("Exponential")
                .field("c", c)
                .field("beta", beta)
                .finish(),
            Self::MatrixExponential { eigvecs, eigvals } => f
                .debug_struct("MatrixExponential")
                .field("eigvecs", &eigvecs.rows())
                .field("eigvals", eigvals)
                .finish(),
            Self::Perturbed {
                base,
                family,
                alpha,
            } => f
                .debug_struct("Perturbed")
                .field("base", base)
                .field("family", family)
                .field("alpha", alpha)
                .finish(),
            Self::TwoTime { dim, .. } => f.debug_struct("TwoTime").field("dim", dim).finish(),
            Self::Linear { terms, dim } => f
                .debug_struct("Linear")
                .field("terms", terms)
                .field("dim", dim)
                .finish(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), KernelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl Kernel {
    pub fn power_law(c: f64, alpha: f64, beta: f64) -> Result<Self, KernelError> {
        positive("c", c)?;
        positive("alpha", alpha)?;
        if !(beta.is_finite() && beta > 1.0) {
            return Err(KernelError::InvalidParameter(format!(
                "power-law exponent must exceed 1, got {beta}"
            )));
        }
        Ok(Self::PowerLaw { c, alpha, beta })
    }

    pub fn exponential(c: f64, beta: f64) -> Result<Self, KernelError> {
        positive("c", c)?;
        positive("beta", beta)?;
        Ok(Self::Exponential { c, beta })
    }

    /// `Q e^{-diag(eigvals) t} Q^T`; `Q` must be orthogonal to 1e-10.
    pub fn matrix_exponential(eigvecs: Matrix, eigvals: Vec<f64>) -> Result<Self, KernelError> {
        let d = eigvecs.dim();
        if eigvals.len() != d {
            return Err(KernelError::DimensionMismatch(d, eigvals.len()));
        }
        for v in &eigvals {
            positive("eigenvalue", *v)?;
        }
        let gram = &eigvecs.transpose() * &eigvecs;
        if (&gram - &Matrix::identity(d)).frobenius() > 1e-10 {
            return Err(KernelError::InvalidParameter(
                "eigenvector matrix is not orthogonal".into(),
            ));
        }
        Ok(Self::MatrixExponential { eigvecs, eigvals })
    }

    pub fn perturbed(
        base: Kernel,
        family: PerturbationFamily,
        alpha: f64,
    ) -> Result<Self, KernelError> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "perturbation size must be nonnegative, got {alpha}"
            )));
        }
        let supported = match family {
            PerturbationFamily::Translation | PerturbationFamily::Dilation => matches!(
                base,
                Self::PowerLaw { .. } | Self::Exponential { .. } | Self::MatrixExponential { .. }
            ),
            PerturbationFamily::Cutoff | PerturbationFamily::Oscillation => true,
        };
        if !supported {
            return Err(KernelError::UnsupportedPerturbation {
                family: family.name(),
                base: base.family_name(),
            });
        }
        Ok(Self::Perturbed {
            base: Box::new(base),
            family,
            alpha,
        })
    }

    pub fn two_time(
        dim: usize,
        evaluator: impl Fn(f64, f64) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self::TwoTime {
            evaluator: Arc::new(evaluator),
            dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::Linear {
            terms: Vec::new(),
            dim,
        }
    }

    pub fn linear(terms: Vec<(f64, Kernel)>) -> Result<Self, KernelError> {
        let dim = terms.first().map(|t| t.1.dim()).unwrap_or(1);
        for (c, k) in &terms {
            if k.dim() != dim {
                return Err(KernelError::DimensionMismatch(dim, k.dim()));
            }
            if !c.is_finite() {
                return Err(KernelError::InvalidParameter(format!(
                    "non-finite coefficient {c}"
                )));
            }
        }
        Ok(Self::Linear { terms, dim })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::Linear {
            terms: vec![(c, self.clone())],
            dim: self.dim(),
        }
    }

    /// `self - other`.
    pub fn difference(&self, other: &Kernel) -> Result<Self, KernelError> {
        Self::linear(vec![(1.0, self.clone()), (-1.0, other.clone())])
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::PowerLaw { .. } | Self::Exponential { .. } => 1,
            Self::MatrixExponential { eigvals, .. } => eigvals.len(),
            Self::Perturbed { base, .. } => base.dim(),
            Self::TwoTime { dim, .. } | Self::Linear { dim, .. } => *dim,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::PowerLaw { .. } => "power-law",
            Self::Exponential { .. } => "exponential",
            Self::MatrixExponential { .. } => "matrix-exponential",
            Self::Perturbed { .. } => "perturbed",
            Self::TwoTime { .. } => "two-time",
            Self::Linear { .. } => "linear-combination",
        }
    }

    /// True when `K(t, s)` depends on `t - s` only.
    pub fn is_translation_invariant(&self) -> bool {
        match self {
            Self::TwoTime { .. } => false,
            Self::Perturbed { base, .. } => base.is_translation_invariant(),
            Self::Linear { terms, .. } => terms.iter().all(|t| t.1.is_translation_invariant()),
            _ => true,
        }
    }

    /// True when the kernel may take negative values ("negative memory").
    pub fn may_be_negative(&self) -> bool {
        match self {
            Self::Perturbed {
                base,
                family,
                alpha,
            } => {
                (*family == PerturbationFamily::Oscillation && *alpha > 0.0)
                    || base.may_be_negative()
            }
            Self::TwoTime { .. } => true,
            Self::Linear { terms, .. } => terms
                .iter()
                .any(|(c, k)| *c < 0.0 || k.may_be_negative()),
            _ => false,
        }
    }

    /// Lags `tau = t - s` where the kernel jumps.
    pub fn discontinuities(&self) -> Vec<f64> {
        let mut out = match self {
            Self::Perturbed {
                base,
                family,
                alpha,
            } => {
                let mut d = base.discontinuities();
                if *family == PerturbationFamily::Cutoff {
                    d.push(*alpha);
                }
                d
            }
            Self::Linear { terms, .. } => {
                terms.iter().flat_map(|t| t.1.discontinuities()).collect()
            }
            _ => Vec::new(),
        };
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }

    /// Largest lag with a nonzero value, if the kernel has compact support.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Self::Perturbed {
                base,
                family,
                alpha,
            } => {
                let own = (*family == PerturbationFamily::Cutoff).then_some(*alpha);
                match (own, base.support_end()) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                }
            }
            Self::Linear { terms, .. } => {
                let mut end: Option<f64> = Some(0.0);
                for (_, k) in terms {
                    end = match (end, k.support_end()) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        _ => None,
                    };
                }
                end
            }
            _ => None,
        }
    }

    /// `K(t, s)` for `0 <= s <= t`.
    pub fn evaluate(&self, t: f64, s: f64) -> Result<Matrix, KernelError> {
        if !(s >= 0.0 && t >= s && t.is_finite()) {
            return Err(KernelError::Domain { t, s });
        }
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        self.eval_two_time_into(t, s, &mut out);
        Ok(Matrix::from_row_major(d, out).expect("square output"))
    }

    /// `K(tau)` of a translation-invariant kernel, written row-major into
    /// `out`. Non-invariant kernels are evaluated at `(tau, 0)`.
    pub fn eval_lag_into(&self, tau: f64, out: &mut [f64]) {
        self.eval_two_time_into(tau, 0.0, out)
    }

    /// Scalar value `K(tau)`; the `(0, 0)` entry for matrix kernels.
    pub fn eval_lag_scalar(&self, tau: f64) -> f64 {
        if self.dim() == 1 {
            let mut out = [0.0];
            self.eval_lag_into(tau, &mut out);
            out[0]
        } else {
            let d = self.dim();
            let mut out = vec![0.0; d * d];
            self.eval_lag_into(tau, &mut out);
            out[0]
        }
    }

    /// Operator norm of `K(t, s)`.
    pub fn norm_at(&self, t: f64, s: f64) -> f64 {
        let d = self.dim();
        if d == 1 {
            let mut out = [0.0];
            self.eval_two_time_into(t, s, &mut out);
            return out[0].abs();
        }
        let mut out = vec![0.0; d * d];
        self.eval_two_time_into(t, s, &mut out);
        Matrix::from_row_major(d, out)
            .expect("square output")
            .operator_norm()
    }

    fn eval_two_time_into(&self, t: f64, s: f64, out: &mut [f64]) {
        let tau = t - s;
        match self {
            Self::PowerLaw { c, alpha, beta } => out[0] = c * (tau + alpha).powf(-beta),
            Self::Exponential { c, beta } => out[0] = c * (-beta * tau).exp(),
            Self::MatrixExponential { eigvecs, eigvals } => {
                matrix_exp_into(eigvecs, eigvals, tau, 0.0, out)
            }
            Self::Perturbed {
                base,
                family,
                alpha,
            } => match (family, base.as_ref()) {
                (PerturbationFamily::Translation, Self::PowerLaw { .. }) => {
                    base.eval_two_time_into(tau + alpha, 0.0, out)
                }
                (PerturbationFamily::Dilation, Self::PowerLaw { c, alpha: a0, beta }) => {
                    out[0] = c * (tau + a0).powf(-(beta + alpha))
                }
                (PerturbationFamily::Translation, Self::Exponential { c, beta }) => {
                    out[0] = c * (-(beta + alpha) * tau).exp()
                }
                (PerturbationFamily::Translation, Self::MatrixExponential { eigvecs, eigvals }) => {
                    matrix_exp_into(eigvecs, eigvals, tau, *alpha, out)
                }
                (PerturbationFamily::Dilation, _) => {
                    base.eval_two_time_into(tau + alpha, 0.0, out)
                }
                (PerturbationFamily::Cutoff, _) => {
                    if tau <= *alpha {
                        base.eval_two_time_into(t, s, out)
                    } else {
                        out.iter_mut().for_each(|v| *v = 0.0)
                    }
                }
                (PerturbationFamily::Oscillation, _) => {
                    base.eval_two_time_into(t, s, out);
                    let f = (alpha * tau).cos();
                    out.iter_mut().for_each(|v| *v *= f)
                }
                (PerturbationFamily::Translation, _) => {
                    unreachable!("rejected by Kernel::perturbed")
                }
            },
            Self::TwoTime { evaluator, dim } => {
                let m = evaluator(t, s);
                assert_eq!(m.dim(), *dim, "two-time evaluator returned wrong dimension");
                out.copy_from_slice(m.as_slice());
            }
            Self::Linear { terms, .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut buf = vec![0.0; out.len()];
                for (c, k) in terms {
                    k.eval_two_time_into(t, s, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += c * b;
                    }
                }
            }
        }
    }

    /// Samples a scalar translation-invariant kernel on the grid.
    pub fn sample(&self, grid: &TimeGrid) -> Result<GridFunction, KernelError> {
        if self.dim() != 1 {
            return Err(KernelError::NotScalar(self.dim()));
        }
        if !self.is_translation_invariant() {
            return Err(KernelError::InvalidParameter(
                "sampling on a lag grid needs a translation-invariant kernel".into(),
            ));
        }
        Ok(GridFunction::from_fn(*grid, |t| self.eval_lag_scalar(t))?)
    }

    /// Sum-of-exponentials form `K(tau) = sum_m Re(amp_m e^{-rate_m tau}) P_m`,
    /// when one exists.
    pub fn exp_modes(&self) -> Option<Vec<ExpMode>> {
        match self {
            Self::Exponential { c, beta } => Some(vec![ExpMode {
                rate: Complex64::new(*beta, 0.0),
                amp: Complex64::new(*c, 0.0),
                proj: vec![1.0],
            }]),
            Self::MatrixExponential { eigvecs, eigvals } => {
                let d = eigvals.len();
                Some(
                    eigvals
                        .iter()
                        .enumerate()
                        .map(|(k, lam)| {
                            let mut proj = vec![0.0; d * d];
                            for i in 0..d {
                                for j in 0..d {
                                    proj[i * d + j] = eigvecs[(i, k)] * eigvecs[(j, k)];
                                }
                            }
                            ExpMode {
                                rate: Complex64::new(*lam, 0.0),
                                amp: Complex64::new(1.0, 0.0),
                                proj,
                            }
                        })
                        .collect(),
                )
            }
            Self::Perturbed {
                base,
                family,
                alpha,
            } => {
                let modes = base.exp_modes()?;
                match family {
                    PerturbationFamily::Translation => {
                        if matches!(base.as_ref(), Self::PowerLaw { .. }) {
                            return None;
                        }
                        Some(
                            modes
                                .into_iter()
                                .map(|m| ExpMode {
                                    rate: m.rate + alpha,
                                    ..m
                                })
                                .collect(),
                        )
                    }
                    PerturbationFamily::Dilation => Some(
                        modes
                            .into_iter()
                            .map(|m| ExpMode {
                                amp: m.amp * (-m.rate * alpha).exp(),
                                ..m
                            })
                            .collect(),
                    ),
                    PerturbationFamily::Oscillation => {
                        if *alpha == 0.0 {
                            return Some(modes);
                        }
                        let shift = Complex64::new(0.0, *alpha);
                        Some(
                            modes
                                .into_iter()
                                .flat_map(|m| {
                                    [
                                        ExpMode {
                                            rate: m.rate - shift,
                                            amp: 0.5 * m.amp,
                                            proj: m.proj.clone(),
                                        },
                                        ExpMode {
                                            rate: m.rate + shift,
                                            amp: 0.5 * m.amp,
                                            proj: m.proj,
                                        },
                                    ]
                                })
                                .collect(),
                        )
                    }
                    PerturbationFamily::Cutoff => None,
                }
            }
            Self::Linear { terms, .. } => {
                let mut out = Vec::new();
                for (c, k) in terms {
                    out.extend(k.exp_modes()?.into_iter().map(|m| ExpMode {
                        amp: m.amp * c,
                        ..m
                    }));
                }
                Some(out)
            }
            Self::PowerLaw { .. } | Self::TwoTime { .. } => None,
        }
    }

    /// `int_0^inf e^{-mu s} k(s) ds` for a scalar translation-invariant kernel.
    ///
    /// Exponential and power-law (at `mu = 0`) kernels use closed forms;
    /// everything else uses adaptive quadrature split at discontinuities.
    pub fn laplace_transform(&self, mu: f64) -> Result<f64, KernelError> {
        if self.dim() != 1 {
            return Err(KernelError::NotScalar(self.dim()));
        }
        match self {
            Self::Exponential { c, beta } => {
                if mu <= -beta {
                    Err(KernelError::Divergent {
                        mu,
                        reason: format!("exponential rate {beta} does not dominate"),
                    })
                } else {
                    Ok(c / (beta + mu))
                }
            }
            Self::PowerLaw { c, alpha, beta } if mu == 0.0 => {
                Ok(c * alpha.powf(1.0 - beta) / (beta - 1.0))
            }
            Self::PowerLaw { .. } if mu < 0.0 => Err(KernelError::Divergent {
                mu,
                reason: "power-law tail against a growing exponential".into(),
            }),
            Self::Linear { terms, .. } if terms.is_empty() => Ok(0.0),
            _ => {
                if !self.is_translation_invariant() {
                    return Err(KernelError::InvalidParameter(
                        "Laplace transform needs a translation-invariant kernel".into(),
                    ));
                }
                laplace_by_quadrature(|s| self.eval_lag_scalar(s), mu, &self.discontinuities())
            }
        }
    }
}

fn matrix_exp_into(q: &Matrix, lam: &[f64], tau: f64, shift: f64, out: &mut [f64]) {
    let d = lam.len();
    let e: Vec<f64> = lam.iter().map(|l| (-(l + shift) * tau).exp()).collect();
    for i in 0..d {
        for j in 0..d {
            // e_k * (q_ik * q_jk) is symmetric in (i, j) bit for bit.
            out[i * d + j] = (0..d).map(|k| e[k] * (q[(i, k)] * q[(j, k)])).sum();
        }
    }
}

pub(crate) fn laplace_by_quadrature(
    f: impl Fn(f64) -> f64,
    mu: f64,
    breaks: &[f64],
) -> Result<f64, KernelError> {
    let g = |s: f64| (-mu * s).exp() * f(s);
    let mut total = 0.0;
    let mut lo = 0.0;
    for &b in breaks.iter().filter(|b| **b > 0.0) {
        total += quad::integrate(g, lo, b, 1e-300, 1e-12)?.value;
        lo = b;
    }
    let tail = quad::integrate_to_infinity(g, lo, 1.0, 1e-11).map_err(|e| {
        KernelError::Divergent {
            mu,
            reason: e.to_string(),
        }
    })?;
    Ok(total + tail.value)
}
