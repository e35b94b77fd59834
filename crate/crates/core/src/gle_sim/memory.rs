//! Discrete memory term `I_i = int_0^{t_i} K(t_i, s) V_s ds` by the trapezoid
//! rule, evaluated either from a lag table, from sum-of-exponentials
//! accumulators, or by direct two-time evaluation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::grid::TimeGrid;
use crate::kernel::Kernel;
use crate::linalg::mat_vec_acc;

/// How the memory integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    /// Accumulators when the kernel is a sum of exponentials, else the table.
    #[default]
    Auto,
    /// Direct `O(N^2)` trapezoid sum.
    Direct,
    /// Accumulators; fails for kernels without an exponential form.
    Fast,
}

#[derive(Debug, Clone)]
pub(crate) enum MemoryPlan {
    /// `K(tau_j)` for `j <= lags`, row-major `d x d` blocks; zero beyond.
    Table { d: usize, lags: usize, k: Vec<f64> },
    Modes {
        d: usize,
        rho: Vec<Complex64>,
        amp: Vec<Complex64>,
        proj: Vec<Vec<f64>>,
    },
    TwoTime { d: usize, kernel: Kernel },
}

impl MemoryPlan {
    pub(crate) fn build(kernel: &Kernel, grid: &TimeGrid, mode: MemoryMode) -> Result<Self, SimError> {
        let d = kernel.dim();
        let dt = grid.dt();
        let modes = if kernel.is_translation_invariant() && mode != MemoryMode::Direct {
            kernel.exp_modes()
        } else {
            None
        };
        if let Some(modes) = modes {
            return Ok(Self::Modes {
                d,
                rho: modes.iter().map(|m| (-m.rate * dt).exp()).collect(),
                amp: modes.iter().map(|m| m.amp).collect(),
                proj: modes.into_iter().map(|m| m.proj).collect(),
            });
        }
        if mode == MemoryMode::Fast {
            return Err(SimError::InvalidConfig(format!(
                "no exponential-mode form for a {} kernel",
                kernel.family_name()
            )));
        }
        if !kernel.is_translation_invariant() {
            return Ok(Self::TwoTime {
                d,
                kernel: kernel.clone(),
            });
        }
        let n = grid.n_steps();
        let lags = match kernel.support_end() {
            Some(end) => (((end / dt).floor() as usize) + 1).min(n),
            None => n,
        };
        let mut k = vec![0.0; (lags + 1) * d * d];
        for (j, block) in k.chunks_mut(d * d).enumerate() {
            kernel.eval_lag_into(grid.time(j), block);
        }
        if let Some(j) = k.iter().position(|v| !v.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "kernel is not finite at lag {}",
                grid.time(j / (d * d))
            )));
        }
        Ok(Self::Table { d, lags, k })
    }

    pub(crate) fn dim(&self) -> usize {
        match self {
            Self::Table { d, .. } | Self::Modes { d, .. } | Self::TwoTime { d, .. } => *d,
        }
    }

    pub(crate) fn new_state(&self) -> MemoryState {
        match self {
            Self::Modes { d, rho, .. } => MemoryState {
                acc: vec![Complex64::new(0.0, 0.0); rho.len() * d],
            },
            _ => MemoryState { acc: Vec::new() },
        }
    }

    /// Writes `I_i` into `out`. `v` holds `V_0..V_i` flattened with stride
    /// `d`; for the accumulator plan `state` must already include `V_i`.
    pub(crate) fn memory(
        &self,
        i: usize,
        v: &[f64],
        grid: &TimeGrid,
        state: &MemoryState,
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if i == 0 {
            return;
        }
        let dt = grid.dt();
        match self {
            Self::Table { d, lags, k } => {
                let d = *d;
                let dd = d * d;
                if d == 1 {
                    let mut acc = 0.0;
                    if i <= *lags {
                        acc += 0.5 * k[i] * v[0];
                    }
                    let lo = if i > *lags { i - lags } else { 1 };
                    for j in lo..i {
                        acc += k[i - j] * v[j];
                    }
                    acc += 0.5 * k[0] * v[i];
                    out[0] = dt * acc;
                } else {
                    if i <= *lags {
                        mat_vec_acc(&k[i * dd..(i + 1) * dd], d, &v[..d], 0.5, out);
                    }
                    let lo = if i > *lags { i - lags } else { 1 };
                    for j in lo..i {
                        let lag = i - j;
                        mat_vec_acc(&k[lag * dd..(lag + 1) * dd], d, &v[j * d..(j + 1) * d], 1.0, out);
                    }
                    mat_vec_acc(&k[..dd], d, &v[i * d..(i + 1) * d], 0.5, out);
                    out.iter_mut().for_each(|o| *o *= dt);
                }
            }
            Self::Modes { d, amp, proj, .. } => {
                let d = *d;
                let vi = &v[i * d..(i + 1) * d];
                let mut y = vec![0.0; d];
                for (m, (a, p)) in amp.iter().zip(proj).enumerate() {
                    let s = &state.acc[m * d..(m + 1) * d];
                    for c in 0..d {
                        y[c] = (a * (s[c] - 0.5 * vi[c])).re;
                    }
                    mat_vec_acc(p, d, &y, dt, out);
                }
            }
            Self::TwoTime { d, kernel } => {
                let d = *d;
                let t = grid.time(i);
                let mut block = vec![0.0; d * d];
                for j in 0..=i {
                    let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                    let m = kernel
                        .evaluate(t, grid.time(j))
                        .expect("grid times satisfy 0 <= s <= t");
                    block.copy_from_slice(m.as_slice());
                    mat_vec_acc(&block, d, &v[j * d..(j + 1) * d], w * dt, out);
                }
            }
        }
    }

    /// Folds `V_i` into the accumulators: `S_0 = V_0 / 2`, `S_i = rho S_{i-1} + V_i`.
    pub(crate) fn advance(&self, i: usize, v_i: &[f64], state: &mut MemoryState) {
        if let Self::Modes { d, rho, .. } = self {
            for (m, r) in rho.iter().enumerate() {
                let s = &mut state.acc[m * d..(m + 1) * d];
                for c in 0..*d {
                    s[c] = if i == 0 {
                        Complex64::new(0.5 * v_i[c], 0.0)
                    } else {
                        r * s[c] + v_i[c]
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MemoryState {
    acc: Vec<Complex64>,
}
