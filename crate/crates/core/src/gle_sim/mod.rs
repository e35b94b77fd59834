//! Euler-Maruyama simulation of first- and second-order generalized Langevin
//! equations, coupled ensembles driven by shared noise, and the Lyapunov
//! distance of the second-order system.

mod lyapunov;
mod memory;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, SimError};
use crate::grid::TimeGrid;
use crate::kernel::{Kernel, PotentialSpec};
use crate::linalg::{mat_vec_acc, Matrix};
use crate::rng::{NoiseSource, Stream};

pub use lyapunov::{
    gamma_form, lyapunov_distance_sq, lyapunov_distance_sq_expanded, lyapunov_params,
    LyapunovParams,
};
pub use memory::MemoryMode;
use memory::MemoryPlan;

/// Distribution of an initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Point(Vec<f64>),
    /// Gaussian with the given mean and covariance (sampled through its
    /// Cholesky factor).
    Gaussian { mean: Vec<f64>, cov: Matrix },
}

impl InitSpec {
    pub fn standard_normal(d: usize) -> Self {
        Self::Gaussian {
            mean: vec![0.0; d],
            cov: Matrix::identity(d),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Point(v) => v.len(),
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn sampler(&self) -> Result<InitSampler, SimError> {
        match self {
            Self::Point(v) => Ok(InitSampler {
                mean: v.clone(),
                chol: None,
            }),
            Self::Gaussian { mean, cov } => {
                if cov.dim() != mean.len() {
                    return Err(SimError::InvalidConfig(
                        "initial covariance and mean differ in dimension".into(),
                    ));
                }
                let chol = cov.cholesky().ok_or_else(|| {
                    SimError::InvalidConfig("initial covariance is not positive definite".into())
                })?;
                Ok(InitSampler {
                    mean: mean.clone(),
                    chol: Some(chol),
                })
            }
        }
    }
}

struct InitSampler {
    mean: Vec<f64>,
    chol: Option<Matrix>,
}

impl InitSampler {
    fn draw(&self, src: &NoiseSource, batch: u64, stream: Stream, out: &mut [f64]) {
        out.copy_from_slice(&self.mean);
        if let Some(l) = &self.chol {
            let mut xi = vec![0.0; out.len()];
            src.fill_normal(batch, stream, 0, &mut xi);
            mat_vec_acc(l.as_slice(), out.len(), &xi, 1.0, out);
        }
    }
}

/// Shared settings of a simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    dim: usize,
    gamma: f64,
    sigma: Matrix,
    grid: TimeGrid,
    batches: usize,
    seed: u64,
    init_v: InitSpec,
    init_x: InitSpec,
    memory: MemoryMode,
}

impl SimConfig {
    /// Defaults: `V_0, X_0 ~ N(0, Id)` and automatic memory evaluation.
    pub fn new(
        dim: usize,
        gamma: f64,
        sigma: Matrix,
        grid: TimeGrid,
        batches: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        if dim == 0 {
            return Err(SimError::InvalidConfig("dimension must be positive".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "friction gamma must be positive, got {gamma}"
            )));
        }
        if sigma.dim() != dim {
            return Err(SimError::InvalidConfig(format!(
                "sigma is {0}x{0}, expected {dim}x{dim}",
                sigma.dim()
            )));
        }
        if !sigma.is_finite() {
            return Err(SimError::InvalidConfig("sigma has non-finite entries".into()));
        }
        if batches == 0 {
            return Err(SimError::InvalidConfig("need at least one batch".into()));
        }
        Ok(Self {
            dim,
            gamma,
            sigma,
            grid,
            batches,
            seed,
            init_v: InitSpec::standard_normal(dim),
            init_x: InitSpec::standard_normal(dim),
            memory: MemoryMode::Auto,
        })
    }

    /// Isotropic noise `sigma Id`.
    pub fn isotropic(
        dim: usize,
        gamma: f64,
        sigma: f64,
        grid: TimeGrid,
        batches: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        Self::new(dim, gamma, Matrix::identity(dim).scale(sigma), grid, batches, seed)
    }

    pub fn with_init_v(mut self, init: InitSpec) -> Result<Self, SimError> {
        if init.dim() != self.dim {
            return Err(SimError::InvalidConfig("initial velocity has wrong dimension".into()));
        }
        self.init_v = init;
        Ok(self)
    }

    pub fn with_init_x(mut self, init: InitSpec) -> Result<Self, SimError> {
        if init.dim() != self.dim {
            return Err(SimError::InvalidConfig("initial position has wrong dimension".into()));
        }
        self.init_x = init;
        Ok(self)
    }

    pub fn with_memory(mut self, mode: MemoryMode) -> Self {
        self.memory = mode;
        self
    }

    pub fn with_batches(mut self, batches: usize) -> Result<Self, SimError> {
        if batches == 0 {
            return Err(SimError::InvalidConfig("need at least one batch".into()));
        }
        self.batches = batches;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn memory(&self) -> MemoryMode {
        self.memory
    }

    /// `Tr(sigma sigma^T)`.
    pub fn noise_trace(&self) -> f64 {
        self.sigma.as_slice().iter().map(|s| s * s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    First,
    Second,
}

/// One simulated path. Velocities (and positions for second order) are
/// stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    velocities: Vec<f64>,
    positions: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> Order {
        if self.positions.is_some() {
            Order::Second
        } else {
            Order::First
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, i: usize) -> Option<&[f64]> {
        self.positions
            .as_ref()
            .map(|p| &p[i * self.dim..(i + 1) * self.dim])
    }

    /// `V_i` for first order, `(X_i, V_i)` for second order.
    pub fn state(&self, i: usize) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.dim);
        if let Some(x) = self.position(i) {
            s.extend_from_slice(x);
        }
        s.extend_from_slice(self.velocity(i));
        s
    }

    pub fn state_width(&self) -> usize {
        match self.order() {
            Order::First => self.dim,
            Order::Second => 2 * self.dim,
        }
    }

    /// Writes `t, component_0, ..` rows with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExperimentError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ExperimentError::io(parent, e))?;
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| ExperimentError::io(path, e.into()))?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.state_width()).map(|c| format!("component_{c}")));
        w.write_record(&header)
            .map_err(|e| ExperimentError::io(path, e.into()))?;
        for i in 0..self.len() {
            let mut row = vec![crate::format_float(self.grid.time(i))];
            row.extend(self.state(i).iter().map(|v| crate::format_float(*v)));
            w.write_record(&row)
                .map_err(|e| ExperimentError::io(path, e.into()))?;
        }
        w.flush().map_err(|e| ExperimentError::io(path, e))
    }
}

/// Pairs of true and perturbed paths driven by identical noise.
#[derive(Debug, Clone)]
pub struct CoupledEnsemble {
    pub true_paths: Vec<Trajectory>,
    pub pert_paths: Vec<Trajectory>,
    /// `(batch, seed)` from which each batch's noise is regenerated.
    pub noise_ledger: Vec<(usize, u64)>,
}

impl CoupledEnsemble {
    /// Checks matching batch counts and grids.
    pub fn new(
        true_paths: Vec<Trajectory>,
        pert_paths: Vec<Trajectory>,
        seed: u64,
    ) -> Result<Self, SimError> {
        if true_paths.len() != pert_paths.len() {
            return Err(SimError::InvalidConfig(format!(
                "batch counts differ: {} vs {}",
                true_paths.len(),
                pert_paths.len()
            )));
        }
        for (a, b) in true_paths.iter().zip(&pert_paths) {
            a.grid.ensure_same(&b.grid)?;
            if a.dim != b.dim || a.order() != b.order() {
                return Err(SimError::InvalidConfig("paths differ in shape".into()));
            }
        }
        let noise_ledger = (0..true_paths.len()).map(|b| (b, seed)).collect();
        Ok(Self {
            true_paths,
            pert_paths,
            noise_ledger,
        })
    }

    pub fn batches(&self) -> usize {
        self.true_paths.len()
    }
}

/// One batch of the first-order equation
/// `dV = -gamma V dt - int_0^t K(t,s) V_s ds dt + sigma dB`.
pub fn simulate_first_order(
    cfg: &SimConfig,
    kernel: &Kernel,
    batch: usize,
) -> Result<Trajectory, SimError> {
    let plan = plan_for(cfg, kernel, None)?;
    run_batch(cfg, &plan, None, batch)
}

/// One batch of the second-order equation with force `-u grad U(X)`.
pub fn simulate_second_order(
    cfg: &SimConfig,
    kernel: &Kernel,
    pot: &PotentialSpec,
    batch: usize,
) -> Result<Trajectory, SimError> {
    let plan = plan_for(cfg, kernel, Some(pot))?;
    run_batch(cfg, &plan, Some(pot), batch)
}

/// All batches, in parallel; the result does not depend on the thread count.
pub fn simulate_ensemble(
    cfg: &SimConfig,
    kernel: &Kernel,
    pot: Option<&PotentialSpec>,
) -> Result<Vec<Trajectory>, SimError> {
    let plan = plan_for(cfg, kernel, pot)?;
    (0..cfg.batches)
        .into_par_iter()
        .map(|b| run_batch(cfg, &plan, pot, b))
        .collect()
}

/// True and perturbed ensembles under synchronized coupling: each batch
/// shares its initial state and Brownian increments between the two systems.
pub fn simulate_coupled(
    cfg: &SimConfig,
    kernel_true: &Kernel,
    kernel_pert: &Kernel,
    order: Order,
    pot: Option<&PotentialSpec>,
) -> Result<CoupledEnsemble, SimError> {
    let pot = match order {
        Order::First => None,
        Order::Second => Some(pot.ok_or_else(|| {
            SimError::InvalidConfig("second-order simulation needs a potential".into())
        })?),
    };
    let t = simulate_ensemble(cfg, kernel_true, pot)?;
    let p = simulate_ensemble(cfg, kernel_pert, pot)?;
    CoupledEnsemble::new(t, p, cfg.seed)
}

fn plan_for(
    cfg: &SimConfig,
    kernel: &Kernel,
    pot: Option<&PotentialSpec>,
) -> Result<MemoryPlan, SimError> {
    if kernel.dim() != cfg.dim {
        return Err(SimError::InvalidConfig(format!(
            "kernel dimension {} does not match {}",
            kernel.dim(),
            cfg.dim
        )));
    }
    if let Some(p) = pot {
        if p.dim() != cfg.dim {
            return Err(SimError::InvalidConfig(format!(
                "potential dimension {} does not match {}",
                p.dim(),
                cfg.dim
            )));
        }
    }
    let plan = MemoryPlan::build(kernel, &cfg.grid, cfg.memory)?;
    debug_assert_eq!(plan.dim(), cfg.dim);
    Ok(plan)
}

fn run_batch(
    cfg: &SimConfig,
    plan: &MemoryPlan,
    pot: Option<&PotentialSpec>,
    batch: usize,
) -> Result<Trajectory, SimError> {
    let d = cfg.dim;
    let grid = cfg.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let src = NoiseSource::new(cfg.seed);
    let b = batch as u64;

    let mut v = vec![0.0; (n + 1) * d];
    cfg.init_v
        .sampler()?
        .draw(&src, b, Stream::InitialVelocity, &mut v[..d]);
    let mut x = match pot {
        Some(_) => {
            let mut x = vec![0.0; (n + 1) * d];
            cfg.init_x
                .sampler()?
                .draw(&src, b, Stream::InitialPosition, &mut x[..d]);
            Some(x)
        }
        None => None,
    };

    let mut state = plan.new_state();
    let mut mem = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut force = vec![0.0; d];
    let noisy = cfg.sigma.as_slice().iter().any(|s| *s != 0.0);
    for i in 0..n {
        plan.advance(i, &v[i * d..(i + 1) * d], &mut state);
        plan.memory(i, &v, &grid, &state, &mut mem);
        let (head, tail) = v.split_at_mut((i + 1) * d);
        let vi = &head[i * d..];
        let next = &mut tail[..d];
        for c in 0..d {
            next[c] = vi[c] + dt * (-cfg.gamma * vi[c] - mem[c]);
        }
        if let (Some(x), Some(p)) = (x.as_mut(), pot) {
            let (xh, xt) = x.split_at_mut((i + 1) * d);
            let xi_pos = &xh[i * d..];
            p.grad_u_into(xi_pos, &mut force);
            for c in 0..d {
                next[c] -= dt * p.u() * force[c];
                xt[c] = xi_pos[c] + dt * vi[c];
            }
        }
        if noisy {
            src.fill_normal(b, Stream::Increment, i as u64, &mut xi);
            mat_vec_acc(cfg.sigma.as_slice(), d, &xi, sqrt_dt, next);
        }
        if next.iter().any(|s| !s.is_finite()) {
            return Err(SimError::Divergence {
                batch,
                step: i + 1,
                time: grid.time(i + 1),
            });
        }
    }
    Ok(Trajectory {
        grid,
        dim: d,
        velocities: v,
        positions: x,
    })
}
