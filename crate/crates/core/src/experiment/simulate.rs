use super::report::{Cell, Report};
use super::SimulateSpec;
use crate::error::{ExperimentError, SimError};
use crate::gle_sim::{
    simulate_ensemble, InitSpec, Order, SimConfig, Trajectory,
};
use crate::grid::TimeGrid;
use crate::kernel::Kernel;

#[derive(Debug, Clone)]
pub struct SimulateResult {
    pub order: Order,
    /// `("true", paths)` and, with a perturbation, `("perturbed", paths)`.
    pub systems: Vec<(&'static str, Vec<Trajectory>)>,
    /// Divergence message per system, if the ensemble failed.
    pub diverged: Vec<Option<String>>,
}

pub fn run_simulate(spec: &SimulateSpec) -> Result<SimulateResult, ExperimentError> {
    let grid = TimeGrid::with_horizon(spec.dt, spec.t_final)?;
    let kernel = spec.kernel.build()?;
    let d = kernel.dim();
    let mut cfg = SimConfig::isotropic(d, spec.gamma, spec.sigma, grid, spec.batches, spec.seed)?
        .with_memory(spec.memory);
    if let Some(v) = &spec.init_v {
        cfg = cfg.with_init_v(InitSpec::Point(v.clone()))?;
    }
    if let Some(x) = &spec.init_x {
        cfg = cfg.with_init_x(InitSpec::Point(x.clone()))?;
    }
    let pot = match spec.order {
        Order::First => None,
        Order::Second => Some(
            spec.potential
                .as_ref()
                .ok_or_else(|| ExperimentError::config("second-order simulation needs a potential"))?
                .build(d)?,
        ),
    };
    let mut kernels = vec![("true", kernel.clone())];
    if let Some(p) = spec.perturbation {
        kernels.push(("perturbed", Kernel::perturbed(kernel, p.family, p.alpha)?));
    }
    let mut systems = Vec::new();
    let mut diverged = Vec::new();
    for (name, k) in kernels {
        match simulate_ensemble(&cfg, &k, pot.as_ref()) {
            Ok(paths) => {
                systems.push((name, paths));
                diverged.push(None);
            }
            Err(e @ SimError::Divergence { .. }) => {
                systems.push((name, Vec::new()));
                diverged.push(Some(e.to_string()));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(SimulateResult {
        order: spec.order,
        systems,
        diverged,
    })
}

impl SimulateResult {
    /// One row per system and batch with the final state norm.
    pub fn report(&self) -> Report {
        let mut r = Report::new(&["system", "batch", "status", "final_time", "final_norm_sq"]);
        for ((name, paths), div) in self.systems.iter().zip(&self.diverged) {
            if div.is_some() {
                r.push(vec![
                    (*name).into(),
                    Cell::text("all"),
                    "diverged".into(),
                    Cell::text("diverged"),
                    Cell::text("diverged"),
                ]);
                continue;
            }
            for (b, p) in paths.iter().enumerate() {
                let last = p.len() - 1;
                let norm: f64 = p.state(last).iter().map(|v| v * v).sum();
                r.push(vec![
                    (*name).into(),
                    b.into(),
                    "ok".into(),
                    p.grid().time(last).into(),
                    norm.into(),
                ]);
            }
        }
        r
    }

    pub fn summary(&self) -> Report {
        let mut r = Report::new(&["system", "batches", "diverged"]);
        for ((name, paths), div) in self.systems.iter().zip(&self.diverged) {
            r.push(vec![(*name).into(), paths.len().into(), div.is_some().into()]);
        }
        r
    }
}
