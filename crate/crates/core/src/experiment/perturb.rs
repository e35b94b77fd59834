use rayon::prelude::*;

use super::report::{Cell, Report};
use super::{FamilySweep, FirstOrderSpec, SecondOrderSpec};
use crate::analysis::{
    empirical_sup_ratio, ensemble_moments, fit_decay, linearity_report, median,
    noise_floor_window, positive_times, DecayFit, DecayModel, Functional, LinearityReport,
};
use crate::error::{ExperimentError, SimError};
use crate::gle_sim::{
    simulate_ensemble, CoupledEnsemble, LyapunovParams, Order, SimConfig, Trajectory,
};
use crate::grid::TimeGrid;
use crate::kernel::{
    check_condition, schur_norm, ConditionCheck, ConditionInputs, ConditionTag, Kernel,
    PerturbationFamily, PotentialSpec, WeightFunction,
};

/// One `(family, alpha)` cell of a perturbation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbRow {
    pub family: PerturbationFamily,
    pub alpha: f64,
    /// `|||K - K~|||_h^2`.
    pub kernel_error_sq: f64,
    /// The weighted tail integral of the kernel error did not settle.
    pub error_divergent: bool,
    pub negative_memory: bool,
    /// `C_2` or `C_4`.
    pub constant: Option<f64>,
    pub constant_argmax_time: Option<f64>,
    /// Standard error of the mean series where the constant binds.
    pub constant_std_err: Option<f64>,
    pub fit: Option<DecayFit>,
    /// `ok`, `identical` (zero difference), `fit_failed` or `diverged`.
    pub status: &'static str,
    /// Condition on the true kernel.
    pub condition_true: ConditionCheck,
    /// Condition on the perturbed kernel.
    pub condition_pert: ConditionCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySummary {
    pub family: PerturbationFamily,
    pub linearity: Option<LinearityReport>,
    /// Linearity is not expected for sign-changing kernels.
    pub linearity_expected: bool,
    pub median_rate: Option<f64>,
    pub fitted_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbResult {
    pub order: Order,
    pub rows: Vec<PerturbRow>,
    pub families: Vec<FamilySummary>,
    /// `L_G u / gamma^2` for second order; the contraction of the Markovian
    /// part needs it at most 3/4.
    pub contraction_ratio: Option<f64>,
    pub lambda: Option<f64>,
    pub batches: usize,
    pub seed: u64,
}

impl PerturbResult {
    pub fn family(&self, f: PerturbationFamily) -> Option<&FamilySummary> {
        self.families.iter().find(|s| s.family == f)
    }

    /// Median fitted rate over every fitted cell.
    pub fn pooled_median_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| r.fit.map(|f| f.rate))
            .collect();
        median(&rates)
    }
}

struct Setup<'a> {
    order: Order,
    cfg: SimConfig,
    base: Kernel,
    weight: WeightFunction,
    pot: Option<PotentialSpec>,
    params: Option<LyapunovParams>,
    fit_start: f64,
    floor_factor: f64,
    families: &'a [FamilySweep],
}

pub fn run_first_order_perturb(spec: &FirstOrderSpec) -> Result<PerturbResult, ExperimentError> {
    let grid = TimeGrid::with_horizon(spec.dt, spec.t_final)?;
    let cfg = SimConfig::isotropic(1, spec.gamma, spec.sigma, grid, spec.batches, spec.seed)?
        .with_memory(spec.memory);
    run(Setup {
        order: Order::First,
        cfg,
        base: spec.kernel.build()?,
        weight: spec.weight.build()?,
        pot: None,
        params: None,
        fit_start: spec.fit_start,
        floor_factor: spec.floor_factor,
        families: &spec.families,
    })
}

pub fn run_second_order_perturb(spec: &SecondOrderSpec) -> Result<PerturbResult, ExperimentError> {
    let grid = TimeGrid::with_horizon(spec.dt, spec.t_final)?;
    let base = spec.kernel_spec().build()?;
    let d = base.dim();
    let pot = spec.potential.build(d)?;
    let params = LyapunovParams::from_potential(spec.gamma, &pot)?;
    let cfg = SimConfig::isotropic(d, spec.gamma, spec.sigma, grid, spec.batches, spec.seed)?
        .with_memory(spec.memory);
    run(Setup {
        order: Order::Second,
        cfg,
        base,
        weight: spec.weight.build()?,
        pot: Some(pot),
        params: Some(params),
        fit_start: spec.fit_start.unwrap_or(0.5 * spec.t_final),
        floor_factor: spec.floor_factor,
        families: &spec.families,
    })
}

fn run(s: Setup<'_>) -> Result<PerturbResult, ExperimentError> {
    let grid = *s.cfg.grid();
    let h_hat = s.weight.h_hat().ok();
    let base_norm = schur_norm(&s.base, &s.weight, &grid)?.value;
    let condition = |norm: f64| {
        let tag = match s.order {
            Order::First => ConditionTag::FirstOrderError,
            Order::Second => ConditionTag::SecondOrderError,
        };
        check_condition(
            tag,
            &ConditionInputs {
                gamma: s.cfg.gamma(),
                mu: s.weight.mu(),
                lambda: s.params.as_ref().map(|p| p.lambda),
                kernel_norm: norm,
                h_hat,
            },
        )
    };
    let condition_true = check_condition(
        match s.order {
            Order::First => ConditionTag::FirstOrderMoment,
            Order::Second => ConditionTag::SecondOrderMoment,
        },
        &ConditionInputs {
            gamma: s.cfg.gamma(),
            mu: s.weight.mu(),
            lambda: s.params.as_ref().map(|p| p.lambda),
            kernel_norm: base_norm,
            h_hat,
        },
    );
    let truth = simulate_ensemble(&s.cfg, &s.base, s.pot.as_ref())?;
    let cells: Vec<(PerturbationFamily, f64)> = s
        .families
        .iter()
        .flat_map(|f| f.alphas.iter().map(move |a| (f.family, *a)))
        .collect();
    let rows = cells
        .into_par_iter()
        .map(|(family, alpha)| -> Result<PerturbRow, ExperimentError> {
            let pert = Kernel::perturbed(s.base.clone(), family, alpha)?;
            let err = schur_norm(&s.base.difference(&pert)?, &s.weight, &grid)?;
            let pert_norm = schur_norm(&pert, &s.weight, &grid)?;
            let mut row = PerturbRow {
                family,
                alpha,
                kernel_error_sq: err.value * err.value,
                error_divergent: err.divergent,
                negative_memory: pert.may_be_negative(),
                constant: None,
                constant_argmax_time: None,
                constant_std_err: None,
                fit: None,
                status: "ok",
                condition_true,
                condition_pert: condition(pert_norm.value),
            };
            let paths = match simulate_ensemble(&s.cfg, &pert, s.pot.as_ref()) {
                Ok(p) => p,
                Err(SimError::Divergence { .. }) => {
                    row.status = "diverged";
                    return Ok(row);
                }
                Err(e) => return Err(e.into()),
            };
            measure(&s, &truth, paths, &mut row)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let families = s
        .families
        .iter()
        .map(|f| {
            let fam_rows: Vec<&PerturbRow> = rows.iter().filter(|r| r.family == f.family).collect();
            let pts: Vec<(f64, f64)> = fam_rows
                .iter()
                .filter_map(|r| r.constant.map(|c| (r.kernel_error_sq, c)))
                .collect();
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let rates: Vec<f64> = fam_rows.iter().filter_map(|r| r.fit.map(|f| f.rate)).collect();
            FamilySummary {
                family: f.family,
                linearity: linearity_report(&xs, &ys).ok(),
                linearity_expected: f.family != PerturbationFamily::Oscillation,
                median_rate: median(&rates),
                fitted_cells: rates.len(),
            }
        })
        .collect();
    Ok(PerturbResult {
        order: s.order,
        rows,
        families,
        contraction_ratio: s.pot.as_ref().map(|p| {
            let g = s.cfg.gamma();
            p.lg() * p.u() / (g * g)
        }),
        lambda: s.params.as_ref().map(|p| p.lambda),
        batches: s.cfg.batches(),
        seed: s.cfg.seed(),
    })
}

fn measure(
    s: &Setup<'_>,
    truth: &[Trajectory],
    paths: Vec<Trajectory>,
    row: &mut PerturbRow,
) -> Result<(), ExperimentError> {
    let grid = *s.cfg.grid();
    let ens = CoupledEnsemble::new(truth.to_vec(), paths, s.cfg.seed())?;
    let (functional, model) = match s.order {
        Order::First => (Functional::DiffSq, DecayModel::PowerLaw),
        Order::Second => (Functional::LyapunovSq, DecayModel::Exponential),
    };
    let m = ensemble_moments(&ens, functional, s.params.as_ref())?;
    let c = empirical_sup_ratio(&m.mean, &s.weight, s.cfg.noise_trace(), positive_times(&grid))?;
    row.constant = Some(c.value);
    row.constant_argmax_time = Some(c.argmax_time);
    let i = ((c.argmax_time / grid.dt()).round() as usize).min(grid.n_steps());
    row.constant_std_err = Some(m.std_err.get(i));
    if m.mean.values().iter().all(|v| *v == 0.0) {
        row.status = "identical";
        return Ok(());
    }
    row.fit = noise_floor_window(&m.mean, s.fit_start, s.floor_factor)
        .ok()
        .and_then(|w| fit_decay(&m.mean, model, (w.start, w.end)).ok());
    if row.fit.is_none() {
        row.status = "fit_failed";
    }
    Ok(())
}

impl PerturbResult {
    pub fn report(&self) -> Report {
        let constant = match self.order {
            Order::First => "c2",
            Order::Second => "c4",
        };
        let mut r = Report::new(&[
            "family",
            "alpha",
            "kernel_error_sq",
            "kernel_error_divergent",
            "negative_memory",
            "status",
            constant,
            "constant_argmax_time",
            "constant_std_err",
            "fitted_rate",
            "fit_start",
            "fit_end",
            "r_squared",
            "condition_true_lhs",
            "condition_true_rhs",
            "condition_true_status",
            "condition_pert_lhs",
            "condition_pert_rhs",
            "condition_pert_status",
        ]);
        for row in &self.rows {
            let st = row.status;
            r.push(vec![
                row.family.name().into(),
                row.alpha.into(),
                row.kernel_error_sq.into(),
                row.error_divergent.into(),
                row.negative_memory.into(),
                st.into(),
                Cell::opt(row.constant, st),
                Cell::opt(row.constant_argmax_time, st),
                Cell::opt(row.constant_std_err, st),
                Cell::opt(row.fit.map(|f| f.rate), st),
                Cell::opt(row.fit.map(|f| f.window.0), st),
                Cell::opt(row.fit.map(|f| f.window.1), st),
                Cell::opt(row.fit.map(|f| f.r_squared), st),
                row.condition_true.lhs.into(),
                row.condition_true.rhs.into(),
                row.condition_true.status.as_str().into(),
                row.condition_pert.lhs.into(),
                row.condition_pert.rhs.into(),
                row.condition_pert.status.as_str().into(),
            ]);
        }
        r
    }

    pub fn summary(&self) -> Report {
        let mut r = Report::new(&[
            "family",
            "points",
            "slope",
            "intercept",
            "pearson_r",
            "linearity_expected",
            "median_rate",
            "fitted_cells",
        ]);
        for f in &self.families {
            let l = f.linearity;
            r.push(vec![
                f.family.name().into(),
                l.map_or(Cell::text("degenerate"), |l| l.points.into()),
                Cell::opt(l.map(|l| l.slope), "degenerate"),
                Cell::opt(l.map(|l| l.intercept), "degenerate"),
                Cell::opt(l.map(|l| l.pearson_r), "degenerate"),
                f.linearity_expected.into(),
                Cell::opt(f.median_rate, "none"),
                f.fitted_cells.into(),
            ]);
        }
        r.push(vec![
            "all".into(),
            self.rows.len().into(),
            "".into(),
            "".into(),
            "".into(),
            "".into(),
            Cell::opt(self.pooled_median_rate(), "none"),
            self.rows.iter().filter(|r| r.fit.is_some()).count().into(),
        ]);
        r
    }
}
