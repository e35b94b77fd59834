//! Experiment specifications, presets, TOML configuration, the five runners
//! and their CSV reports.

mod grids;
mod output;
mod perturb;
mod report;
mod simulate;

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;
use crate::gle_sim::{MemoryMode, Order};
use crate::kernel::{ConvexPart, Kernel, PerturbationFamily, PotentialSpec, WeightFunction};
use crate::linalg::Matrix;
use crate::rng::{NoiseSource, Stream};

pub use grids::{
    run_exp_grid, run_powerlaw_grid, ExpGridCell, ExpGridResult, PowerLawCell, PowerLawGridResult,
};
pub use output::{git_describe_fallback, write_outputs, RunMeta};
pub use perturb::{
    run_first_order_perturb, run_second_order_perturb, FamilySummary, PerturbResult, PerturbRow,
};
pub use report::{Cell, Report};
pub use simulate::{run_simulate, SimulateResult};

/// Preset size: `Desk` shrinks the grids so a run finishes in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PowerlawGrid,
    ExpGrid,
    Gle1Perturb,
    Gle2Perturb,
    Simulate,
}

impl ExperimentKind {
    pub const ALL: [Self; 5] = [
        Self::PowerlawGrid,
        Self::ExpGrid,
        Self::Gle1Perturb,
        Self::Gle2Perturb,
        Self::Simulate,
    ];

    /// Subcommand and output directory name.
    pub fn name(&self) -> &'static str {
        match self {
            Self::PowerlawGrid => "powerlaw-grid",
            Self::ExpGrid => "exp-grid",
            Self::Gle1Perturb => "gle1-perturb",
            Self::Gle2Perturb => "gle2-perturb",
            Self::Simulate => "simulate",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Kernel description used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Zero {
        dim: usize,
    },
    /// `c (t + alpha)^{-beta}`.
    PowerLaw { c: f64, alpha: f64, beta: f64 },
    /// `c e^{-beta t}`.
    Exponential { c: f64, beta: f64 },
    /// `Q e^{-diag(eigenvalues) t} Q^T`, with `Q` given row by row or drawn
    /// at random from `q_seed`.
    MatrixExponential {
        eigenvalues: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eigenvectors: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q_seed: Option<u64>,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel, ExperimentError> {
        Ok(match self {
            Self::Zero { dim } => {
                if *dim == 0 {
                    return Err(ExperimentError::config("zero kernel needs dim >= 1"));
                }
                Kernel::zero(*dim)
            }
            Self::PowerLaw { c, alpha, beta } => Kernel::power_law(*c, *alpha, *beta)?,
            Self::Exponential { c, beta } => Kernel::exponential(*c, *beta)?,
            Self::MatrixExponential {
                eigenvalues,
                eigenvectors,
                q_seed,
            } => {
                let d = eigenvalues.len();
                let q = match (eigenvectors, q_seed) {
                    (Some(rows), None) => Matrix::from_rows(rows).ok_or_else(|| {
                        ExperimentError::config("eigenvectors must form a square matrix")
                    })?,
                    (None, Some(seed)) => random_orthogonal(d, *seed)?,
                    (None, None) => Matrix::identity(d),
                    (Some(_), Some(_)) => {
                        return Err(ExperimentError::config(
                            "give either eigenvectors or q_seed, not both",
                        ))
                    }
                };
                Kernel::matrix_exponential(q, eigenvalues.clone())?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub family: PerturbationFamily,
    pub alpha: f64,
}

/// Comparison function description used by configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `(alpha + t)^{-beta}` with index 0.
    PowerLaw { alpha: f64, beta: f64 },
    /// `e^{-rate t}` with index `mu`.
    Exponential { rate: f64, mu: f64 },
}

impl WeightSpec {
    pub fn build(&self) -> Result<WeightFunction, ExperimentError> {
        Ok(match *self {
            Self::PowerLaw { alpha, beta } => WeightFunction::power_law(alpha, beta)?,
            Self::Exponential { rate, mu } => WeightFunction::exponential(rate, mu)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexChoice {
    Zero,
    LogCosh,
}

/// `U(x) = x.Rx/2 + G(x)` with `R = kappa0 Id` unless `r` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kappa0: f64,
    pub u: f64,
    pub lg: f64,
    pub convex: ConvexChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
}

impl PotentialConfig {
    pub fn build(&self, dim: usize) -> Result<PotentialSpec, ExperimentError> {
        let convex = match self.convex {
            ConvexChoice::Zero => ConvexPart::Zero,
            ConvexChoice::LogCosh => ConvexPart::LogCosh,
        };
        Ok(match &self.r {
            None => PotentialSpec::isotropic(dim, self.kappa0, convex, self.lg, self.u)?,
            Some(rows) => {
                let r = Matrix::from_rows(rows)
                    .ok_or_else(|| ExperimentError::config("R must be a square matrix"))?;
                PotentialSpec::with_kappa0(r, self.kappa0, convex, self.lg, self.u)?
            }
        })
    }
}

/// Perturbation sizes swept for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySweep {
    pub family: PerturbationFamily,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawGridSpec {
    pub a_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub alpha: f64,
    pub c: f64,
    pub dt: f64,
    pub t_final: f64,
    pub fit_window: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpGridSpec {
    pub a_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub c: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Defaults to `[t_final / 2, t_final]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstOrderSpec {
    pub gamma: f64,
    /// Isotropic noise amplitude.
    pub sigma: f64,
    pub kernel: KernelSpec,
    pub weight: WeightSpec,
    pub dt: f64,
    pub t_final: f64,
    pub batches: usize,
    pub seed: u64,
    pub families: Vec<FamilySweep>,
    /// Earliest start of the decay-fit window.
    pub fit_start: f64,
    /// The fit window ends where the series drops below this multiple of
    /// its late-time floor.
    pub floor_factor: f64,
    #[serde(default)]
    pub memory: MemoryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondOrderSpec {
    pub gamma: f64,
    pub sigma: f64,
    /// Decay rates of the matrix-exponential kernel; the dimension is their
    /// count.
    pub eigenvalues: Vec<f64>,
    /// Seed of the random orthogonal eigenvector matrix.
    pub q_seed: u64,
    pub potential: PotentialConfig,
    pub weight: WeightSpec,
    pub dt: f64,
    pub t_final: f64,
    pub batches: usize,
    pub seed: u64,
    pub families: Vec<FamilySweep>,
    /// Defaults to `t_final / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_start: Option<f64>,
    pub floor_factor: f64,
    #[serde(default)]
    pub memory: MemoryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub order: Order,
    pub gamma: f64,
    pub sigma: f64,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialConfig>,
    pub dt: f64,
    pub t_final: f64,
    pub batches: usize,
    pub seed: u64,
    /// Point initial velocity; standard normal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_x: Option<Vec<f64>>,
    #[serde(default)]
    pub memory: MemoryMode,
}

/// Command-line values that replace file and preset values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub batches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentSpec {
    PowerlawGrid(PowerLawGridSpec),
    ExpGrid(ExpGridSpec),
    Gle1Perturb(FirstOrderSpec),
    Gle2Perturb(SecondOrderSpec),
    Simulate(SimulateSpec),
}

fn first_order_families(scale: Scale) -> Vec<FamilySweep> {
    let n = match scale {
        Scale::Desk => 6,
        Scale::Full => 10,
    };
    [
        (PerturbationFamily::Translation, 1.0, 3.0),
        (PerturbationFamily::Dilation, 0.0, 1.0),
        (PerturbationFamily::Cutoff, 0.1, 3.0),
        (PerturbationFamily::Oscillation, 0.1, 4.0),
    ]
    .into_iter()
    .map(|(family, lo, hi)| FamilySweep {
        family,
        alphas: linspace(lo, hi, n),
    })
    .collect()
}

fn second_order_families(scale: Scale) -> Vec<FamilySweep> {
    let n = match scale {
        Scale::Desk => 5,
        Scale::Full => 10,
    };
    [
        (PerturbationFamily::Translation, 0.0, 0.5),
        (PerturbationFamily::Dilation, 0.0, 1.0),
        (PerturbationFamily::Cutoff, 1.0, 20.0),
        (PerturbationFamily::Oscillation, 0.0, 1.0),
    ]
    .into_iter()
    .map(|(family, lo, hi)| FamilySweep {
        family,
        alphas: linspace(lo, hi, n),
    })
    .collect()
}

impl ExperimentSpec {
    /// Parameters of the numerical examples; `Desk` uses the reduced grids.
    pub fn preset(kind: ExperimentKind, scale: Scale) -> Self {
        let desk = scale == Scale::Desk;
        match kind {
            ExperimentKind::PowerlawGrid => Self::PowerlawGrid(PowerLawGridSpec {
                a_values: if desk {
                    vec![5.0, 16.0, 27.0, 38.0, 50.0]
                } else {
                    linspace(5.0, 50.0, 10)
                },
                beta_values: if desk {
                    vec![1.5, 2.0, 3.0, 5.0, 8.0]
                } else {
                    linspace(1.05, 20.0, 20)
                },
                alpha: 0.1,
                c: 1.0,
                dt: 0.01,
                t_final: 100.0,
                fit_window: [5.0, 100.0],
            }),
            ExperimentKind::ExpGrid => Self::ExpGrid(ExpGridSpec {
                a_values: linspace(1.0, 10.0, if desk { 5 } else { 10 }),
                beta_values: linspace(1.0, 6.0, if desk { 5 } else { 11 }),
                c: 1.0,
                dt: 0.005,
                t_final: 100.0,
                fit_window: None,
            }),
            ExperimentKind::Gle1Perturb => Self::Gle1Perturb(FirstOrderSpec {
                gamma: 3.0,
                sigma: 1e-3,
                kernel: KernelSpec::PowerLaw {
                    c: 1.0,
                    alpha: 1.0,
                    beta: 4.0,
                },
                weight: WeightSpec::PowerLaw {
                    alpha: 1.0,
                    beta: 6.0,
                },
                dt: 0.01,
                t_final: 50.0,
                batches: if desk { 8 } else { 20 },
                seed: 20_240_501,
                families: first_order_families(scale),
                fit_start: 1.0,
                floor_factor: 10.0,
                memory: MemoryMode::Auto,
            }),
            ExperimentKind::Gle2Perturb => Self::Gle2Perturb(SecondOrderSpec {
                gamma: 10.0,
                sigma: 1e-4,
                eigenvalues: vec![0.5, 1.0, 1.7],
                q_seed: 7,
                potential: PotentialConfig {
                    kappa0: 10.0,
                    u: 10.0,
                    lg: 0.01,
                    convex: ConvexChoice::LogCosh,
                    r: None,
                },
                weight: WeightSpec::Exponential {
                    rate: 0.9,
                    mu: -0.8,
                },
                dt: 0.005,
                t_final: 30.0,
                batches: if desk { 8 } else { 20 },
                seed: 20_240_502,
                families: second_order_families(scale),
                fit_start: None,
                floor_factor: 10.0,
                memory: MemoryMode::Auto,
            }),
            ExperimentKind::Simulate => Self::Simulate(SimulateSpec {
                order: Order::First,
                gamma: 3.0,
                sigma: 1e-3,
                kernel: KernelSpec::PowerLaw {
                    c: 1.0,
                    alpha: 1.0,
                    beta: 4.0,
                },
                perturbation: None,
                potential: None,
                dt: 0.01,
                t_final: 10.0,
                batches: 2,
                seed: 1,
                init_v: None,
                init_x: None,
                memory: MemoryMode::Auto,
            }),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::PowerlawGrid(_) => ExperimentKind::PowerlawGrid,
            Self::ExpGrid(_) => ExperimentKind::ExpGrid,
            Self::Gle1Perturb(_) => ExperimentKind::Gle1Perturb,
            Self::Gle2Perturb(_) => ExperimentKind::Gle2Perturb,
            Self::Simulate(_) => ExperimentKind::Simulate,
        }
    }

    /// Preset for `kind` overlaid with a TOML document. Top-level `kind` and
    /// `scale` keys are optional; `kind` must agree with the requested one
    /// and `scale_override` wins over the file's `scale`. Nested tables merge
    /// key by key, except kernel and weight tables (they carry a `type` or
    /// `form` tag), which replace the preset's table whole.
    pub fn from_toml(
        kind: ExperimentKind,
        scale_override: Option<Scale>,
        text: &str,
    ) -> Result<Self, ExperimentError> {
        let mut file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ExperimentError::config(e.to_string()))?;
        if let Some(k) = file.remove("kind") {
            let k: ExperimentKind = k
                .try_into()
                .map_err(|e: toml::de::Error| ExperimentError::config(format!("kind: {e}")))?;
            if k != kind {
                return Err(ExperimentError::config(format!(
                    "config is for {k}, but {kind} was requested"
                )));
            }
        }
        let file_scale = match file.remove("scale") {
            Some(s) => Some(
                s.try_into::<Scale>()
                    .map_err(|e| ExperimentError::config(format!("scale: {e}")))?,
            ),
            None => None,
        };
        let scale = scale_override.or(file_scale).unwrap_or_default();
        let mut base = Self::preset(kind, scale).to_table();
        overlay(&mut base, file);
        Self::from_table(kind, base)
    }

    fn to_table(&self) -> toml::Table {
        let v = match self {
            Self::PowerlawGrid(s) => toml::Table::try_from(s),
            Self::ExpGrid(s) => toml::Table::try_from(s),
            Self::Gle1Perturb(s) => toml::Table::try_from(s),
            Self::Gle2Perturb(s) => toml::Table::try_from(s),
            Self::Simulate(s) => toml::Table::try_from(s),
        };
        v.expect("specs serialize to TOML tables")
    }

    fn from_table(kind: ExperimentKind, t: toml::Table) -> Result<Self, ExperimentError> {
        let err = |e: toml::de::Error| ExperimentError::config(e.to_string());
        let v = toml::Value::Table(t);
        Ok(match kind {
            ExperimentKind::PowerlawGrid => Self::PowerlawGrid(v.try_into().map_err(err)?),
            ExperimentKind::ExpGrid => Self::ExpGrid(v.try_into().map_err(err)?),
            ExperimentKind::Gle1Perturb => Self::Gle1Perturb(v.try_into().map_err(err)?),
            ExperimentKind::Gle2Perturb => Self::Gle2Perturb(v.try_into().map_err(err)?),
            ExperimentKind::Simulate => Self::Simulate(v.try_into().map_err(err)?),
        })
    }

    /// Resolved spec as a TOML document (with its `kind`), loadable by
    /// [`ExperimentSpec::from_toml`].
    pub fn to_toml(&self) -> String {
        let mut t = toml::Table::new();
        t.insert("kind".into(), toml::Value::String(self.kind().name().into()));
        t.extend(self.to_table());
        toml::to_string(&t).expect("TOML tables serialize")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ExperimentError> {
        let kind = self.kind();
        let (dt, t_final, seed, batches) = match self {
            Self::PowerlawGrid(s) => (&mut s.dt, &mut s.t_final, None, None),
            Self::ExpGrid(s) => (&mut s.dt, &mut s.t_final, None, None),
            Self::Gle1Perturb(s) => (&mut s.dt, &mut s.t_final, Some(&mut s.seed), Some(&mut s.batches)),
            Self::Gle2Perturb(s) => (&mut s.dt, &mut s.t_final, Some(&mut s.seed), Some(&mut s.batches)),
            Self::Simulate(s) => (&mut s.dt, &mut s.t_final, Some(&mut s.seed), Some(&mut s.batches)),
        };
        if let Some(v) = o.dt {
            *dt = v;
        }
        if let Some(v) = o.t_final {
            *t_final = v;
        }
        match (o.seed, seed) {
            (Some(v), Some(s)) => *s = v,
            (Some(_), None) => {
                return Err(ExperimentError::config(format!(
                    "{kind} is deterministic and takes no seed"
                )))
            }
            _ => {}
        }
        match (o.batches, batches) {
            (Some(v), Some(b)) => *b = v,
            (Some(_), None) => {
                return Err(ExperimentError::config(format!(
                    "{kind} is deterministic and takes no batch count"
                )))
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks ranges and builds every referenced kernel, weight and
    /// potential once.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let grid = |dt: f64, t: f64| crate::grid::TimeGrid::with_horizon(dt, t);
        let nonempty = |name: &str, v: &[f64]| {
            if v.is_empty() {
                Err(ExperimentError::config(format!("{name} is empty")))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(ExperimentError::config(format!("{name} has non-finite values")))
            } else {
                Ok(())
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ExperimentError::config(format!("{name} must be positive, got {v}")))
            }
        };
        let families = |f: &[FamilySweep]| -> Result<(), ExperimentError> {
            if f.is_empty() {
                return Err(ExperimentError::config("no perturbation families"));
            }
            for s in f {
                nonempty(&format!("{} alphas", s.family), &s.alphas)?;
            }
            Ok(())
        };
        match self {
            Self::PowerlawGrid(s) => {
                grid(s.dt, s.t_final)?;
                nonempty("a_values", &s.a_values)?;
                nonempty("beta_values", &s.beta_values)?;
                for a in &s.a_values {
                    positive("a", *a)?;
                }
                for b in &s.beta_values {
                    Kernel::power_law(s.c, s.alpha, *b)?;
                }
                if !(s.fit_window[0] > 0.0 && s.fit_window[0] < s.fit_window[1]) {
                    return Err(ExperimentError::config("fit_window must satisfy 0 < lo < hi"));
                }
            }
            Self::ExpGrid(s) => {
                grid(s.dt, s.t_final)?;
                nonempty("a_values", &s.a_values)?;
                nonempty("beta_values", &s.beta_values)?;
                for a in &s.a_values {
                    positive("a", *a)?;
                }
                for b in &s.beta_values {
                    Kernel::exponential(s.c, *b)?;
                }
                if let Some(w) = s.fit_window {
                    if !(w[0] >= 0.0 && w[0] < w[1]) {
                        return Err(ExperimentError::config("fit_window must satisfy 0 <= lo < hi"));
                    }
                }
            }
            Self::Gle1Perturb(s) => {
                grid(s.dt, s.t_final)?;
                positive("gamma", s.gamma)?;
                positive("batches", s.batches as f64)?;
                let k = s.kernel.build()?;
                if k.dim() != 1 {
                    return Err(ExperimentError::config("first-order experiment is one-dimensional"));
                }
                s.weight.build()?;
                families(&s.families)?;
                for f in &s.families {
                    for a in &f.alphas {
                        Kernel::perturbed(k.clone(), f.family, *a)?;
                    }
                }
            }
            Self::Gle2Perturb(s) => {
                grid(s.dt, s.t_final)?;
                positive("gamma", s.gamma)?;
                positive("batches", s.batches as f64)?;
                nonempty("eigenvalues", &s.eigenvalues)?;
                let k = s.kernel_spec().build()?;
                s.potential.build(k.dim())?;
                s.weight.build()?;
                families(&s.families)?;
                for f in &s.families {
                    for a in &f.alphas {
                        Kernel::perturbed(k.clone(), f.family, *a)?;
                    }
                }
            }
            Self::Simulate(s) => {
                grid(s.dt, s.t_final)?;
                positive("gamma", s.gamma)?;
                positive("batches", s.batches as f64)?;
                let k = s.kernel.build()?;
                if let Some(p) = &s.perturbation {
                    Kernel::perturbed(k.clone(), p.family, p.alpha)?;
                }
                match (s.order, &s.potential) {
                    (Order::Second, None) => {
                        return Err(ExperimentError::config("second-order simulation needs a potential"))
                    }
                    (Order::Second, Some(p)) => {
                        p.build(k.dim())?;
                    }
                    (Order::First, _) => {}
                }
                for (name, v) in [("init_v", &s.init_v), ("init_x", &s.init_x)] {
                    if let Some(v) = v {
                        if v.len() != k.dim() {
                            return Err(ExperimentError::config(format!(
                                "{name} has length {}, kernel dimension is {}",
                                v.len(),
                                k.dim()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl SecondOrderSpec {
    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec::MatrixExponential {
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: None,
            q_seed: Some(self.q_seed),
        }
    }
}

fn overlay(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if !o.contains_key("type") && !o.contains_key("form") =>
            {
                overlay(b, o)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Orthogonal matrix from the columns of a Gaussian matrix drawn on the
/// auxiliary stream of `seed`.
pub fn random_orthogonal(d: usize, seed: u64) -> Result<Matrix, ExperimentError> {
    let src = NoiseSource::new(seed);
    let mut data = vec![0.0; d * d];
    src.fill_normal(0, Stream::Auxiliary, 0, &mut data);
    Matrix::from_row_major(d, data)
        .and_then(|m| m.orthonormalized_columns())
        .ok_or_else(|| ExperimentError::config("random eigenvector matrix is singular"))
}

/// Runs a validated spec.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    Ok(match spec {
        ExperimentSpec::PowerlawGrid(s) => ExperimentResult::PowerlawGrid(run_powerlaw_grid(s)?),
        ExperimentSpec::ExpGrid(s) => ExperimentResult::ExpGrid(run_exp_grid(s)?),
        ExperimentSpec::Gle1Perturb(s) => ExperimentResult::Perturb(run_first_order_perturb(s)?),
        ExperimentSpec::Gle2Perturb(s) => ExperimentResult::Perturb(run_second_order_perturb(s)?),
        ExperimentSpec::Simulate(s) => ExperimentResult::Simulate(run_simulate(s)?),
    })
}

#[derive(Debug, Clone)]
pub enum ExperimentResult {
    PowerlawGrid(PowerLawGridResult),
    ExpGrid(ExpGridResult),
    Perturb(PerturbResult),
    Simulate(SimulateResult),
}

impl ExperimentResult {
    pub fn report(&self) -> Report {
        match self {
            Self::PowerlawGrid(r) => r.report(),
            Self::ExpGrid(r) => r.report(),
            Self::Perturb(r) => r.report(),
            Self::Simulate(r) => r.report(),
        }
    }

    pub fn summary(&self) -> Report {
        match self {
            Self::PowerlawGrid(r) => r.summary(),
            Self::ExpGrid(r) => r.summary(),
            Self::Perturb(r) => r.summary(),
            Self::Simulate(r) => r.summary(),
        }
    }

    /// At least one cell or batch diverged.
    pub fn diverged(&self) -> bool {
        match self {
            Self::PowerlawGrid(r) => r.cells.iter().any(|c| c.status == "diverged"),
            Self::ExpGrid(r) => r.cells.iter().any(|c| c.status == "diverged"),
            Self::Perturb(r) => r.rows.iter().any(|c| c.status == "diverged"),
            Self::Simulate(r) => r.diverged.iter().any(|d| d.is_some()),
        }
    }
}
