use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::grid::{GridFunction, TimeGrid};

/// Parametric shape of a comparison function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum WeightForm {
    /// `(alpha + t)^{-beta}`.
    PowerLaw { alpha: f64, beta: f64 },
    /// `e^{-rate t}`.
    Exponential { rate: f64 },
}

/// Positive comparison function `h(t) = scale * form(t)` with decay index `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    form: WeightForm,
    mu: f64,
    scale: f64,
}

impl WeightFunction {
    /// `(alpha + t)^{-beta}` with `mu = 0`.
    pub fn power_law(alpha: f64, beta: f64) -> Result<Self, KernelError> {
        Self::new(WeightForm::PowerLaw { alpha, beta }, 0.0)
    }

    /// `e^{-rate t}` with a user-chosen index `mu > -rate`.
    pub fn exponential(rate: f64, mu: f64) -> Result<Self, KernelError> {
        Self::new(WeightForm::Exponential { rate }, mu)
    }

    pub fn new(form: WeightForm, mu: f64) -> Result<Self, KernelError> {
        let bad = |m: String| Err(KernelError::InvalidParameter(m));
        if !(mu.is_finite() && mu <= 0.0) {
            return bad(format!("weight index mu must be <= 0, got {mu}"));
        }
        match form {
            WeightForm::PowerLaw { alpha, beta } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return bad(format!("weight alpha must be positive, got {alpha}"));
                }
                if !(beta.is_finite() && beta > 1.0) {
                    return bad(format!("power-law weight needs beta > 1, got {beta}"));
                }
                if mu != 0.0 {
                    return bad(format!("power-law weight needs mu = 0, got {mu}"));
                }
            }
            WeightForm::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad(format!("weight rate must be positive, got {rate}"));
                }
                if mu <= -rate {
                    return bad(format!("need mu > -rate, got mu = {mu}, rate = {rate}"));
                }
            }
        }
        Ok(Self {
            form,
            mu,
            scale: 1.0,
        })
    }

    /// `c * h` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, KernelError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "weight scale must be positive, got {c}"
            )));
        }
        Ok(Self {
            scale: self.scale * c,
            ..*self
        })
    }

    pub fn form(&self) -> WeightForm {
        self.form
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Power-law weights belong to the subexponential class; pure
    /// exponentials do not.
    pub fn is_subexponential(&self) -> bool {
        matches!(self.form, WeightForm::PowerLaw { .. })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.scale
            * match self.form {
                WeightForm::PowerLaw { alpha, beta } => (alpha + t).powf(-beta),
                WeightForm::Exponential { rate } => (-rate * t).exp(),
            }
    }

    pub fn sample(&self, grid: &TimeGrid) -> GridFunction {
        GridFunction::from_fn(*grid, |t| self.eval(t)).expect("weights are finite")
    }

    /// `int_0^inf e^{-mu s} h(s) ds`.
    pub fn laplace_transform(&self, mu: f64) -> Result<f64, KernelError> {
        match self.form {
            WeightForm::Exponential { rate } => {
                if mu <= -rate {
                    Err(KernelError::Divergent {
                        mu,
                        reason: format!("weight rate {rate} does not dominate"),
                    })
                } else {
                    Ok(self.scale / (rate + mu))
                }
            }
            WeightForm::PowerLaw { alpha, beta } => {
                if mu == 0.0 {
                    Ok(self.scale * alpha.powf(1.0 - beta) / (beta - 1.0))
                } else if mu < 0.0 {
                    Err(KernelError::Divergent {
                        mu,
                        reason: "power-law weight against a growing exponential".into(),
                    })
                } else {
                    super::laplace_by_quadrature(|s| self.eval(s), mu, &[])
                }
            }
        }
    }

    /// `h_hat(mu)` at the weight's own index.
    pub fn h_hat(&self) -> Result<f64, KernelError> {
        self.laplace_transform(self.mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants() {
        assert!(WeightFunction::power_law(1.0, 1.0).is_err());
        assert!(WeightFunction::exponential(0.9, -0.9).is_err());
        assert!(WeightFunction::exponential(0.9, 0.1).is_err());
        let h = WeightFunction::exponential(0.9, -0.8).unwrap();
        assert!((h.h_hat().unwrap() - 10.0).abs() < 1e-12);
        let h = WeightFunction::power_law(1.0, 6.0).unwrap();
        assert!((h.h_hat().unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn quadrature_transform_matches_fine_simpson() {
        let h = WeightFunction::power_law(1.0, 6.0).unwrap();
        let fine = TimeGrid::new(1e-3, 200_000).unwrap();
        let samples: Vec<f64> = fine.times().map(|s| (-0.5 * s).exp() * h.eval(s)).collect();
        // Composite Simpson on the fine grid.
        let simpson: f64 = samples
            .windows(3)
            .step_by(2)
            .map(|w| fine.dt() / 3.0 * (w[0] + 4.0 * w[1] + w[2]))
            .sum();
        assert!((h.laplace_transform(0.5).unwrap() - simpson).abs() < 1e-10);
    }
}
