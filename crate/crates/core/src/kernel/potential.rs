use std::fmt;
use std::sync::Arc;

use crate::error::KernelError;
use crate::linalg::{dot, symmetric_eigenvalues, Matrix};
use crate::rng::{NoiseSource, Stream};

/// User gradient of a convex part, written into the second argument.
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Gradient of the convex part `G` of the potential.
#[derive(Clone)]
pub enum ConvexPart {
    Zero,
    /// `G(x) = L_G sum_i log cosh(x_i)`, gradient `L_G tanh(x)`.
    LogCosh,
    /// User gradient `(x, out)`; its Lipschitz constant and convexity are
    /// checked on random pairs at construction.
    Custom(GradientFn),
}

impl fmt::Debug for ConvexPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::LogCosh => f.write_str("LogCosh"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `U(x) = x . R x / 2 + G(x)`, scaled by the force constant `u`.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    r: Matrix,
    kappa0: f64,
    convex: ConvexPart,
    lg: f64,
    u: f64,
}

impl PotentialSpec {
    /// Computes `kappa0 = lambda_min(R)` from `R`.
    pub fn new(r: Matrix, convex: ConvexPart, lg: f64, u: f64) -> Result<Self, KernelError> {
        if !r.is_symmetric(1e-14) {
            return Err(KernelError::InvalidParameter("R must be symmetric".into()));
        }
        let kappa0 = symmetric_eigenvalues(&r)[0];
        if !(kappa0 > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "R must be positive definite, smallest eigenvalue {kappa0}"
            )));
        }
        if !(u.is_finite() && u > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "force scaling u must be positive, got {u}"
            )));
        }
        if !(lg.is_finite() && lg >= 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "L_G must be nonnegative, got {lg}"
            )));
        }
        let spec = Self {
            r,
            kappa0,
            convex,
            lg,
            u,
        };
        if matches!(spec.convex, ConvexPart::Custom(_)) {
            spec.check_convex_part(256, 0x5eed)?;
        }
        Ok(spec)
    }

    /// As [`PotentialSpec::new`], additionally checking a stated `kappa0`.
    pub fn with_kappa0(
        r: Matrix,
        kappa0: f64,
        convex: ConvexPart,
        lg: f64,
        u: f64,
    ) -> Result<Self, KernelError> {
        let spec = Self::new(r, convex, lg, u)?;
        if (spec.kappa0 - kappa0).abs() > 1e-10 {
            return Err(KernelError::InvalidParameter(format!(
                "kappa0 = {kappa0} differs from lambda_min(R) = {}",
                spec.kappa0
            )));
        }
        Ok(spec)
    }

    /// `R = kappa0 Id` in dimension `d`.
    pub fn isotropic(
        d: usize,
        kappa0: f64,
        convex: ConvexPart,
        lg: f64,
        u: f64,
    ) -> Result<Self, KernelError> {
        Self::new(Matrix::identity(d).scale(kappa0), convex, lg, u)
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn lg(&self) -> f64 {
        self.lg
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn convex(&self) -> &ConvexPart {
        &self.convex
    }

    /// `grad G(x)` into `out`.
    pub fn grad_g_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.convex {
            ConvexPart::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            ConvexPart::LogCosh => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = self.lg * xi.tanh();
                }
            }
            ConvexPart::Custom(g) => g(x, out),
        }
    }

    /// `grad U(x) = R x + grad G(x)` into `out`.
    pub fn grad_u_into(&self, x: &[f64], out: &mut [f64]) {
        self.grad_g_into(x, out);
        let d = self.dim();
        for (o, row) in out.iter_mut().zip(self.r.as_slice().chunks_exact(d)) {
            *o += dot(row, x);
        }
    }

    pub fn grad_u(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_u_into(x, &mut out);
        out
    }

    /// Checks the Lipschitz bound and monotonicity of `grad G` on random pairs.
    pub fn check_convex_part(&self, pairs: usize, seed: u64) -> Result<(), KernelError> {
        let d = self.dim();
        let src = NoiseSource::new(seed);
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
        for p in 0..pairs as u64 {
            src.fill_normal(p, Stream::Auxiliary, 0, &mut x);
            src.fill_normal(p, Stream::Auxiliary, 1, &mut y);
            x.iter_mut().for_each(|v| *v *= 3.0);
            self.grad_g_into(&x, &mut gx);
            self.grad_g_into(&y, &mut gy);
            let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
            let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let lip = dot(&dg, &dg).sqrt();
            let dist = dot(&dx, &dx).sqrt();
            if lip > self.lg * dist * (1.0 + 1e-12) + 1e-15 {
                return Err(KernelError::InvalidParameter(format!(
                    "grad G violates the Lipschitz bound L_G = {}",
                    self.lg
                )));
            }
            if dot(&dg, &dx) < -1e-12 {
                return Err(KernelError::InvalidParameter("G is not convex".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_pass_checks() {
        let p = PotentialSpec::isotropic(3, 10.0, ConvexPart::LogCosh, 0.01, 10.0).unwrap();
        assert_eq!(p.kappa0(), 10.0);
        p.check_convex_part(1000, 1).unwrap();
        let g = p.grad_u(&[0.0, 0.0, 0.0]);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_custom_gradient() {
        let r = Matrix::identity(2);
        let concave = ConvexPart::Custom(Arc::new(|x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -0.1 * v;
            }
        }));
        assert!(PotentialSpec::new(r.clone(), concave, 1.0, 1.0).is_err());
        let steep = ConvexPart::Custom(Arc::new(|x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = 2.0 * v;
            }
        }));
        assert!(PotentialSpec::new(r, steep, 1.0, 1.0).is_err());
    }

    #[test]
    fn kappa0_checked() {
        let r = Matrix::diagonal(&[2.0, 5.0]);
        assert!(PotentialSpec::with_kappa0(r.clone(), 2.0, ConvexPart::Zero, 0.0, 1.0).is_ok());
        assert!(PotentialSpec::with_kappa0(r, 2.1, ConvexPart::Zero, 0.0, 1.0).is_err());
    }
}
