use crate::error::SimError;
use crate::kernel::PotentialSpec;
use crate::linalg::{dot, norm_sq, Matrix};

/// Hypocoercive distance `r^2 = Z.AZ + Z.BW + W.CW` for position and velocity
/// differences `Z`, `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovParams {
    pub lambda: f64,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub gamma: f64,
    pub u: f64,
    pub r: Matrix,
}

/// `lambda = min(1/8, kappa0 u / (2 gamma^2))`,
/// `A = u R / gamma^2 + (1 - 2 lambda)^2 / 2 Id`, `B = (1 - 2 lambda) / gamma Id`,
/// `C = Id / gamma^2`.
pub fn lyapunov_params(
    gamma: f64,
    u: f64,
    r: &Matrix,
    kappa0: f64,
) -> Result<LyapunovParams, SimError> {
    for (name, v) in [("gamma", gamma), ("u", u), ("kappa0", kappa0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let d = r.dim();
    let g2 = 1.0 / (gamma * gamma);
    let lambda = (0.125f64).min(kappa0 * u * g2 / 2.0);
    let one_minus = 1.0 - 2.0 * lambda;
    let id = Matrix::identity(d);
    let a = &r.scale(g2 * u) + &id.scale(0.5 * one_minus * one_minus);
    Ok(LyapunovParams {
        lambda,
        a,
        b: id.scale(one_minus / gamma),
        c: id.scale(g2),
        gamma,
        u,
        r: r.clone(),
    })
}

impl LyapunovParams {
    pub fn from_potential(gamma: f64, pot: &PotentialSpec) -> Result<Self, SimError> {
        lyapunov_params(gamma, pot.u(), pot.r(), pot.kappa0())
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

/// `Z.AZ + Z.BW + W.CW`.
pub fn lyapunov_distance_sq(p: &LyapunovParams, z: &[f64], w: &[f64]) -> f64 {
    p.a.quad_form(z, z) + p.b.quad_form(z, w) + p.c.quad_form(w, w)
}

/// `u/gamma^2 Z.RZ + |(1 - 2 lambda) Z + W/gamma|^2 / 2 + |W|^2 / (2 gamma^2)`,
/// the sum-of-squares form of [`lyapunov_distance_sq`].
pub fn lyapunov_distance_sq_expanded(p: &LyapunovParams, z: &[f64], w: &[f64]) -> f64 {
    let g = p.gamma;
    let mixed: Vec<f64> = z
        .iter()
        .zip(w)
        .map(|(zi, wi)| (1.0 - 2.0 * p.lambda) * zi + wi / g)
        .collect();
    p.u / (g * g) * p.r.quad_form(z, z) + 0.5 * norm_sq(&mixed) + 0.5 * norm_sq(w) / (g * g)
}

/// `(2AZ + BW).W + (BZ + 2CW).[-gamma W - u (grad U(x) - grad U(x~))]` with
/// `Z = x - x~`, `W = v - v~`.
pub fn gamma_form(
    p: &LyapunovParams,
    pot: &PotentialSpec,
    x: &[f64],
    x_tilde: &[f64],
    v: &[f64],
    v_tilde: &[f64],
) -> f64 {
    let z: Vec<f64> = x.iter().zip(x_tilde).map(|(a, b)| a - b).collect();
    let w: Vec<f64> = v.iter().zip(v_tilde).map(|(a, b)| a - b).collect();
    let gu = pot.grad_u(x);
    let gu_t = pot.grad_u(x_tilde);
    let drift: Vec<f64> = w
        .iter()
        .zip(gu.iter().zip(&gu_t))
        .map(|(wi, (g1, g2))| -p.gamma * wi - p.u * (g1 - g2))
        .collect();
    let az = p.a.mul_vec(&z);
    let bw = p.b.mul_vec(&w);
    let bz = p.b.mul_vec(&z);
    let cw = p.c.mul_vec(&w);
    let first: Vec<f64> = az.iter().zip(&bw).map(|(a, b)| 2.0 * a + b).collect();
    let second: Vec<f64> = bz.iter().zip(&cw).map(|(b, c)| b + 2.0 * c).collect();
    dot(&first, &w) + dot(&second, &drift)
}
