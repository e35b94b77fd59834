//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals, plus a
//! doubling-interval driver for integrals over `[a, inf)`.

use crate::error::KernelError;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of one quadrature call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Quadrature {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Quadrature {
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)` by global
/// bisection of the worst subinterval.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature, KernelError> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut pieces = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..2000 {
        let value: f64 = pieces.iter().map(|p| p.2.value).sum();
        let error: f64 = pieces.iter().map(|p| p.2.error).sum();
        if !value.is_finite() {
            return Err(KernelError::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature { value, error });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        pieces.push((lo, mid, gk15(&f, lo, mid)));
        pieces.push((mid, hi, gk15(&f, mid, hi)));
    }
    Err(KernelError::Quadrature(format!(
        "subdivision limit reached on [{a}, {b}]"
    )))
}

/// Integrates `f` over `[a, inf)` on the intervals `[a + w(2^k - 1), a + w(2^{k+1} - 1)]`
/// until a piece falls below `rel_tol` of the running total. Fails when the
/// pieces stop shrinking, which signals a divergent integral.
pub fn integrate_to_infinity(
    f: impl Fn(f64) -> f64,
    a: f64,
    width: f64,
    rel_tol: f64,
) -> Result<Quadrature, KernelError> {
    let mut total: f64 = 0.0;
    let mut error = 0.0;
    let mut lo = a;
    let mut w = width;
    let mut prev_piece = f64::INFINITY;
    let mut growth_streak = 0;
    for _ in 0..200 {
        let hi = lo + w;
        let q = integrate(&f, lo, hi, 1e-2 * rel_tol * total.abs(), 1e-12)?;
        total += q.value;
        error += q.error;
        let piece = q.value.abs();
        if piece <= rel_tol * total.abs() || (total == 0.0 && piece == 0.0 && lo > a + 64.0 * width)
        {
            return Ok(Quadrature {
                value: total,
                error: error + piece,
            });
        }
        if piece >= 0.99 * prev_piece {
            growth_streak += 1;
            if growth_streak >= 6 {
                return Err(KernelError::Quadrature(format!(
                    "tail pieces stop shrinking beyond t = {lo}"
                )));
            }
        } else {
            growth_streak = 0;
        }
        prev_piece = piece;
        lo = hi;
        w *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    Err(KernelError::Quadrature(format!(
        "tail integral from {a} did not converge"
    )))
}
