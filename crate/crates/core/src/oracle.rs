//! Brute-force reference computations: a fixed-step shooting integrator for
//! `w'' = Λ/(1+w)²` and a refined-grid reference for 1-D Poisson solves.
//!
//! Nothing here calls the closed-form single-membrane formulas, so agreement
//! with them is an independent check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::membrane::solve_poisson_1d;

/// Steps of the coarse pass over `[0, 1/2]`; the step is `1e-4`.
pub const SHOOTING_STEPS: usize = 5000;
/// Profile samples are taken every this many coarse steps.
const SAMPLE_EVERY: usize = 100;

/// Classical RK4 for `y' = f(x, y)` with `steps` equal steps on `[x0, x1]`.
/// Calls `observe(k, x, y)` after every step `k = 1..=steps`; returning an
/// error aborts the integration.
pub fn rk4<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    y0: [f64; N],
    x0: f64,
    x1: f64,
    steps: usize,
    mut observe: impl FnMut(usize, f64, &[f64; N]) -> Result<()>,
) -> Result<[f64; N]> {
    let h = (x1 - x0) / steps as f64;
    let mut y = y0;
    let axpy = |y: &[f64; N], k: &[f64; N], a: f64| {
        let mut out = *y;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += a * ki;
        }
        out
    };
    for k in 1..=steps {
        let x = x0 + (k - 1) as f64 * h;
        let k1 = f(x, &y);
        let k2 = f(x + h / 2.0, &axpy(&y, &k1, h / 2.0));
        let k3 = f(x + h / 2.0, &axpy(&y, &k2, h / 2.0));
        let k4 = f(x + h, &axpy(&y, &k3, h));
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        observe(k, x0 + k as f64 * h, &y)?;
    }
    Ok(y)
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    pub lambda: f64,
    /// `w(0)`.
    pub center_value: f64,
    /// `(x, w(x))` at `x = 0, 0.01, ..., 0.5`.
    pub profile: Vec<(f64, f64)>,
    /// `w(1/2)`, the defect in the boundary condition `w(1/2) = 0`.
    pub mismatch: f64,
    pub slope_end: f64,
}

fn shoot_pass(lambda: f64, w0: f64, steps: usize) -> Result<(Vec<(f64, f64)>, [f64; 2])> {
    let rhs = |_: f64, y: &[f64; 2]| [y[1], lambda / ((1.0 + y[0]) * (1.0 + y[0]))];
    let every = steps / (SHOOTING_STEPS / SAMPLE_EVERY);
    let mut profile = vec![(0.0, w0)];
    let end = rk4(&rhs, [w0, 0.0], 0.0, 0.5, steps, |k, x, y| {
        if !(y[0] > -1.0) || !y[0].is_finite() {
            return Err(Error::Touchdown { x });
        }
        if k % every == 0 {
            profile.push((x, y[0]));
        }
        Ok(())
    })?;
    Ok((profile, end))
}

/// Integrates `w'' = Λ/(1+w)²`, `w(0) = w0`, `w'(0) = 0` to `x = 1/2` with
/// RK4 at steps `1e-4` and `5e-5`, combined by Richardson extrapolation.
pub fn shoot_membrane(lambda: f64, w0: f64) -> Result<ShootingResult> {
    if !(w0 > -1.0 && w0 <= 0.0) {
        return Err(Error::InvalidParameter(format!("center value must lie in (-1, 0], got {w0}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("Lambda must be >= 0, got {lambda}")));
    }
    let (coarse, end_c) = shoot_pass(lambda, w0, SHOOTING_STEPS)?;
    let (fine, end_f) = shoot_pass(lambda, w0, 2 * SHOOTING_STEPS)?;
    let extrapolate = |c: f64, f: f64| f + (f - c) / 15.0;
    let profile = coarse
        .iter()
        .zip(&fine)
        .map(|(&(x, c), &(_, f))| (x, extrapolate(c, f)))
        .collect();
    Ok(ShootingResult {
        lambda,
        center_value: w0,
        profile,
        mismatch: extrapolate(end_c[0], end_f[0]),
        slope_end: extrapolate(end_c[1], end_f[1]),
    })
}

/// Bisection on `w0` to zero the mismatch inside `[lo, hi]`, where it changes sign.
fn bisect_center(lambda: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut m_lo = shoot_membrane(lambda, lo)?.mismatch;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let m = shoot_membrane(lambda, mid)?.mismatch;
        if (m > 0.0) == (m_lo > 0.0) {
            lo = mid;
            m_lo = m;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All center values `w0` whose shot hits `w(1/2) = 0`, found by scanning
/// `1 + w0` on a geometric lattice in `[1e-6, 1]` and bisecting sign changes.
pub fn shooting_branches(lambda: f64, scan: usize) -> Result<Vec<f64>> {
    let scan = scan.max(8);
    let ys: Vec<f64> = (0..=scan)
        .map(|k| 10f64.powf(-6.0 * (1.0 - k as f64 / scan as f64)))
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    let mut roots = Vec::new();
    for &y in &ys {
        let w0 = (y - 1.0).min(0.0);
        let m = shoot_membrane(lambda, w0)?.mismatch;
        if m == 0.0 {
            roots.push(w0);
        } else if let Some((pw, pm)) = prev {
            if pm != 0.0 && (pm > 0.0) != (m > 0.0) {
                roots.push(bisect_center(lambda, pw, w0)?);
            }
        }
        prev = Some((w0, m));
    }
    Ok(roots)
}

/// `Λ` for which the shot from `w0` lands on `w(1/2) = 0`. The endpoint
/// increases with `Λ` because the solution stays above `w0`.
pub fn shooting_lambda_for_center(w0: f64) -> Result<f64> {
    let mut hi = 1.0;
    while shoot_membrane(hi, w0)?.mismatch < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoSolutionFound(format!("no Lambda reaches w0 = {w0}")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if shoot_membrane(mid, w0)?.mismatch < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShootingFold {
    pub lambda_star: f64,
    pub center_value: f64,
}

/// Fold of the shooting formulation: the maximum over `w0` of
/// [`shooting_lambda_for_center`], by golden-section search.
pub fn shooting_fold() -> Result<ShootingFold> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-0.95, -0.05);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = shooting_lambda_for_center(c)?;
    let mut fd = shooting_lambda_for_center(d)?;
    while b - a > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = shooting_lambda_for_center(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = shooting_lambda_for_center(d)?;
        }
    }
    let w0 = 0.5 * (a + b);
    Ok(ShootingFold {
        lambda_star: shooting_lambda_for_center(w0)?,
        center_value: w0,
    })
}

/// Solves `w'' = q` on a lattice refined `fine_factor` times and restricts
/// the result to the `n` coarse nodes.
pub fn reference_poisson(
    q: impl Fn(f64) -> f64,
    n: usize,
    boundaries: (f64, f64),
    fine_factor: usize,
) -> Result<Vec<f64>> {
    if fine_factor < 4 {
        return Err(Error::InvalidParameter(format!(
            "fine_factor must be at least 4, got {fine_factor}"
        )));
    }
    if n < 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: n });
    }
    let m = (n - 1) * fine_factor + 1;
    let qf: Vec<f64> = (0..m)
        .map(|i| q(crate::grid::x_node(m, i)))
        .collect();
    let fine = solve_poisson_1d(&qf, boundaries.0, boundaries.1)?;
    Ok((0..n).map(|i| fine[i * fine_factor]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_lambda_stays_flat() {
        let r = shoot_membrane(0.0, 0.0).unwrap();
        assert_eq!(r.mismatch, 0.0);
        assert!(r.profile.iter().all(|&(_, w)| w == 0.0));
        assert_eq!(r.profile.len(), 51);
        assert_abs_diff_eq!(r.profile[50].0, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // y'' = -y, y(0) = 0, y'(0) = 1 on [0, 2].
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let err = |n: usize| {
            let y = rk4(&f, [0.0, 1.0], 0.0, 2.0, n, |_, _, _| Ok(())).unwrap();
            (y[0] - 2f64.sin()).abs()
        };
        let (e1, e2) = (err(50), err(100));
        assert!(e1 / e2 >= 16.0 * 0.9, "ratio {}", e1 / e2);
    }

    #[test]
    fn bad_center_rejected() {
        assert!(shoot_membrane(0.3, -1.0).is_err());
        assert!(shoot_membrane(0.3, 0.1).is_err());
    }

    #[test]
    fn constant_forcing_reference_is_exact() {
        let r = reference_poisson(|_| 0.4, 11, (0.0, 0.0), 4).unwrap();
        for (i, w) in r.iter().enumerate() {
            let x: f64 = crate::grid::x_node(11, i);
            assert_abs_diff_eq!(*w, 0.2 * (x * x - 1.0), epsilon = 1e-14);
        }
        assert!(reference_poisson(|_| 0.4, 11, (0.0, 0.0), 3).is_err());
    }
}
