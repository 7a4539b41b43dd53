//! One-dimensional membrane problems `w'' = q` on `(-1, 1)` and the map `S`
//! that sends a membrane pair to the membranes driven by its potential.

use serde::Serialize;

use crate::elliptic::{solve_potential, LinearSystemStats};
use crate::error::{Error, Result};
use crate::grid::{interior_second_differences, trapezoid_weight, x_node, Field2, Grid2, MembranePair, PhysParams};
use crate::scalar::Real;
use crate::traces::{assemble_g, assemble_h, TracePair};
use crate::transform::{assemble_coefficients, ellipticity_report, EllipticityReport};

/// Green's kernel of `w'' = q`, `w(±1) = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreenKernel;

impl GreenKernel {
    #[inline]
    pub fn eval<F: Real>(x: F, s: F) -> F {
        let half = F::lit(0.5);
        if x <= s {
            half * (F::one() + x) * (s - F::one())
        } else {
            half * (F::one() + s) * (x - F::one())
        }
    }
}

/// Solves `w'' = q` with `w(-1) = left`, `w(1) = right` by trapezoid
/// quadrature of the Green's kernel on the nodes of `q`.
///
/// On a uniform lattice this reproduces the three-point second difference
/// exactly: `(w[i-1] - 2 w[i] + w[i+1]) / h² = q[i]` at interior nodes.
pub fn solve_poisson_1d<F: Real>(q: &[F], left: F, right: F) -> Result<Vec<F>> {
    let n = q.len();
    if n < 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: n });
    }
    if let Some(k) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite forcing at node {k}")));
    }
    let h = F::lit(2.0) / F::from_usize_exact(n - 1);
    let xs: Vec<F> = (0..n).map(|i| x_node(n, i)).collect();
    let half = F::lit(0.5);
    let weighted: Vec<F> = q
        .iter()
        .enumerate()
        .map(|(j, &qj)| trapezoid_weight::<F>(n, j) * h * qj)
        .collect();
    let mut w: Vec<F> = xs
        .iter()
        .map(|&x| {
            let affine = left * half * (F::one() - x) + right * half * (F::one() + x);
            let conv = xs
                .iter()
                .zip(&weighted)
                .fold(F::zero(), |acc, (&s, &qs)| acc + GreenKernel::eval(x, s) * qs);
            affine + conv
        })
        .collect();
    w[0] = left;
    w[n - 1] = right;
    Ok(w)
}

/// Diagnostic threshold `a₀(r₀) = r₀ (3r₀/2 - 1)² / ((1 + c₃)² (1 + 4r₀²))`.
pub fn a0_threshold<F: Real>(r0: F, c3: F) -> F {
    let t = F::lit(1.5) * r0 - F::one();
    r0 * t * t / ((F::one() + c3).powi(2) * (F::one() + F::lit(4.0) * r0 * r0))
}

/// Everything computed during one application of `S`.
#[derive(Debug, Clone, Serialize)]
pub struct StepOutput<F> {
    pub s1: Vec<F>,
    pub s2: Vec<F>,
    pub phi: Field2<F>,
    pub psi: Field2<F>,
    pub traces: TracePair<F>,
    pub g: Vec<F>,
    pub h: Vec<F>,
    pub linear: LinearSystemStats,
    pub ellipticity: EllipticityReport<F>,
    /// Largest interior second difference of `S1`.
    pub s1_curvature_max: F,
    /// Smallest interior second difference of `S2`.
    pub s2_curvature_min: F,
}

/// Applies the map `S`: potential solve, boundary traces, forcing, and the
/// two membrane solves `S1'' = λ g`, `S2'' = -μ h`.
#[allow(non_snake_case)]
pub fn step_S<F: Real>(
    pair: &MembranePair<F>,
    params: &PhysParams<F>,
    grid: &Grid2,
    tol: F,
) -> Result<StepOutput<F>> {
    params.validate()?;
    let coeffs = assemble_coefficients(pair, params.eps, grid)?;
    let ellipticity = ellipticity_report(&coeffs);
    let sol = solve_potential(&coeffs, grid, tol)?;
    let traces = TracePair::from_field(&sol.phi, grid)?;
    let g = assemble_g(pair, &traces.d_top, params.eps)?;
    let h = assemble_h(pair, &traces.d_bottom, params.eps)?;
    let q1: Vec<F> = g.iter().map(|&x| params.lambda * x).collect();
    let q2: Vec<F> = h.iter().map(|&x| -params.mu * x).collect();
    let s1 = solve_poisson_1d(&q1, F::zero(), F::zero())?;
    let s2 = solve_poisson_1d(&q2, -F::one(), -F::one())?;
    let hx = grid.hx::<F>();
    let s1_curvature_max = interior_second_differences(&s1, hx)
        .into_iter()
        .fold(F::neg_infinity(), F::max);
    let s2_curvature_min = interior_second_differences(&s2, hx)
        .into_iter()
        .fold(F::infinity(), F::min);
    Ok(StepOutput {
        s1,
        s2,
        phi: sol.phi,
        psi: sol.psi,
        traces,
        g,
        h,
        linear: sol.stats,
        ellipticity,
        s1_curvature_max,
        s2_curvature_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{evenness_defect, flat_pair, make_grid};
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_properties() {
        let pts: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
        for &x in &pts {
            assert_eq!(GreenKernel::eval(x, 1.0), 0.0);
            assert_eq!(GreenKernel::eval(-1.0, x), 0.0);
            for &s in &pts {
                let g = GreenKernel::eval(x, s);
                assert!(g <= 0.0);
                assert_abs_diff_eq!(g, GreenKernel::eval(s, x), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn constant_forcing_exact() {
        let n = 21;
        let w = solve_poisson_1d(&vec![0.7; n], 0.0, 0.0).unwrap();
        for (i, wi) in w.iter().enumerate() {
            let x: f64 = x_node(n, i);
            assert_abs_diff_eq!(*wi, 0.7 * (x * x - 1.0) / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn linear_forcing_is_exact_at_nodes() {
        // The three-point stencil has no truncation error on cubics.
        let n = 21;
        let xs: Vec<f64> = (0..n).map(|i| x_node(n, i)).collect();
        let w = solve_poisson_1d(&xs, 0.0, 0.0).unwrap();
        for (x, wi) in xs.iter().zip(&w) {
            assert_abs_diff_eq!(*wi, (x * x * x - x) / 6.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn smooth_forcing_second_order() {
        let err = |n: usize| {
            let xs: Vec<f64> = (0..n).map(|i| x_node(n, i)).collect();
            let q: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
            let w = solve_poisson_1d(&q, 0.0, 0.0).unwrap();
            xs.iter()
                .zip(&w)
                .map(|(x, wi)| (wi - (1f64.cos() - x.cos())).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(21), err(41));
        assert!(e1 > 0.0 && e1 < 1e-2);
        assert_abs_diff_eq!(e1 / e2, 4.0, epsilon = 0.2);
    }

    #[test]
    fn lower_membrane_first_iterate() {
        let n = 17;
        let mu = 0.3;
        let w = solve_poisson_1d(&vec![-mu; n], -1.0, -1.0).unwrap();
        for (i, wi) in w.iter().enumerate() {
            let x: f64 = x_node(n, i);
            assert_abs_diff_eq!(*wi, -1.0 + mu * (1.0 - x * x) / 2.0, epsilon = 1e-14);
        }
        assert_eq!((w[0], w[n - 1]), (-1.0, -1.0));
    }

    #[test]
    fn second_difference_reproduces_forcing() {
        let n = 33;
        let q: Vec<f64> = (0..n).map(|i| (3.0 * x_node::<f64>(n, i)).sin() + 0.5).collect();
        let w = solve_poisson_1d(&q, 0.2, -0.4).unwrap();
        let d2 = interior_second_differences(&w, 2.0 / 32.0);
        for (k, d) in d2.iter().enumerate() {
            assert_abs_diff_eq!(*d, q[k + 1], epsilon = 1e-10);
        }
    }

    #[test]
    fn a0_reference_value() {
        assert_abs_diff_eq!(a0_threshold(1.0 / 3.0, 1.0), 3.0 / 208.0, epsilon = 1e-16);
        assert_abs_diff_eq!(3.0 / 208.0, 0.01442, epsilon = 1e-5);
    }

    #[test]
    fn first_iterate_from_flat() {
        let g = make_grid(17, 9).unwrap();
        let p = PhysParams::new(0.1, 0.05, 0.03, 1.0 / 3.0).unwrap();
        let out = step_S(&flat_pair(&g), &p, &g, 1e-10).unwrap();
        for i in 0..g.nx() {
            let x: f64 = g.x(i);
            assert_abs_diff_eq!(out.s1[i], 0.05 * (x * x - 1.0) / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(out.s2[i], -1.0 + 0.03 * (1.0 - x * x) / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_voltage_is_identity_to_flat() {
        let g = make_grid(17, 9).unwrap();
        let xs = g.xs::<f64>();
        let pair = MembranePair::with_boundary_values(
            xs.iter().map(|x| 0.1 * (x * x - 1.0)).collect(),
            xs.iter().map(|x| -1.0 - 0.1 * (x * x - 1.0)).collect(),
        )
        .unwrap();
        let p = PhysParams::new(0.2, 0.0, 0.0, 1.0 / 3.0).unwrap();
        let out = step_S(&pair, &p, &g, 1e-10).unwrap();
        let flat = flat_pair::<f64>(&g);
        assert_eq!(out.s1, flat.u());
        assert_eq!(out.s2, flat.v());
    }

    #[test]
    fn images_are_convex_concave_and_even() {
        let g = make_grid(33, 17).unwrap();
        let xs = g.xs::<f64>();
        let pair = MembranePair::with_boundary_values(
            xs.iter().map(|x| 0.12 * (x * x - 1.0)).collect(),
            xs.iter().map(|x| -1.0 - 0.08 * (x * x - 1.0) * (1.0 + x * x)).collect(),
        )
        .unwrap();
        let p = PhysParams::new(0.2, 0.1, 0.2, 1.0 / 3.0).unwrap();
        let out = step_S(&pair, &p, &g, 1e-12).unwrap();
        let h = g.hx::<f64>();
        assert!(interior_second_differences(&out.s1, h).iter().all(|&d| d >= 0.0));
        assert!(interior_second_differences(&out.s2, h).iter().all(|&d| d <= 0.0));
        assert!(evenness_defect(&out.s1) < 1e-12);
        assert!(evenness_defect(&out.s2) < 1e-12);
        assert_eq!((out.s1[0], out.s1[32], out.s2[0], out.s2[32]), (0.0, 0.0, -1.0, -1.0));
        assert!(out.s1_curvature_max <= 0.1 * out.g.iter().cloned().fold(0.0, f64::max) + 1e-12);
    }
}
