//! Aspect-ratio sweeps: norms of `ψ_ε` against `ε`, distances to the
//! small-gap solution, fitted log-log rates, and the trace inequality.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed_point::{iterate, IterationOptions, SolveStatus};
use crate::grid::{
    first_derivative, flat_pair, second_derivative, trapezoid_weight, Field2, Grid2, PhysParams,
};
use crate::scalar::Real;
use crate::small_gap::{solve_small_gap, NewtonOptions};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitOptions<F> {
    pub r0: F,
    pub iteration: IterationOptions<F>,
    pub newton: NewtonOptions<F>,
    /// Rows evaluated concurrently; the report does not depend on this.
    pub workers: usize,
}

impl<F: Real> Default for LimitOptions<F> {
    fn default() -> Self {
        Self {
            r0: F::one() / F::lit(3.0),
            iteration: IterationOptions::default(),
            newton: NewtonOptions::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitRow<F> {
    pub eps: F,
    pub status: SolveStatus,
    pub iterations: usize,
    pub psi_l2: F,
    pub dz_psi_l2: F,
    pub dzz_psi_l2: F,
    pub psi_linf: F,
    pub u_w1inf_err: F,
    pub v_w1inf_err: F,
    /// `(∫ ψ² (u - v) dx' dz')^½`: the L2 distance of the potentials in
    /// physical coordinates.
    pub phi_l2_err: F,
    /// Smallest right-minus-left side of the trace inequality.
    pub trace_defect: F,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FittedSlopes {
    pub psi_l2: Option<f64>,
    pub dz_psi_l2: Option<f64>,
    pub dzz_psi_l2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitReport<F> {
    pub lambda: F,
    pub mu: F,
    pub nx: usize,
    pub nz: usize,
    /// Sorted by decreasing `ε`.
    pub rows: Vec<LimitRow<F>>,
    pub fitted_slopes: FittedSlopes,
    pub small_gap_residual: F,
}

/// Trapezoid L2 norm over the reference rectangle of nodal values laid out
/// like a [`Field2`].
fn l2_nodal<F: Real>(values: &[F], grid: &Grid2) -> F {
    let (nx, nz) = (grid.nx(), grid.nz());
    let mut sum = F::zero();
    for i in 0..nx {
        let wi = trapezoid_weight::<F>(nx, i);
        for j in 0..nz {
            let v = values[grid.idx(i, j)];
            sum += wi * trapezoid_weight::<F>(nz, j) * v * v;
        }
    }
    (sum * grid.hx::<F>() * grid.hz::<F>()).sqrt()
}

/// `∂z' ψ` nodewise: centered inside, second-order one-sided on `z' = 0, 1`.
pub fn dz_field<F: Real>(psi: &Field2<F>) -> Field2<F> {
    let grid = psi.grid();
    let h = grid.hz::<F>();
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.nx() {
        let col = psi.column(i);
        let mut d = first_derivative(col, h);
        // The helper mirrors its right end for odd symmetry; undo that here.
        let n = d.len();
        let three = F::lit(3.0);
        let four = F::lit(4.0);
        d[n - 1] = (three * col[n - 1] - four * col[n - 2] + col[n - 3]) / (F::lit(2.0) * h);
        vals.extend(d);
    }
    Field2::from_values(grid, vals).expect("same layout")
}

/// `∂²z' ψ` nodewise.
pub fn dzz_field<F: Real>(psi: &Field2<F>) -> Field2<F> {
    let grid = psi.grid();
    let h = grid.hz::<F>();
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.nx() {
        vals.extend(second_derivative(psi.column(i), h));
    }
    Field2::from_values(grid, vals).expect("same layout")
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceInequality<F> {
    /// `‖∂z' ψ(·, 0)‖_{L2(-1,1)}`.
    pub lhs_bottom: F,
    /// `‖∂z' ψ(·, 1)‖_{L2(-1,1)}`.
    pub lhs_top: F,
    /// `√2 (‖∂z' ψ‖ + ‖∂²z' ψ‖)` over the rectangle.
    pub rhs: F,
    /// `rhs - max(lhs_bottom, lhs_top)`.
    pub defect: F,
}

/// Both sides of the trace inequality for a field on the reference grid.
pub fn trace_inequality_check<F: Real>(psi: &Field2<F>, grid: &Grid2) -> Result<TraceInequality<F>> {
    if psi.grid() != *grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: psi.values().len(),
        });
    }
    let dz = dz_field(psi);
    let dzz = dzz_field(psi);
    let (nx, nz) = (grid.nx(), grid.nz());
    let hx = grid.hx::<F>();
    let line = |j: usize| {
        let s = (0..nx).fold(F::zero(), |s, i| {
            let v = dz.at(i, j);
            s + trapezoid_weight::<F>(nx, i) * v * v
        });
        (s * hx).sqrt()
    };
    let lhs_bottom = line(0);
    let lhs_top = line(nz - 1);
    let rhs = F::SQRT_2() * (l2_nodal(dz.values(), grid) + l2_nodal(dzz.values(), grid));
    Ok(TraceInequality {
        lhs_bottom,
        lhs_top,
        rhs,
        defect: rhs - lhs_bottom.max(lhs_top),
    })
}

/// Least-squares slope of `log(norm)` against `log(eps)`; `None` with fewer
/// than three points or any nonpositive value.
pub fn fit_rate(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3
        || points
            .iter()
            .any(|&(e, v)| !(e > 0.0 && v > 0.0) || !e.is_finite() || !v.is_finite())
    {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn failed_row<F: Real>(eps: F, status: SolveStatus, iterations: usize, error: Option<String>) -> LimitRow<F> {
    let nan = F::nan();
    LimitRow {
        eps,
        status,
        iterations,
        psi_l2: nan,
        dz_psi_l2: nan,
        dzz_psi_l2: nan,
        psi_linf: nan,
        u_w1inf_err: nan,
        v_w1inf_err: nan,
        phi_l2_err: nan,
        trace_defect: nan,
        error,
    }
}

fn eval_row<F: Real>(
    eps: F,
    lambda: F,
    mu: F,
    grid: &Grid2,
    opts: &LimitOptions<F>,
    u0: &[F],
    v0: &[F],
) -> LimitRow<F> {
    let params = match PhysParams::new(eps, lambda, mu, opts.r0) {
        Ok(p) => p,
        Err(e) => return failed_row(eps, SolveStatus::EllipticFailure, 0, Some(e.to_string())),
    };
    let out = match iterate(&params, grid, &opts.iteration, &flat_pair(grid)) {
        Ok(o) => o,
        Err(e) => return failed_row(eps, SolveStatus::EllipticFailure, 0, Some(e.to_string())),
    };
    let psi = match (&out.status, &out.psi) {
        (SolveStatus::Converged, Some(psi)) => psi.clone(),
        _ => return failed_row(eps, out.status, out.iterations, out.error.clone()),
    };
    let dz = dz_field(&psi);
    let dzz = dzz_field(&psi);
    let gap = out.pair.gap();
    let weighted: Vec<F> = psi
        .values()
        .iter()
        .enumerate()
        .map(|(k, &p)| p * gap[k / grid.nz()].sqrt())
        .collect();
    let du: Vec<F> = out.pair.u().iter().zip(u0).map(|(&a, &b)| a - b).collect();
    let dv: Vec<F> = out.pair.v().iter().zip(v0).map(|(&a, &b)| a - b).collect();
    let w1 = |d: &[F]| crate::grid::profile_norms(d, grid).map(|n| n.w1inf).unwrap_or(F::nan());
    let trace = trace_inequality_check(&psi, grid).map(|t| t.defect).unwrap_or(F::nan());
    LimitRow {
        eps,
        status: out.status,
        iterations: out.iterations,
        psi_l2: l2_nodal(psi.values(), grid),
        dz_psi_l2: l2_nodal(dz.values(), grid),
        dzz_psi_l2: l2_nodal(dzz.values(), grid),
        psi_linf: psi.max_abs(),
        u_w1inf_err: w1(&du),
        v_w1inf_err: w1(&dv),
        phi_l2_err: l2_nodal(&weighted, grid),
        trace_defect: trace,
        error: None,
    }
}

/// Solves the full problem for every `ε` in `eps_list` and compares with
/// the small-gap solution on the same x-lattice. Rows that fail are kept
/// with their status and NaN norms.
pub fn run_eps_sweep<F: Real>(
    lambda: F,
    mu: F,
    eps_list: &[F],
    grid: &Grid2,
    opts: &LimitOptions<F>,
) -> Result<LimitReport<F>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("eps_list is empty".into()));
    }
    let mut eps: Vec<F> = eps_list.to_vec();
    if eps.iter().any(|e| e.is_nan()) {
        return Err(Error::InvalidParameter("eps_list contains NaN".into()));
    }
    eps.sort_by(|a, b| b.partial_cmp(a).expect("no NaN"));
    let limit = solve_small_gap(lambda, mu, grid, &opts.newton)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let rows: Vec<LimitRow<F>> = pool.install(|| {
        eps.par_iter()
            .map(|&e| eval_row(e, lambda, mu, grid, opts, &limit.u0, &limit.v0))
            .collect()
    });
    let column = |get: fn(&LimitRow<F>) -> F| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.status == SolveStatus::Converged)
            .map(|r| (r.eps.as_f64(), get(r).as_f64()))
            .collect();
        fit_rate(&pts)
    };
    let fitted_slopes = FittedSlopes {
        psi_l2: column(|r| r.psi_l2),
        dz_psi_l2: column(|r| r.dz_psi_l2),
        dzz_psi_l2: column(|r| r.dzz_psi_l2),
    };
    Ok(LimitReport {
        lambda,
        mu,
        nx: grid.nx(),
        nz: grid.nz(),
        rows,
        fitted_slopes,
        small_gap_residual: limit.newton_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slopes_of_power_laws() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        let pts = |p: i32, c: f64| eps.iter().map(|&e| (e, c * f64::powi(e, p))).collect::<Vec<_>>();
        assert_abs_diff_eq!(fit_rate(&pts(1, 1.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit_rate(&pts(2, 3.0)).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit_rate(&pts(0, 5.0)).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        assert_eq!(fit_rate(&[(0.1, 1.0), (0.2, 2.0)]), None);
        assert_eq!(fit_rate(&[(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)]), None);
        assert_eq!(fit_rate(&[(0.1, 1.0), (0.1, 2.0), (0.1, 1.0)]), None);
    }

    #[test]
    fn trace_inequality_zero_and_parabola() {
        let g = make_grid(65, 65).unwrap();
        let zero = Field2::<f64>::zeros(g);
        let t = trace_inequality_check(&zero, &g).unwrap();
        assert_eq!((t.lhs_bottom, t.rhs, t.defect), (0.0, 0.0, 0.0));

        let psi = Field2::from_fn(g, |_, z: f64| z * (1.0 - z));
        let t = trace_inequality_check(&psi, &g).unwrap();
        let s2 = 2f64.sqrt();
        assert_abs_diff_eq!(t.lhs_bottom, s2, epsilon = 1e-12);
        assert_abs_diff_eq!(t.lhs_top, s2, epsilon = 1e-12);
        assert_abs_diff_eq!(t.rhs, s2 * ((2.0f64 / 3.0).sqrt() + 2.0 * s2), epsilon = 1e-3);
        assert!(t.defect > 0.0);
    }

    #[test]
    fn zero_voltage_rows_vanish() {
        let g = make_grid(17, 9).unwrap();
        let rep = run_eps_sweep(0.0, 0.0, &[0.1, 0.2], &g, &LimitOptions::default()).unwrap();
        assert_eq!(rep.rows[0].eps, 0.2);
        for r in &rep.rows {
            assert_eq!(r.status, SolveStatus::Converged);
            assert_eq!((r.psi_l2, r.dz_psi_l2, r.dzz_psi_l2), (0.0, 0.0, 0.0));
            assert_eq!((r.u_w1inf_err, r.v_w1inf_err, r.phi_l2_err), (0.0, 0.0, 0.0));
        }
        assert!(rep.fitted_slopes.psi_l2.is_none());
    }

    #[test]
    fn rows_independent_of_workers() {
        let g = make_grid(17, 9).unwrap();
        let eps = [0.05, 0.2, 0.1];
        let one = run_eps_sweep(0.01f64, 0.02, &eps, &g, &LimitOptions::default()).unwrap();
        let opts = LimitOptions {
            workers: 3,
            ..Default::default()
        };
        let three = run_eps_sweep(0.01, 0.02, &eps, &g, &opts).unwrap();
        for (a, b) in one.rows.iter().zip(&three.rows) {
            assert_eq!(a.eps, b.eps);
            assert_eq!(a.psi_l2.to_bits(), b.psi_l2.to_bits());
            assert_eq!(a.u_w1inf_err.to_bits(), b.u_w1inf_err.to_bits());
        }
    }
}
