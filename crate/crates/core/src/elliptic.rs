//! Finite-difference solver for `-L ψ = f` in the reference rectangle with
//! `ψ = 0` on its boundary, and recovery of the potential `φ = ψ + z'`.
//!
//! The divergence form is discretized with a nine-point flux stencil:
//! face-averaged `a11`, `a22` for the pure second derivatives, centered
//! cross differences of the `a12` fluxes for the mixed terms, and centered
//! first differences for `b1`, `b2`. Boundary unknowns are eliminated.

use serde::Serialize;

use crate::banded::{solve_refined, BandMatrix};
use crate::error::{Error, Result};
use crate::grid::{Field2, Grid2};
use crate::scalar::Real;
use crate::transform::CoefficientField;

/// Default relative residual for the linear solve.
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct LinearSystemStats {
    pub unknowns: usize,
    pub final_residual: f64,
    pub method: &'static str,
    pub refinement_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialSolution<F> {
    pub psi: Field2<F>,
    pub phi: Field2<F>,
    pub stats: LinearSystemStats,
}

/// The nine weights of the discrete `L` at interior node `(i, j)`, as
/// `(di, dj, weight)` with offsets in `{-1, 0, 1}`.
fn stencil<F: Real>(c: &CoefficientField<F>, i: usize, j: usize) -> [(isize, isize, F); 9] {
    let grid = c.grid();
    let (hx, hz) = (grid.hx::<F>(), grid.hz::<F>());
    let half = F::lit(0.5);
    let (hx2, hz2) = (hx * hx, hz * hz);
    let hxz4 = F::lit(4.0) * hx * hz;

    let ax_e = half * (c.a11.at(i, j) + c.a11.at(i + 1, j));
    let ax_w = half * (c.a11.at(i, j) + c.a11.at(i - 1, j));
    let az_n = half * (c.a22.at(i, j) + c.a22.at(i, j + 1));
    let az_s = half * (c.a22.at(i, j) + c.a22.at(i, j - 1));
    let bx = c.b1.at(i, j) / (F::lit(2.0) * hx);
    let bz = c.b2.at(i, j) / (F::lit(2.0) * hz);
    let (m_e, m_w) = (c.a12.at(i + 1, j), c.a12.at(i - 1, j));
    let (m_n, m_s) = (c.a12.at(i, j + 1), c.a12.at(i, j - 1));

    [
        (0, 0, -(ax_e + ax_w) / hx2 - (az_n + az_s) / hz2),
        (1, 0, ax_e / hx2 + bx),
        (-1, 0, ax_w / hx2 - bx),
        (0, 1, az_n / hz2 + bz),
        (0, -1, az_s / hz2 - bz),
        (1, 1, (m_e + m_n) / hxz4),
        (1, -1, -(m_e + m_s) / hxz4),
        (-1, 1, -(m_w + m_n) / hxz4),
        (-1, -1, (m_w + m_s) / hxz4),
    ]
}

/// Discrete divergence-form operator `L w` at interior nodes; boundary
/// nodes of the result are zero.
pub fn apply_operator<F: Real>(coeffs: &CoefficientField<F>, field: &Field2<F>) -> Result<Field2<F>> {
    let grid = coeffs.grid();
    if field.grid() != grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: field.values().len(),
        });
    }
    let mut out = Field2::zeros(grid);
    for i in 1..grid.nx() - 1 {
        for j in 1..grid.nz() - 1 {
            let s = stencil(coeffs, i, j).iter().fold(F::zero(), |acc, &(di, dj, w)| {
                acc + w * field.at(offset(i, di), offset(j, dj))
            });
            out.set(i, j, s);
        }
    }
    Ok(out)
}

/// Non-divergence form `ε² w_x'x' + 2 a12 w_x'z' + a22 w_z'z' + f w_z'` with
/// centered differences, used to cross-check [`apply_operator`].
pub fn apply_nondivergence<F: Real>(
    coeffs: &CoefficientField<F>,
    field: &Field2<F>,
) -> Result<Field2<F>> {
    let grid = coeffs.grid();
    if field.grid() != grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: field.values().len(),
        });
    }
    let (hx, hz) = (grid.hx::<F>(), grid.hz::<F>());
    let two = F::lit(2.0);
    let mut out = Field2::zeros(grid);
    for i in 1..grid.nx() - 1 {
        for j in 1..grid.nz() - 1 {
            let w = |di: isize, dj: isize| field.at(offset(i, di), offset(j, dj));
            let wxx = (w(1, 0) - two * w(0, 0) + w(-1, 0)) / (hx * hx);
            let wzz = (w(0, 1) - two * w(0, 0) + w(0, -1)) / (hz * hz);
            let wxz = (w(1, 1) - w(1, -1) - w(-1, 1) + w(-1, -1)) / (F::lit(4.0) * hx * hz);
            let wz = (w(0, 1) - w(0, -1)) / (two * hz);
            out.set(
                i,
                j,
                coeffs.a11.at(i, j) * wxx
                    + two * coeffs.a12.at(i, j) * wxz
                    + coeffs.a22.at(i, j) * wzz
                    + coeffs.f.at(i, j) * wz,
            );
        }
    }
    Ok(out)
}

#[inline]
fn offset(k: usize, d: isize) -> usize {
    (k as isize + d) as usize
}

/// Solves `-L ψ = rhs` with `ψ = 0` on the boundary.
pub fn solve_dirichlet<F: Real>(
    coeffs: &CoefficientField<F>,
    rhs: &Field2<F>,
    tol: F,
) -> Result<(Field2<F>, LinearSystemStats)> {
    let grid = coeffs.grid();
    if rhs.grid() != grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: rhs.values().len(),
        });
    }
    if !(tol > F::zero()) {
        return Err(Error::InvalidParameter(format!(
            "linear tolerance must be positive, got {tol}"
        )));
    }
    let (nx, nz) = (grid.nx(), grid.nz());
    let m = nz - 2;
    let n = (nx - 2) * m;
    let unknown = |i: usize, j: usize| (i - 1) * m + (j - 1);
    let mut a = BandMatrix::zeros(n, m + 1, m + 1);
    let mut b = vec![F::zero(); n];
    for i in 1..nx - 1 {
        for j in 1..nz - 1 {
            let r = unknown(i, j);
            b[r] = rhs.at(i, j);
            for (di, dj, w) in stencil(coeffs, i, j) {
                let (ii, jj) = (offset(i, di), offset(j, dj));
                if ii == 0 || ii == nx - 1 || jj == 0 || jj == nz - 1 {
                    continue;
                }
                a.add(r, unknown(ii, jj), -w);
            }
        }
    }
    let (x, residual, steps) = solve_refined(&a, &b, tol)?;
    let mut psi = Field2::zeros(grid);
    for i in 1..nx - 1 {
        for j in 1..nz - 1 {
            psi.set(i, j, x[unknown(i, j)]);
        }
    }
    Ok((
        psi,
        LinearSystemStats {
            unknowns: n,
            final_residual: residual.as_f64(),
            method: "banded LU with partial pivoting and iterative refinement",
            refinement_steps: steps,
        },
    ))
}

/// Solves the transformed potential problem and returns `ψ` and `φ = ψ + z'`.
pub fn solve_potential<F: Real>(
    coeffs: &CoefficientField<F>,
    grid: &Grid2,
    tol: F,
) -> Result<PotentialSolution<F>> {
    if coeffs.grid() != *grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: coeffs.grid().len(),
        });
    }
    let (psi, stats) = solve_dirichlet(coeffs, &coeffs.f, tol)?;
    let phi = reference_potential(&psi);
    Ok(PotentialSolution { psi, phi, stats })
}

/// `φ = ψ + z'`, with the boundary values of `φ` set to `z'` exactly.
pub fn reference_potential<F: Real>(psi: &Field2<F>) -> Field2<F> {
    let grid = psi.grid();
    let (nx, nz) = (grid.nx(), grid.nz());
    let mut phi = Field2::zeros(grid);
    for i in 0..nx {
        for j in 0..nz {
            let zp: F = grid.z(j);
            let boundary = i == 0 || i == nx - 1 || j == 0 || j == nz - 1;
            phi.set(i, j, if boundary { zp } else { psi.at(i, j) + zp });
        }
    }
    phi
}
