//! Coordinate map onto the reference rectangle and the coefficients of the
//! transformed operator.
//!
//! With `s = z'(u' - v') + v'` and `g = u - v` the transformed operator in
//! divergence form reads
//!
//! ```text
//! L w = ∂x'(a11 w_x' + a12 w_z') + ∂z'(a12 w_x' + a22 w_z') + b1 w_x' + b2 w_z'
//! a11 = ε²,   a12 = -ε² s / g,   a22 = (1 + ε² s²) / g²
//! b1  = ε² (u' - v') / g,        b2  = -ε² (u' - v') s / g²
//! ```
//!
//! and the source of `-L ψ = f` is
//! `f = ε² (2 (u' - v') s / g² - (z'(u'' - v'') + v'') / g)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{first_derivative, second_derivative, Field2, Grid2, MembranePair};
use crate::scalar::Real;

/// Maps a physical point `(x, z)` with `v(x) <= z <= u(x)` to `(x', z')`.
pub fn map_forward<F: Real>(pair: &MembranePair<F>, x: F, z: F) -> Result<(F, F)> {
    let outside = || Error::OutsideDomain {
        x: x.as_f64(),
        z: z.as_f64(),
    };
    let (u, v) = pair.sample(x).ok_or_else(outside)?;
    if !(z >= v && z <= u) {
        return Err(outside());
    }
    Ok((x, (z - v) / (u - v)))
}

/// Maps a reference point back: `(x', z'(u - v) + v)`, evaluated as
/// `z' u + (1 - z') v` so both boundary lines are hit exactly.
pub fn map_inverse<F: Real>(pair: &MembranePair<F>, xp: F, zp: F) -> Result<(F, F)> {
    let outside = || Error::OutsideDomain {
        x: xp.as_f64(),
        z: zp.as_f64(),
    };
    if !(zp >= F::zero() && zp <= F::one()) {
        return Err(outside());
    }
    let (u, v) = pair.sample(xp).ok_or_else(outside)?;
    Ok((xp, zp * u + (F::one() - zp) * v))
}

/// Membrane values and finite-difference derivatives on the x-lattice.
#[derive(Debug, Clone)]
pub struct MembraneDerivatives<F> {
    pub gap: Vec<F>,
    pub du: Vec<F>,
    pub dv: Vec<F>,
    pub ddu: Vec<F>,
    pub ddv: Vec<F>,
}

impl<F: Real> MembraneDerivatives<F> {
    pub fn new(pair: &MembranePair<F>, h: F) -> Self {
        Self {
            gap: pair.gap(),
            du: first_derivative(pair.u(), h),
            dv: first_derivative(pair.v(), h),
            ddu: second_derivative(pair.u(), h),
            ddv: second_derivative(pair.v(), h),
        }
    }
}

/// Nodal coefficients of the transformed operator on the reference grid.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientField<F> {
    pub eps: F,
    pub a11: Field2<F>,
    pub a12: Field2<F>,
    pub a22: Field2<F>,
    pub b1: Field2<F>,
    pub b2: Field2<F>,
    pub f: Field2<F>,
}

impl<F: Real> CoefficientField<F> {
    pub fn grid(&self) -> Grid2 {
        self.a11.grid()
    }

    /// Coefficients of the untransformed operator `ε² ∂x'² + ∂z'²` with a
    /// zero source, i.e. those of the flat pair.
    pub fn flat(grid: Grid2, eps: F) -> Self {
        let eps2 = eps * eps;
        Self {
            eps,
            a11: Field2::from_fn(grid, |_, _| eps2),
            a12: Field2::zeros(grid),
            a22: Field2::from_fn(grid, |_, _| F::one()),
            b1: Field2::zeros(grid),
            b2: Field2::zeros(grid),
            f: Field2::zeros(grid),
        }
    }
}

/// Assembles the coefficient fields for the pair `(u, v)` and aspect ratio `eps`.
pub fn assemble_coefficients<F: Real>(
    pair: &MembranePair<F>,
    eps: F,
    grid: &Grid2,
) -> Result<CoefficientField<F>> {
    pair.check_grid(grid)?;
    if let Some(k) = pair.gap().iter().position(|&g| !(g > F::zero())) {
        return Err(Error::NonpositiveGap {
            index: k,
            gap: pair.gap()[k].as_f64(),
        });
    }
    let md = MembraneDerivatives::new(pair, grid.hx());
    let eps2 = eps * eps;
    let two = F::lit(2.0);
    let n = grid.len();
    let mut a11 = Vec::with_capacity(n);
    let mut a12 = Vec::with_capacity(n);
    let mut a22 = Vec::with_capacity(n);
    let mut b1 = Vec::with_capacity(n);
    let mut b2 = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 0..grid.nx() {
        let g = md.gap[i];
        let dd = md.du[i] - md.dv[i];
        let ddd = md.ddu[i] - md.ddv[i];
        for j in 0..grid.nz() {
            let zp: F = grid.z(j);
            let s = zp * dd + md.dv[i];
            let curv = zp * ddd + md.ddv[i];
            a11.push(eps2);
            a12.push(-eps2 * s / g);
            a22.push((F::one() + eps2 * s * s) / (g * g));
            b1.push(eps2 * dd / g);
            b2.push(-eps2 * dd * s / (g * g));
            f.push(eps2 * (two * dd * s / (g * g) - curv / g));
        }
    }
    let mk = |v| Field2::from_values(*grid, v);
    Ok(CoefficientField {
        eps,
        a11: mk(a11)?,
        a12: mk(a12)?,
        a22: mk(a22)?,
        b1: mk(b1)?,
        b2: mk(b2)?,
        f: mk(f)?,
    })
}

/// Extremes of the ellipticity quantities of the principal part `A`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EllipticityReport<F> {
    pub t_min: F,
    pub t_max: F,
    pub d_min: F,
    pub e_minus_min: F,
    /// `e₋ >= d / t` held at every node.
    pub bound_check: bool,
    /// Largest relative deviation of `det A` from `ε² / (u - v)²`, filled in
    /// when the report is built from a pair.
    pub det_identity_defect: Option<F>,
}

/// Smaller eigenvalue of a symmetric 2x2 matrix with trace `t` and
/// determinant `d`, computed without cancellation.
pub fn smaller_eigenvalue<F: Real>(t: F, d: F) -> F {
    let disc = (t * t - F::lit(4.0) * d).max(F::zero()).sqrt();
    F::lit(2.0) * d / (t + disc)
}

pub fn ellipticity_report<F: Real>(coeffs: &CoefficientField<F>) -> EllipticityReport<F> {
    let mut rep = EllipticityReport {
        t_min: F::infinity(),
        t_max: F::neg_infinity(),
        d_min: F::infinity(),
        e_minus_min: F::infinity(),
        bound_check: true,
        det_identity_defect: None,
    };
    let slack = F::one() - F::lit(64.0) * F::epsilon();
    for k in 0..coeffs.a11.values().len() {
        let a = coeffs.a11.values()[k];
        let b = coeffs.a12.values()[k];
        let c = coeffs.a22.values()[k];
        let t = a + c;
        let d = a * c - b * b;
        let em = smaller_eigenvalue(t, d);
        rep.t_min = rep.t_min.min(t);
        rep.t_max = rep.t_max.max(t);
        rep.d_min = rep.d_min.min(d);
        rep.e_minus_min = rep.e_minus_min.min(em);
        if !(em >= slack * d / t && d / t > F::zero()) {
            rep.bound_check = false;
        }
    }
    rep
}

/// Ellipticity report plus the nodewise check `det A = ε² / (u - v)²`.
pub fn ellipticity_report_for_pair<F: Real>(
    coeffs: &CoefficientField<F>,
    pair: &MembranePair<F>,
) -> EllipticityReport<F> {
    let mut rep = ellipticity_report(coeffs);
    let grid = coeffs.grid();
    let eps2 = coeffs.eps * coeffs.eps;
    let gap = pair.gap();
    let mut defect = F::zero();
    for i in 0..grid.nx() {
        let expect = eps2 / (gap[i] * gap[i]);
        for j in 0..grid.nz() {
            let d = coeffs.a11.at(i, j) * coeffs.a22.at(i, j) - coeffs.a12.at(i, j).powi(2);
            defect = defect.max(((d - expect) / expect).abs());
        }
    }
    rep.det_identity_defect = Some(defect);
    rep
}
