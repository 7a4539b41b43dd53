//! Normal derivatives of the potential on `z' = 0, 1` and the membrane
//! forcing terms built from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{first_derivative, Field2, Grid2, MembranePair};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Top,
}

/// `∂z' φ` on the bottom (`z' = 0`) and top (`z' = 1`) lines.
#[derive(Debug, Clone, Serialize)]
pub struct TracePair<F> {
    pub d_bottom: Vec<F>,
    pub d_top: Vec<F>,
}

impl<F: Real> TracePair<F> {
    pub fn from_field(phi: &Field2<F>, grid: &Grid2) -> Result<Self> {
        Ok(Self {
            d_bottom: trace_dz(phi, Side::Bottom, grid)?,
            d_top: trace_dz(phi, Side::Top, grid)?,
        })
    }

    pub fn min(&self) -> F {
        self.d_bottom
            .iter()
            .chain(&self.d_top)
            .fold(F::infinity(), |m, &v| m.min(v))
    }

    pub fn max(&self) -> F {
        self.d_bottom
            .iter()
            .chain(&self.d_top)
            .fold(F::neg_infinity(), |m, &v| m.max(v))
    }
}

/// One-sided three-point derivative in `z'` on the chosen boundary line.
pub fn trace_dz<F: Real>(phi: &Field2<F>, side: Side, grid: &Grid2) -> Result<Vec<F>> {
    if phi.grid() != *grid {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: phi.values().len(),
        });
    }
    let nz = grid.nz();
    if nz < 3 {
        return Err(Error::InvalidGrid(format!("trace needs nz >= 3, got {nz}")));
    }
    let two_h = F::lit(2.0) * grid.hz::<F>();
    let (three, four) = (F::lit(3.0), F::lit(4.0));
    Ok((0..grid.nx())
        .map(|i| {
            let c = phi.column(i);
            match side {
                Side::Bottom => (-three * c[0] + four * c[1] - c[2]) / two_h,
                Side::Top => (three * c[nz - 1] - four * c[nz - 2] + c[nz - 3]) / two_h,
            }
        })
        .collect())
}

fn forcing<F: Real>(pair: &MembranePair<F>, slope_of: &[F], trace: &[F], eps: F) -> Result<Vec<F>> {
    if trace.len() != pair.len() {
        return Err(Error::DimensionMismatch {
            expected: pair.len(),
            found: trace.len(),
        });
    }
    let h = F::lit(2.0) / F::from_usize_exact(pair.len() - 1);
    let slope = first_derivative(slope_of, h);
    let eps2 = eps * eps;
    pair.gap()
        .iter()
        .zip(slope.iter().zip(trace))
        .enumerate()
        .map(|(k, (&g, (&s, &t)))| {
            if !(g > F::zero()) {
                return Err(Error::NonpositiveGap {
                    index: k,
                    gap: g.as_f64(),
                });
            }
            Ok((F::one() + eps2 * s * s) / (g * g) * t * t)
        })
        .collect()
}

/// Forcing of the upper membrane: `(1 + ε² u'²) / (u - v)² · (∂z' φ(·, 1))²`.
pub fn assemble_g<F: Real>(pair: &MembranePair<F>, d_top: &[F], eps: F) -> Result<Vec<F>> {
    forcing(pair, pair.u(), d_top, eps)
}

/// Forcing of the lower membrane: `(1 + ε² v'²) / (u - v)² · (∂z' φ(·, 0))²`.
pub fn assemble_h<F: Real>(pair: &MembranePair<F>, d_bottom: &[F], eps: F) -> Result<Vec<F>> {
    forcing(pair, pair.v(), d_bottom, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{flat_pair, make_grid};
    use crate::membrane::solve_poisson_1d;
    use proptest::prelude::*;

    #[test]
    fn traces_exact_on_low_order_polynomials() {
        let g = make_grid(7, 9).unwrap();
        let lin = Field2::from_fn(g, |_, z: f64| z);
        let t = TracePair::from_field(&lin, &g).unwrap();
        assert!(t.d_bottom.iter().chain(&t.d_top).all(|&d| (d - 1.0).abs() < 1e-14));
        let quad = Field2::from_fn(g, |_, z: f64| z * z);
        let t = TracePair::from_field(&quad, &g).unwrap();
        assert!(t.d_bottom.iter().all(|&d| d.abs() < 1e-13));
        assert!(t.d_top.iter().all(|&d| (d - 2.0).abs() < 1e-13));
    }

    #[test]
    fn trace_rejects_mismatch() {
        let g = make_grid(7, 9).unwrap();
        let f = Field2::<f64>::zeros(make_grid(7, 5).unwrap());
        assert!(trace_dz(&f, Side::Top, &g).is_err());
    }

    #[test]
    fn flat_forcing_is_one() {
        let g = make_grid(9, 5).unwrap();
        let p = flat_pair::<f64>(&g);
        let ones = vec![1.0; 9];
        assert_eq!(assemble_g(&p, &ones, 0.1).unwrap(), ones);
        assert_eq!(assemble_h(&p, &ones, 0.1).unwrap(), ones);
    }

    #[test]
    fn halved_gap_gives_four() {
        let n = 9;
        let p = MembranePair::new(vec![0.0; n], {
            let mut v = vec![-0.5; n];
            v[0] = -1.0;
            v[n - 1] = -1.0;
            v
        })
        .unwrap();
        let ones = vec![1.0; n];
        let gv = assemble_g(&p, &ones, 0.0).unwrap();
        assert!(gv[1..n - 1].iter().all(|&x| x == 4.0));
        assert_eq!(gv[0], 1.0);
    }

    #[test]
    fn forcing_rejects_wrong_length() {
        let p = flat_pair::<f64>(&make_grid(9, 5).unwrap());
        assert!(assemble_g(&p, &[1.0; 7], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn forcing_nonnegative(
            a in 0.0..0.3f64, b in 0.0..0.3f64, eps in 0.0..0.9f64,
            t in prop::collection::vec(-2.0..2.0f64, 17)
        ) {
            let u = solve_poisson_1d(&vec![a; 17], 0.0, 0.0).unwrap();
            let v = solve_poisson_1d(&vec![-b; 17], -1.0, -1.0).unwrap();
            let p = MembranePair::new(u, v).unwrap();
            prop_assert!(assemble_g(&p, &t, eps).unwrap().iter().all(|&x| x >= 0.0));
            prop_assert!(assemble_h(&p, &t, eps).unwrap().iter().all(|&x| x >= 0.0));
        }
    }
}
