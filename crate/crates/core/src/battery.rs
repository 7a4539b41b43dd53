//! Seeded random admissible membrane pairs and calibration of the trace
//! bound constant `c₃` over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elliptic::solve_potential;
use crate::error::{Error, Result};
use crate::grid::{x_node, Field2, Grid2, MembranePair};
use crate::membrane::solve_poisson_1d;
use crate::scalar::Real;
use crate::traces::TracePair;
use crate::transform::assemble_coefficients;

/// Even curvature profile with values in `[0, r₀]`:
/// `r₀ (a + (1 - a) b (1 + cos kπx) / 2)`.
fn curvature<F: Real>(rng: &mut ChaCha8Rng, r0: F, n: usize) -> Vec<F> {
    let a = F::lit(rng.gen_range(0.0..1.0));
    let b = F::lit(rng.gen_range(0.0..1.0));
    let k = F::from_usize_exact(rng.gen_range(1..=4));
    let half = F::lit(0.5);
    (0..n)
        .map(|i| {
            let x: F = x_node(n, i);
            let bump = half * (F::one() + (k * F::PI() * x).cos());
            r0 * (a + (F::one() - a) * b * bump)
        })
        .collect()
}

/// `count` pairs in `C₁ × C₂` on an `n`-node lattice, reproducible from `seed`.
pub fn admissible_battery<F: Real>(count: usize, r0: F, n: usize, seed: u64) -> Result<Vec<MembranePair<F>>> {
    if !(r0 > F::zero() && r0 < F::lit(2.0) / F::lit(3.0)) {
        return Err(Error::InvalidParameter(format!("r0 must lie in (0, 2/3), got {r0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let qu = curvature(&mut rng, r0, n);
            let qv: Vec<F> = curvature(&mut rng, r0, n).into_iter().map(|q| -q).collect();
            let u = solve_poisson_1d(&qu, F::zero(), F::zero())?;
            let v = solve_poisson_1d(&qv, -F::one(), -F::one())?;
            MembranePair::with_boundary_values(u, v)
        })
        .collect()
}

/// Potential and traces of one pair, without any membrane update.
pub fn potential_and_traces<F: Real>(
    pair: &MembranePair<F>,
    eps: F,
    grid: &Grid2,
    tol: F,
) -> Result<(Field2<F>, TracePair<F>)> {
    let coeffs = assemble_coefficients(pair, eps, grid)?;
    let sol = solve_potential(&coeffs, grid, tol)?;
    let traces = TracePair::from_field(&sol.phi, grid)?;
    Ok((sol.phi, traces))
}

#[derive(Debug, Clone, Serialize)]
pub struct C3Row<F> {
    pub eps: F,
    /// `max over the battery of (max trace - 1) / ε²`.
    pub ratio: F,
    pub min_trace: F,
    pub max_trace: F,
}

#[derive(Debug, Clone, Serialize)]
pub struct C3Calibration<F> {
    /// Largest ratio over all `ε`, clipped at 0.
    pub c3: F,
    pub rows: Vec<C3Row<F>>,
}

/// Measures `(max ∂z' φ - 1) / ε²` over the battery for each `ε`.
pub fn calibrate_c3<F: Real>(
    battery: &[MembranePair<F>],
    eps_list: &[F],
    grid: &Grid2,
    tol: F,
) -> Result<C3Calibration<F>> {
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut max_trace = F::neg_infinity();
        let mut min_trace = F::infinity();
        for pair in battery {
            let (_, t) = potential_and_traces(pair, eps, grid, tol)?;
            max_trace = max_trace.max(t.max());
            min_trace = min_trace.min(t.min());
        }
        rows.push(C3Row {
            eps,
            ratio: (max_trace - F::one()) / (eps * eps),
            min_trace,
            max_trace,
        });
    }
    let c3 = rows.iter().fold(F::zero(), |m, r| m.max(r.ratio));
    Ok(C3Calibration { c3, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::admissibility_check;
    use crate::grid::make_grid;

    #[test]
    fn battery_is_admissible_and_reproducible() {
        let g = make_grid(33, 5).unwrap();
        let a = admissible_battery::<f64>(10, 1.0 / 3.0, 33, 11).unwrap();
        let b = admissible_battery::<f64>(10, 1.0 / 3.0, 33, 11).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.u(), q.u());
            let rep = admissibility_check(p, 1.0 / 3.0, &g);
            assert!(rep.in_c1 && rep.in_c2, "{rep:?}");
        }
        let c = admissible_battery::<f64>(10, 1.0 / 3.0, 33, 12).unwrap();
        assert_ne!(a[0].u(), c[0].u());
    }

    #[test]
    fn flat_pair_traces_are_one() {
        let g = make_grid(9, 9).unwrap();
        let pair = MembranePair::<f64>::flat(9);
        let cal = calibrate_c3(&[pair], &[0.1], &g, 1e-12).unwrap();
        assert!((cal.rows[0].max_trace - 1.0).abs() < 1e-12);
        assert!(cal.c3 < 1e-8);
    }
}
