//! Small-aspect-ratio limit: the coupled membrane ODEs
//! `u₀'' = λ/(u₀-v₀)²`, `v₀'' = -μ/(u₀-v₀)²`, their affine potential, and the
//! closed-form single-membrane solution `w'' = Λ/(1+w)²` on `(-1/2, 1/2)`.
//!
//! With `λ = μ` the pair is mirror symmetric, `v₀ = -1 - u₀`, and
//! `w(x) = 2 u₀(2x)` solves the single-membrane problem with `Λ = 8λ`.

use serde::Serialize;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{x_node, Field2, Grid2, MembranePair};
use crate::scalar::{max_abs_diff, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions<F> {
    /// Sup norm of the `h²`-scaled residual at which Newton stops.
    pub tol: F,
    pub max_iter: usize,
    /// Smallest gap a Newton iterate may have before the step is rejected.
    pub gap_floor: F,
}

impl<F: Real> Default for NewtonOptions<F> {
    fn default() -> Self {
        Self {
            tol: F::lit(1e-12),
            max_iter: 60,
            gap_floor: F::lit(1e-8),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallGapSolution<F> {
    pub u0: Vec<F>,
    pub v0: Vec<F>,
    pub lambda: F,
    pub mu: F,
    pub newton_residual: F,
    pub iterations: usize,
}

impl<F: Real> SmallGapSolution<F> {
    pub fn pair(&self) -> Result<MembranePair<F>> {
        MembranePair::new(self.u0.clone(), self.v0.clone())
    }
}

/// Row-scaled residual `h² R`, interleaved as `(u_i, v_i)` over interior nodes.
fn residual<F: Real>(u: &[F], d: &[F], lambda: F, mu: F, h2: F) -> Vec<F> {
    let n = u.len();
    let two = F::lit(2.0);
    let mut r = Vec::with_capacity(2 * (n - 2));
    for i in 1..n - 1 {
        let gap = u[i] - d[i] + F::one();
        let force = h2 / (gap * gap);
        r.push(u[i - 1] - two * u[i] + u[i + 1] - lambda * force);
        r.push(d[i - 1] - two * d[i] + d[i + 1] + mu * force);
    }
    r
}

fn sup<F: Real>(r: &[F]) -> F {
    r.iter().fold(F::zero(), |m, &x| if x.is_nan() { F::nan() } else { m.max(x.abs()) })
}

/// Newton solve of the small-gap system starting from the flat pair.
pub fn solve_small_gap<F: Real>(
    lambda: F,
    mu: F,
    grid: &Grid2,
    opts: &NewtonOptions<F>,
) -> Result<SmallGapSolution<F>> {
    solve_small_gap_from(lambda, mu, grid, opts, &MembranePair::flat(grid.nx()))
}

/// Newton solve of the small-gap system from `init`.
///
/// The lower membrane is carried as `v + 1` so that the residual of
/// `v ≈ -1` does not lose digits. A backtracking line search keeps the gap
/// above `gap_floor` and the residual decreasing; failure to converge is the
/// no-solution (pull-in) regime.
pub fn solve_small_gap_from<F: Real>(
    lambda: F,
    mu: F,
    grid: &Grid2,
    opts: &NewtonOptions<F>,
    init: &MembranePair<F>,
) -> Result<SmallGapSolution<F>> {
    if !(lambda >= F::zero() && mu >= F::zero()) || !lambda.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda and mu must be finite and >= 0, got {lambda}, {mu}"
        )));
    }
    if !(opts.tol > F::zero()) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter("Newton tolerance and max_iter must be positive".into()));
    }
    init.check_grid(grid)?;
    let n = grid.nx();
    let h = grid.hx::<F>();
    let h2 = h * h;
    let two = F::lit(2.0);
    let mut u = init.u().to_vec();
    let mut d: Vec<F> = init.v().iter().map(|&v| v + F::one()).collect();
    let mut r = residual(&u, &d, lambda, mu, h2);
    let mut rnorm = sup(&r);
    let m = 2 * (n - 2);

    for it in 0..=opts.max_iter {
        if rnorm <= opts.tol {
            let v0 = d.iter().map(|&x| x - F::one()).collect();
            return Ok(SmallGapSolution {
                u0: u,
                v0,
                lambda,
                mu,
                newton_residual: rnorm,
                iterations: it,
            });
        }
        if it == opts.max_iter || !rnorm.is_finite() {
            break;
        }
        let mut jac = BandMatrix::zeros(m, 2, 2);
        for i in 1..n - 1 {
            let k = 2 * (i - 1);
            let gap = u[i] - d[i] + F::one();
            let dforce = -two * h2 / (gap * gap * gap);
            // Row k: u equation; row k + 1: v equation.
            jac.add(k, k, -two - lambda * dforce);
            jac.add(k, k + 1, lambda * dforce);
            jac.add(k + 1, k, mu * dforce);
            jac.add(k + 1, k + 1, -two - mu * dforce);
            if i > 1 {
                jac.add(k, k - 2, F::one());
                jac.add(k + 1, k - 1, F::one());
            }
            if i < n - 2 {
                jac.add(k, k + 2, F::one());
                jac.add(k + 1, k + 3, F::one());
            }
        }
        // Near the fold the Jacobian is nearly singular; an inexact step is
        // still a descent direction, so no refinement tolerance is imposed.
        let mut step: Vec<F> = r.iter().map(|&x| -x).collect();
        match jac.factor() {
            Ok(lu) => lu.solve_in_place(&mut step),
            Err(_) => break,
        }
        let mut alpha = F::one();
        let mut accepted = false;
        for _ in 0..40 {
            let tu: Vec<F> = (0..n)
                .map(|i| if i == 0 || i == n - 1 { u[i] } else { u[i] + alpha * step[2 * (i - 1)] })
                .collect();
            let td: Vec<F> = (0..n)
                .map(|i| if i == 0 || i == n - 1 { d[i] } else { d[i] + alpha * step[2 * (i - 1) + 1] })
                .collect();
            let gap_ok = tu.iter().zip(&td).all(|(&a, &b)| a - b + F::one() >= opts.gap_floor);
            if gap_ok {
                let tr = residual(&tu, &td, lambda, mu, h2);
                let tn = sup(&tr);
                if tn < rnorm || (alpha == F::one() && tn <= opts.tol) {
                    u = tu;
                    d = td;
                    r = tr;
                    rnorm = tn;
                    accepted = true;
                    break;
                }
            }
            alpha *= F::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoSolutionFound(format!(
        "Newton did not converge for lambda = {lambda}, mu = {mu} (residual {rnorm:e})"
    )))
}

/// Fold of the small-gap system along `λ = μ` by natural-parameter
/// continuation with step halving, stopping when the step drops below `dl_min`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalFold<F> {
    pub lambda_star: F,
    pub last_solution: SmallGapSolution<F>,
    pub continuation_steps: usize,
}

pub fn diagonal_fold<F: Real>(
    grid: &Grid2,
    opts: &NewtonOptions<F>,
    dl0: F,
    dl_min: F,
) -> Result<DiagonalFold<F>> {
    if !(dl0 > F::zero() && dl_min > F::zero()) {
        return Err(Error::InvalidParameter("continuation steps must be positive".into()));
    }
    let mut sol = solve_small_gap(F::zero(), F::zero(), grid, opts)?;
    let mut dl = dl0;
    let mut steps = 0usize;
    while dl >= dl_min {
        let next = sol.lambda + dl;
        let init = sol.pair()?;
        match solve_small_gap_from(next, next, grid, opts, &init) {
            Ok(s) => {
                sol = s;
                steps += 1;
            }
            Err(Error::NoSolutionFound(_)) => dl *= F::lit(0.5),
            Err(e) => return Err(e),
        }
    }
    Ok(DiagonalFold {
        lambda_star: sol.lambda,
        last_solution: sol,
        continuation_steps: steps,
    })
}

/// Limit potential on the reference rectangle: the affine profile `z'`.
pub fn phi0<F: Real>(pair: &MembranePair<F>, grid: &Grid2) -> Result<Field2<F>> {
    pair.check_grid(grid)?;
    if !(pair.min_gap() > F::zero()) {
        return Err(Error::InvalidPair("gap must be positive".into()));
    }
    Ok(Field2::from_fn(*grid, |_, z| z))
}

/// Limit potential in physical coordinates, `(z - v₀) / (u₀ - v₀)`, using
/// piecewise-linear membrane profiles.
pub fn phi0_physical<F: Real>(pair: &MembranePair<F>, x: F, z: F) -> Result<F> {
    let (u, v) = pair.sample(x).ok_or(Error::OutsideDomain {
        x: x.as_f64(),
        z: z.as_f64(),
    })?;
    if z < v || z > u {
        return Err(Error::OutsideDomain {
            x: x.as_f64(),
            z: z.as_f64(),
        });
    }
    Ok((z - v) / (u - v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Smaller `E`: the small-deflection solution.
    Lower,
    /// Larger `E`: the solution close to touchdown.
    Upper,
    /// The single root at the fold.
    Tangent,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::Tangent => "tangent",
        }
    }
}

/// One root of the `E`-equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleBranch {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub branch: Branch,
}

impl OracleBranch {
    /// `w(0) = Λ/E - 1`.
    pub fn center_value(&self) -> f64 {
        self.lambda / self.e - 1.0
    }
}

/// `atanh(√(1 - t))` for `t ∈ (0, 1]` without cancellation near `t = 0`.
fn atanh_sqrt_one_minus(t: f64) -> f64 {
    let s = (1.0 - t).sqrt();
    ((1.0 + s) / t.sqrt()).ln()
}

/// Residual of the `E`-equation
/// `√((1 - Λ/E)/(2E)) + Λ/(E√(2E)) atanh√(1 - Λ/E) - 1/2`.
pub fn e_equation_residual(lambda: f64, e: f64) -> f64 {
    let t = lambda / e;
    let r2e = (2.0 * e).sqrt();
    ((1.0 - t) / (2.0 * e)).sqrt() + t / r2e * atanh_sqrt_one_minus(t) - 0.5
}

/// With `t = Λ/E`, the `E`-equation reads `φ(t) = √(Λ/2)` where
/// `φ(t) = (√(1-t) + t atanh√(1-t)) √t`.
fn phi_t(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    ((1.0 - t).sqrt() + t * atanh_sqrt_one_minus(t)) * t.sqrt()
}

/// Maximizer of `φ` on `(0, 1)` by golden-section search.
fn phi_t_argmax() -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-6, 1.0 - 1e-12);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (phi_t(c), phi_t(d));
    for _ in 0..200 {
        if b - a < 1e-15 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = phi_t(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = phi_t(d);
        }
    }
    (a + b) / 2.0
}

/// Bisection to machine resolution on a bracket where `f` changes sign.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// All roots `E > Λ` of the `E`-equation; empty beyond the fold `Λ*`.
pub fn oracle_e(lambda: f64) -> Vec<OracleBranch> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Vec::new();
    }
    let target = (lambda / 2.0).sqrt();
    let tm = phi_t_argmax();
    let peak = phi_t(tm);
    if peak < target {
        return Vec::new();
    }
    if peak - target <= 4.0 * f64::EPSILON * target {
        return vec![OracleBranch {
            lambda,
            e: lambda / tm,
            branch: Branch::Tangent,
        }];
    }
    let f = |t: f64| phi_t(t) - target;
    let t_small = bisect(f, 0.0, tm);
    let t_large = bisect(f, tm, 1.0);
    vec![
        OracleBranch {
            lambda,
            e: lambda / t_large,
            branch: Branch::Lower,
        },
        OracleBranch {
            lambda,
            e: lambda / t_small,
            branch: Branch::Upper,
        },
    ]
}

/// Left-hand side of the implicit profile formula at `y = w + 1`, with
/// `t = Λ/E` and `d = y - t` supplied separately to avoid cancellation.
fn implicit_lhs(y: f64, d: f64, t: f64, e: f64) -> f64 {
    let r2e = (2.0 * e).sqrt();
    let d = d.max(0.0);
    let s = (d / y).sqrt();
    let at = 0.5 * ((1.0 + s) / (1.0 - s)).ln();
    (y * d).sqrt() / r2e + t / r2e * at
}

/// The same left-hand side in terms of `σ = √(1 - t/y)`, where it has a
/// finite slope at the center: `(y σ + t atanh σ) / √(2E)` with
/// `y = t / (1 - σ²)`.
fn implicit_lhs_sigma(sigma: f64, t: f64, e: f64) -> (f64, f64) {
    let y = t / ((1.0 - sigma) * (1.0 + sigma));
    let at = 0.5 * ((1.0 + sigma) / (1.0 - sigma)).ln();
    ((y * sigma + t * at) / (2.0 * e).sqrt(), y)
}

/// Residual of the implicit profile formula at `(x, w)`.
pub fn implicit_residual(x: f64, w: f64, branch: &OracleBranch) -> f64 {
    let t = branch.lambda / branch.e;
    implicit_lhs(w + 1.0, w - (t - 1.0), t, branch.e) - x.abs()
}

/// Profile `w(x)` of the single-membrane solution on `branch`, by bisection
/// on the implicit formula; even in `x`.
pub fn oracle_w(x: f64, lambda: f64, branch: &OracleBranch) -> Result<f64> {
    if !(x.abs() <= 0.5) {
        return Err(Error::OutsideDomain { x, z: 0.0 });
    }
    if (lambda - branch.lambda).abs() > 1e-14 * lambda.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "branch belongs to Lambda = {}, not {lambda}",
            branch.lambda
        )));
    }
    let t = branch.lambda / branch.e;
    let x = x.abs();
    if x == 0.0 {
        return Ok(t - 1.0);
    }
    let (e, top) = (branch.e, (1.0 - t).sqrt());
    let sigma = bisect(|s| implicit_lhs_sigma(s, t, e).0 - x, 0.0, top);
    Ok(implicit_lhs_sigma(sigma, t, e).1.min(1.0) - 1.0)
}

/// Fold of the `E`-equation found by bisecting on the predicate
/// "`oracle_e(Λ)` is nonempty".
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaStar {
    pub lambda_star: f64,
    pub bracket: (f64, f64),
    /// `2 max φ²`, the fold in closed form over the maximizer of `φ`.
    pub from_maximum: f64,
    /// `E` at the fold.
    pub e_fold: f64,
}

pub fn find_lambda_star() -> LambdaStar {
    let (mut lo, mut hi) = (0.5, 5.0);
    debug_assert!(!oracle_e(lo).is_empty() && oracle_e(hi).is_empty());
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if oracle_e(mid).is_empty() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tm = phi_t_argmax();
    let from_maximum = 2.0 * phi_t(tm).powi(2);
    LambdaStar {
        lambda_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        from_maximum,
        e_fold: from_maximum / tm,
    }
}

/// Comparison of a diagonal small-gap solution with the single-membrane
/// formula under `w(x) = 2 u₀(2x)`, `Λ = 8λ`.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetricReduction {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(rename = "E")]
    pub e: f64,
    /// `max |u₀(x) - w(x/2)/2|` over the grid.
    pub max_profile_error: f64,
    /// `max |v₀ + 1 + u₀|` over the grid.
    pub max_mirror_error: f64,
    pub newton_residual: f64,
}

pub fn symmetric_reduction(
    lambda: f64,
    grid: &Grid2,
    opts: &NewtonOptions<f64>,
) -> Result<SymmetricReduction> {
    let sol = solve_small_gap(lambda, lambda, grid, opts)?;
    let big = 8.0 * lambda;
    let branch = *oracle_e(big)
        .iter()
        .find(|b| b.branch != Branch::Upper)
        .ok_or_else(|| Error::NoSolutionFound(format!("Lambda = {big} beyond the fold")))?;
    let n = grid.nx();
    let mut max_profile_error = 0.0f64;
    for i in 0..n {
        let x: f64 = x_node(n, i);
        let w = oracle_w(x / 2.0, big, &branch)?;
        max_profile_error = max_profile_error.max((sol.u0[i] - w / 2.0).abs());
    }
    let mirrored: Vec<f64> = sol.u0.iter().map(|u| -1.0 - u).collect();
    Ok(SymmetricReduction {
        lambda,
        big_lambda: big,
        e: branch.e,
        max_profile_error,
        max_mirror_error: max_abs_diff(&sol.v0, &mirrored),
        newton_residual: sol.newton_residual,
    })
}
