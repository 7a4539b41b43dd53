//! Damped Picard iteration of the membrane map `S`, outcome classification,
//! and admissibility diagnostics for membrane pairs.

use serde::Serialize;

use crate::elliptic::DEFAULT_LINEAR_TOL;
use crate::error::{Error, Result};
use crate::grid::{
    evenness_defect, first_derivative, interior_second_differences, kappa0, Field2, Grid2,
    MembranePair, PhysParams,
};
use crate::membrane::{a0_threshold, step_S, StepOutput};
use crate::scalar::{max_abs_diff, Real};
use crate::traces::TracePair;
use crate::transform::EllipticityReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationOptions<F> {
    /// Relaxation `θ` in `p ← (1 - θ) p + θ S(p)`.
    pub damping: F,
    /// Relaxation used once the residual grows for several steps in a row.
    pub fallback_damping: F,
    pub max_iter: usize,
    /// Stop when `‖S(p) - p‖∞ <= fp_tol`.
    pub fp_tol: F,
    /// An iterate whose smallest gap drops below this is classified as pull-in.
    pub gap_min: F,
    /// Relative residual of each potential solve.
    pub linear_tol: F,
    /// Trace-bound constant used by the `a₀` diagnostic.
    pub c3: F,
}

impl<F: Real> Default for IterationOptions<F> {
    fn default() -> Self {
        Self {
            damping: F::one(),
            fallback_damping: F::lit(0.5),
            max_iter: 200,
            fp_tol: F::lit(1e-10),
            gap_min: F::lit(1e-3),
            linear_tol: F::lit(DEFAULT_LINEAR_TOL),
            c3: F::one(),
        }
    }
}

impl<F: Real> IterationOptions<F> {
    pub fn validate(&self) -> Result<()> {
        let unit = |t: F| t > F::zero() && t <= F::one();
        if !unit(self.damping) || !unit(self.fallback_damping) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {} / {}",
                self.damping, self.fallback_damping
            )));
        }
        if !(self.fp_tol > F::zero() && self.gap_min > F::zero() && self.linear_tol > F::zero()) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !(self.c3 >= F::zero()) {
            return Err(Error::InvalidParameter("c3 must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    PullInDetected,
    MaxIterExceeded,
    EllipticFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::PullInDetected => "pull_in",
            SolveStatus::MaxIterExceeded => "max_iter",
            SolveStatus::EllipticFailure => "elliptic_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord<F> {
    pub iteration: usize,
    /// `‖S(p) - p‖∞` for the iterate `p` entering this step.
    pub residual: F,
    pub min_gap: F,
    pub damping: F,
}

/// Checks of the convex admissible sets and the solution bounds.
#[derive(Debug, Clone, Serialize)]
pub struct MembraneCheck<F> {
    pub evenness_defect: F,
    pub boundary_defect: F,
    pub min_second_difference: F,
    pub max_second_difference: F,
    pub max_slope: F,
    pub min_value: F,
    pub max_value: F,
    /// Discrete `max(‖w‖∞, ‖w'‖∞, ‖w''‖∞)`.
    pub w2inf: F,
    pub admissible: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CornerAngles<F> {
    /// Angle at `(-1, 0)`.
    pub upper_left: F,
    /// Angle at `(1, 0)`.
    pub upper_right: F,
    /// Angle at `(-1, -1)`.
    pub lower_left: F,
    /// Angle at `(1, -1)`.
    pub lower_right: F,
}

impl<F: Real> CornerAngles<F> {
    pub fn all(&self) -> [F; 4] {
        [self.upper_left, self.upper_right, self.lower_left, self.lower_right]
    }

    /// Every angle lies in `(0, π/2]` (up to `slack`).
    pub fn in_range(&self, slack: F) -> bool {
        self.all()
            .iter()
            .all(|&w| w > F::zero() && w <= F::FRAC_PI_2() + slack)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport<F> {
    pub r0: F,
    pub kappa0: F,
    pub slack: F,
    pub in_c1: bool,
    pub in_c2: bool,
    pub upper: MembraneCheck<F>,
    pub lower: MembraneCheck<F>,
    /// `0 >= u >= -r₀/2` and `|u'| <= 2 r₀`.
    pub upper_estimate: bool,
    /// `|v'| <= 2 r₀`.
    pub lower_slope_estimate: bool,
    /// `-1 <= v < u <= 0`.
    pub ordering: bool,
    /// `0 >= u >= -1/3 + κ₀` and `-1/3 - 2κ₀ >= v >= -1`.
    pub box_bounds: bool,
    /// Both discrete `W²∞` norms are at most 3.
    pub w2inf_bound: bool,
    pub corner_angles: CornerAngles<F>,
    pub corner_angles_ok: bool,
}

impl<F: Real> AdmissibilityReport<F> {
    /// All solution bounds of the existence result hold.
    pub fn all_pass(&self) -> bool {
        self.in_c1
            && self.in_c2
            && self.upper_estimate
            && self.lower_slope_estimate
            && self.ordering
            && self.box_bounds
            && self.w2inf_bound
            && self.corner_angles_ok
    }
}

fn membrane_check<F: Real>(w: &[F], boundary: F, h: F, lo: F, hi: F, slack: F) -> MembraneCheck<F> {
    let n = w.len();
    let d2 = interior_second_differences(w, h);
    let d1 = first_derivative(w, h);
    let min2 = d2.iter().cloned().fold(F::infinity(), F::min);
    let max2 = d2.iter().cloned().fold(F::neg_infinity(), F::max);
    let max_slope = crate::scalar::max_abs(&d1);
    let max_curv = min2.abs().max(max2.abs());
    let evenness_defect = evenness_defect(w);
    let boundary_defect = (w[0] - boundary).abs().max((w[n - 1] - boundary).abs());
    let admissible = evenness_defect <= slack
        && boundary_defect <= slack
        && min2 >= lo - slack
        && max2 <= hi + slack;
    MembraneCheck {
        evenness_defect,
        boundary_defect,
        min_second_difference: min2,
        max_second_difference: max2,
        max_slope,
        min_value: w.iter().cloned().fold(F::infinity(), F::min),
        max_value: w.iter().cloned().fold(F::neg_infinity(), F::max),
        w2inf: crate::scalar::max_abs(w).max(max_slope).max(max_curv),
        admissible,
    }
}

/// Interior angles at the four corners of the physical domain.
pub fn corner_angles<F: Real>(pair: &MembranePair<F>, h: F) -> CornerAngles<F> {
    let du = first_derivative(pair.u(), h);
    let dv = first_derivative(pair.v(), h);
    let n = pair.len();
    let angle = |s: F| (s / (F::one() + s * s).sqrt()).acos();
    CornerAngles {
        upper_left: angle(-du[0]),
        upper_right: angle(du[n - 1]),
        lower_left: angle(dv[0]),
        lower_right: angle(-dv[n - 1]),
    }
}

/// Admissibility with the default slack of `1e-12`.
pub fn admissibility_check<F: Real>(pair: &MembranePair<F>, r0: F, grid: &Grid2) -> AdmissibilityReport<F> {
    admissibility_check_with_slack(pair, r0, grid, F::lit(1e-12))
}

/// Admissibility report; each inequality is tested with additive `slack`.
pub fn admissibility_check_with_slack<F: Real>(
    pair: &MembranePair<F>,
    r0: F,
    grid: &Grid2,
    slack: F,
) -> AdmissibilityReport<F> {
    let h = grid.hx::<F>();
    let upper = membrane_check(pair.u(), F::zero(), h, F::zero(), r0, slack);
    let lower = membrane_check(pair.v(), -F::one(), h, -r0, F::zero(), slack);
    let k0 = kappa0(r0);
    let two = F::lit(2.0);
    let third = F::one() / F::lit(3.0);
    let upper_estimate = upper.max_value <= slack
        && upper.min_value >= -r0 / two - slack
        && upper.max_slope <= two * r0 + slack;
    let lower_slope_estimate = lower.max_slope <= two * r0 + slack;
    let ordering = lower.min_value >= -F::one() - slack
        && upper.max_value <= slack
        && pair.min_gap() > F::zero();
    let box_bounds = upper.max_value <= slack
        && upper.min_value >= -third + k0 - slack
        && lower.max_value <= -third - two * k0 + slack
        && lower.min_value >= -F::one() - slack;
    let w2inf_bound = upper.w2inf <= F::lit(3.0) + slack && lower.w2inf <= F::lit(3.0) + slack;
    let angles = corner_angles(pair, h);
    AdmissibilityReport {
        r0,
        kappa0: k0,
        slack,
        in_c1: upper.admissible,
        in_c2: lower.admissible,
        upper,
        lower,
        upper_estimate,
        lower_slope_estimate,
        ordering,
        box_bounds,
        w2inf_bound,
        corner_angles_ok: angles.in_range(slack),
        corner_angles: angles,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome<F> {
    pub status: SolveStatus,
    pub pair: MembranePair<F>,
    /// Potential of `pair` on the reference grid.
    pub phi: Option<Field2<F>>,
    pub psi: Option<Field2<F>>,
    pub traces: Option<TracePair<F>>,
    /// Number of evaluations of `S`.
    pub iterations: usize,
    pub history: Vec<IterationRecord<F>>,
    /// `‖S(pair) - pair‖∞` of the returned pair (infinite when never evaluated).
    pub fixed_point_residual: F,
    pub admissibility: AdmissibilityReport<F>,
    pub ellipticity: Option<EllipticityReport<F>>,
    pub a0: F,
    pub max_linear_residual: f64,
    pub error: Option<String>,
}

impl<F: Real> SolveOutcome<F> {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Slack for checks on a converged pair: the fixed-point residual bound
/// perturbs second differences by up to `4 fp_tol / h²`.
pub fn converged_slack<F: Real>(fp_tol: F, grid: &Grid2) -> F {
    let h = grid.hx::<F>();
    F::lit(4.0) * fp_tol / (h * h) + F::lit(1e-12)
}

/// Iterates `p ← (1 - θ) p + θ S(p)` from `init`.
pub fn iterate<F: Real>(
    params: &PhysParams<F>,
    grid: &Grid2,
    opts: &IterationOptions<F>,
    init: &MembranePair<F>,
) -> Result<SolveOutcome<F>> {
    params.validate()?;
    opts.validate()?;
    init.check_grid(grid)?;

    let a0 = a0_threshold(params.r0, opts.c3);
    let mut pair = init.clone();
    let mut theta = opts.damping;
    let mut history = Vec::new();
    let mut growth = 0usize;
    let mut last: Option<StepOutput<F>> = None;
    let mut last_residual = F::infinity();
    let mut max_linear = 0.0f64;

    let finish = |status: SolveStatus,
                  pair: MembranePair<F>,
                  step: Option<StepOutput<F>>,
                  iterations: usize,
                  history: Vec<IterationRecord<F>>,
                  residual: F,
                  max_linear: f64,
                  error: Option<String>| {
        let slack = converged_slack(opts.fp_tol, grid);
        let admissibility = admissibility_check_with_slack(&pair, params.r0, grid, slack);
        let (phi, psi, traces, ellipticity) = match step {
            Some(s) => (Some(s.phi), Some(s.psi), Some(s.traces), Some(s.ellipticity)),
            None => (None, None, None, None),
        };
        SolveOutcome {
            status,
            pair,
            phi,
            psi,
            traces,
            iterations,
            history,
            fixed_point_residual: residual,
            admissibility,
            ellipticity,
            a0,
            max_linear_residual: max_linear,
            error,
        }
    };

    for k in 1..=opts.max_iter {
        let step = match step_S(&pair, params, grid, opts.linear_tol) {
            Ok(s) => s,
            Err(e) => {
                return Ok(finish(
                    SolveStatus::EllipticFailure,
                    pair,
                    last,
                    k - 1,
                    history,
                    last_residual,
                    max_linear,
                    Some(e.to_string()),
                ))
            }
        };
        max_linear = max_linear.max(step.linear.final_residual);
        let residual = max_abs_diff(&step.s1, pair.u()).max(max_abs_diff(&step.s2, pair.v()));
        history.push(IterationRecord {
            iteration: k,
            residual,
            min_gap: pair.min_gap(),
            damping: theta,
        });
        if residual <= opts.fp_tol {
            return Ok(finish(
                SolveStatus::Converged,
                pair,
                Some(step),
                k,
                history,
                residual,
                max_linear,
                None,
            ));
        }
        if residual.is_finite() && residual > last_residual {
            growth += 1;
        } else {
            growth = 0;
        }
        if growth >= 3 && theta > opts.fallback_damping {
            theta = opts.fallback_damping;
            growth = 0;
        }

        let one_minus = F::one() - theta;
        let u: Vec<F> = pair
            .u()
            .iter()
            .zip(&step.s1)
            .map(|(&a, &b)| one_minus * a + theta * b)
            .collect();
        let v: Vec<F> = pair
            .v()
            .iter()
            .zip(&step.s2)
            .map(|(&a, &b)| one_minus * a + theta * b)
            .collect();
        let collapsed = u
            .iter()
            .zip(&v)
            .any(|(&a, &b)| !(a - b >= opts.gap_min) || !a.is_finite() || !b.is_finite());
        if collapsed {
            return Ok(finish(
                SolveStatus::PullInDetected,
                pair,
                Some(step),
                k,
                history,
                residual,
                max_linear,
                None,
            ));
        }
        pair = MembranePair::with_boundary_values(u, v)?;
        last_residual = residual;
        last = Some(step);
    }
    // `last` belongs to the pair before the final update; report the
    // potential of the returned pair only when it has been computed.
    let _ = last.take();
    Ok(finish(
        SolveStatus::MaxIterExceeded,
        pair,
        None,
        opts.max_iter,
        history,
        last_residual,
        max_linear,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{flat_pair, make_grid};
    use crate::membrane::solve_poisson_1d;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_voltage_converges_immediately() {
        let g = make_grid(17, 9).unwrap();
        let p = PhysParams::new(0.1, 0.0, 0.0, 1.0 / 3.0).unwrap();
        let out = iterate(&p, &g, &IterationOptions::default(), &flat_pair(&g)).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.fixed_point_residual, 0.0);
        assert!(out.admissibility.all_pass());
        let phi = out.phi.unwrap();
        for i in 0..g.nx() {
            for j in 0..g.nz() {
                assert_eq!(phi.at(i, j), g.z::<f64>(j));
            }
        }
    }

    #[test]
    fn symmetric_voltages_give_mirrored_membranes() {
        let g = make_grid(33, 17).unwrap();
        let p = PhysParams::new(0.1, 0.01, 0.01, 1.0 / 3.0).unwrap();
        let out = iterate(&p, &g, &IterationOptions::default(), &flat_pair(&g)).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        for (u, v) in out.pair.u().iter().zip(out.pair.v()) {
            assert_abs_diff_eq!(*v, -1.0 - u, epsilon = 1e-6);
        }
        assert!(out.admissibility.all_pass(), "{:?}", out.admissibility);
    }

    #[test]
    fn large_voltage_pulls_in() {
        let g = make_grid(17, 9).unwrap();
        let p = PhysParams::new(0.1, 0.5, 0.5, 1.0 / 3.0).unwrap();
        let out = iterate(&p, &g, &IterationOptions::default(), &flat_pair(&g)).unwrap();
        assert_eq!(out.status, SolveStatus::PullInDetected);
        let gaps: Vec<f64> = out.history.iter().map(|r| r.min_gap).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
    }

    #[test]
    fn max_iter_reported() {
        let g = make_grid(9, 5).unwrap();
        let p = PhysParams::new(0.1, 0.05, 0.05, 1.0 / 3.0).unwrap();
        let opts = IterationOptions {
            max_iter: 2,
            ..Default::default()
        };
        let out = iterate(&p, &g, &opts, &flat_pair(&g)).unwrap();
        assert_eq!(out.status, SolveStatus::MaxIterExceeded);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn options_validation() {
        let bad = IterationOptions::<f64> {
            damping: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IterationOptions::<f64> {
            fp_tol: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flat_pair_is_admissible_with_right_angles() {
        let g = make_grid(17, 5).unwrap();
        let rep = admissibility_check(&flat_pair::<f64>(&g), 0.3, &g);
        assert!(rep.all_pass());
        for w in rep.corner_angles.all() {
            assert_abs_diff_eq!(w, std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn parabola_within_curvature_bound() {
        let g = make_grid(33, 5).unwrap();
        let lam = 0.2;
        let xs = g.xs::<f64>();
        let u = xs.iter().map(|x| lam * (x * x - 1.0) / 2.0).collect();
        let pair = MembranePair::with_boundary_values(u, vec![-1.0; 33]).unwrap();
        let rep = admissibility_check(&pair, 1.0 / 3.0, &g);
        assert!(rep.in_c1);
        assert_abs_diff_eq!(rep.upper.max_second_difference, lam, epsilon = 1e-12);
        assert!(rep.corner_angles_ok);
    }

    #[test]
    fn curvature_violation_is_witnessed() {
        let g = make_grid(33, 5).unwrap();
        let r0 = 0.3;
        let u = solve_poisson_1d(&vec![r0 + 0.1; 33], 0.0, 0.0).unwrap();
        let pair = MembranePair::new(u, vec![-1.0; 33]).unwrap();
        let rep = admissibility_check(&pair, r0, &g);
        assert!(!rep.in_c1);
        assert_abs_diff_eq!(rep.upper.max_second_difference, r0 + 0.1, epsilon = 1e-10);
        assert!(rep.in_c2);
    }
}
