//! Numerical solver for a steady two-membrane electrostatic MEMS model.
//!
//! The gap between an upper membrane `u` and a lower membrane `v` is mapped
//! to the fixed rectangle `(-1, 1) × (0, 1)`. There the potential solves a
//! variable-coefficient elliptic problem, its normal derivatives drive two
//! one-dimensional membrane equations, and the steady state is a fixed point
//! of the resulting map. Companion modules treat the small-aspect-ratio
//! limit, closed-form and shooting references, and `ε`-sweeps.
//!
//! All solvers are generic over [`Real`] (`f32` or `f64`); aliases for the
//! common `f64` instantiations live at the crate root.

pub mod banded;
pub mod battery;
pub mod elliptic;
pub mod error;
pub mod fixed_point;
pub mod grid;
pub mod limit;
pub mod membrane;
pub mod oracle;
pub mod scalar;
pub mod small_gap;
pub mod traces;
pub mod transform;

pub use error::{Error, Result};
pub use fixed_point::{
    admissibility_check, iterate, AdmissibilityReport, IterationOptions, SolveOutcome, SolveStatus,
};
pub use grid::{flat_pair, make_grid, Field2, Grid2, MembranePair, PhysParams};
pub use limit::{fit_rate, run_eps_sweep, trace_inequality_check, LimitOptions, LimitReport};
pub use membrane::{solve_poisson_1d, step_S};
pub use oracle::{shoot_membrane, ShootingResult};
pub use scalar::Real;
pub use small_gap::{
    find_lambda_star, oracle_e, oracle_w, solve_small_gap, Branch, NewtonOptions, OracleBranch,
    SmallGapSolution,
};
pub use transform::{assemble_coefficients, map_forward, map_inverse, CoefficientField};

pub type Field2F64 = Field2<f64>;
pub type Field2F32 = Field2<f32>;
pub type MembranePairF64 = MembranePair<f64>;
pub type MembranePairF32 = MembranePair<f32>;
pub type PhysParamsF64 = PhysParams<f64>;
pub type PhysParamsF32 = PhysParams<f32>;
pub type IterationOptionsF64 = IterationOptions<f64>;
pub type SolveOutcomeF64 = SolveOutcome<f64>;
pub type LimitReportF64 = LimitReport<f64>;
pub type SmallGapSolutionF64 = SmallGapSolution<f64>;
