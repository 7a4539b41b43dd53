//! The study drivers behind each subcommand. Every driver writes its files
//! through a [`RunWriter`] and finishes with `manifest.json`.

use std::path::Path;

use anyhow::{anyhow, Result};
use dualmem_core::fixed_point::{SolveOutcome, SolveStatus};
use dualmem_core::limit::{run_eps_sweep, LimitOptions};
use dualmem_core::oracle::{shoot_membrane, shooting_branches, shooting_fold};
use dualmem_core::small_gap::{
    diagonal_fold, find_lambda_star, implicit_residual, oracle_e, oracle_w, solve_small_gap,
    symmetric_reduction, Branch,
};
use dualmem_core::{flat_pair, iterate, Grid2, IterationOptions, PhysParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{LimitsConfig, OracleConfig, SmallGapConfig, SolveConfig, SweepConfig, SweepPlan};
use crate::output::{json_f64, Cell, CsvTable, FileEntry, RunWriter};

/// What a command did, for the caller to report and turn into an exit code.
#[derive(Debug, Clone)]
pub struct CommandReport {
    pub status: String,
    /// Nonzero when the run hit a failure the caller must see.
    pub exit_code: i32,
    pub files: Vec<FileEntry>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    status: &'a str,
    iterations: usize,
    fixed_point_residual: f64,
    min_gap: f64,
    max_linear_residual: f64,
    a0: f64,
    within_a0: bool,
    trace_min: Option<f64>,
    trace_max: Option<f64>,
    psi_linf: Option<f64>,
    admissibility: &'a dualmem_core::AdmissibilityReport<f64>,
    solution_bounds_pass: bool,
    ellipticity: &'a Option<dualmem_core::transform::EllipticityReport<f64>>,
    residual_history: Vec<f64>,
    min_gap_history: Vec<f64>,
    error: &'a Option<String>,
}

fn diagnostics<'a>(out: &'a SolveOutcome<f64>, params: &PhysParams<f64>) -> Diagnostics<'a> {
    Diagnostics {
        status: out.status.as_str(),
        iterations: out.iterations,
        fixed_point_residual: out.fixed_point_residual,
        min_gap: out.pair.min_gap(),
        max_linear_residual: out.max_linear_residual,
        a0: out.a0,
        within_a0: params.lambda <= out.a0 && params.mu <= out.a0,
        trace_min: out.traces.as_ref().map(|t| t.min()),
        trace_max: out.traces.as_ref().map(|t| t.max()),
        psi_linf: out.psi.as_ref().map(|p| p.max_abs()),
        admissibility: &out.admissibility,
        solution_bounds_pass: out.converged() && out.admissibility.all_pass(),
        ellipticity: &out.ellipticity,
        residual_history: out.history.iter().map(|r| r.residual).collect(),
        min_gap_history: out.history.iter().map(|r| r.min_gap).collect(),
        error: &out.error,
    }
}

/// Fixed-point solve of the full model: `membranes.csv`, `potential.csv`,
/// `diagnostics.json`.
pub fn cmd_solve(cfg: &SolveConfig, out_dir: &Path) -> Result<CommandReport> {
    let params = cfg.params();
    let grid = cfg.grid();
    let opts = cfg.iteration().options();
    let outcome = iterate(&params, &grid, &opts, &flat_pair(&grid))?;
    let mut w = RunWriter::new(out_dir)?;

    let mut mem = CsvTable::new(&["x", "u", "v"]);
    for i in 0..grid.nx() {
        mem.row(&[
            Cell::F(grid.x(i)),
            Cell::F(outcome.pair.u()[i]),
            Cell::F(outcome.pair.v()[i]),
        ]);
    }
    w.write("membranes.csv", &mem.into_string())?;

    let mut pot = CsvTable::new(&["xp", "zp", "phi", "psi"]);
    if let (Some(phi), Some(psi)) = (&outcome.phi, &outcome.psi) {
        for i in 0..grid.nx() {
            for j in 0..grid.nz() {
                pot.row(&[
                    Cell::F(grid.x(i)),
                    Cell::F(grid.z(j)),
                    Cell::F(phi.at(i, j)),
                    Cell::F(psi.at(i, j)),
                ]);
            }
        }
    }
    w.write("potential.csv", &pot.into_string())?;
    w.write_json("diagnostics.json", &diagnostics(&outcome, &params))?;

    let status = outcome.status.as_str().to_string();
    let files = w.finish("solve", cfg, &status)?;
    Ok(CommandReport {
        exit_code: if outcome.status == SolveStatus::EllipticFailure { 2 } else { 0 },
        status,
        files,
    })
}

/// Small-gap limit: `smallgap.csv`, `oracle.csv`, `lambda_star.json`,
/// `symmetric_reduction.json`.
pub fn cmd_smallgap(cfg: &SmallGapConfig, out_dir: &Path) -> Result<CommandReport> {
    let grid = cfg.grid();
    let newton = cfg.newton();
    let mut w = RunWriter::new(out_dir)?;

    let solved = solve_small_gap(cfg.lambda, cfg.mu, &grid, &newton);
    let mut sg = CsvTable::new(&["x", "u0", "v0"]);
    let status = match &solved {
        Ok(s) => {
            for i in 0..grid.nx() {
                sg.row(&[Cell::F(grid.x(i)), Cell::F(s.u0[i]), Cell::F(s.v0[i])]);
            }
            "converged".to_string()
        }
        Err(dualmem_core::Error::NoSolutionFound(_)) => "no_solution".to_string(),
        Err(e) => return Err(anyhow!("small-gap solve: {e}")),
    };
    w.write("smallgap.csv", &sg.into_string())?;

    let mut oc = CsvTable::new(&["Lambda", "E_lower", "E_upper"]);
    for &lam in &cfg.oracle_lambdas {
        let roots = oracle_e(lam);
        let pick = |b: Branch| {
            roots
                .iter()
                .find(|r| r.branch == b || r.branch == Branch::Tangent)
                .map_or(f64::NAN, |r| r.e)
        };
        oc.row(&[Cell::F(lam), Cell::F(pick(Branch::Lower)), Cell::F(pick(Branch::Upper))]);
    }
    w.write("oracle.csv", &oc.into_string())?;

    let ls = find_lambda_star();
    let sf = shooting_fold()?;
    let fold = diagonal_fold(&grid, &newton, cfg.fold_step, cfg.fold_step_min)?;
    let predicted = ls.lambda_star / 8.0;
    w.write_json(
        "lambda_star.json",
        &json!({
            "Lambda_star": ls.lambda_star,
            "bracket": [ls.bracket.0, ls.bracket.1],
            "Lambda_star_from_maximum": ls.from_maximum,
            "E_at_fold": ls.e_fold,
            "shooting_fold": { "Lambda_star": sf.lambda_star, "center_value": sf.center_value },
            "fold_difference": (ls.lambda_star - sf.lambda_star).abs(),
            "diagonal": {
                "nx": grid.nx(),
                "lambda_star": fold.lambda_star,
                "predicted_Lambda_star_over_8": predicted,
                "relative_difference": (fold.lambda_star - predicted).abs() / predicted,
                "continuation_steps": fold.continuation_steps,
            },
        }),
    )?;

    let red = symmetric_reduction(cfg.reduction_lambda, &grid, &newton);
    let red_json = match red {
        Ok(r) => serde_json::to_value(r)?,
        Err(e) => json!({ "lambda": cfg.reduction_lambda, "error": e.to_string() }),
    };
    w.write_json("symmetric_reduction.json", &red_json)?;

    let files = w.finish("smallgap", cfg, &status)?;
    Ok(CommandReport {
        status,
        exit_code: 0,
        files,
    })
}

/// One `(λ, μ)` sample of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub mu: f64,
    pub status: String,
    pub min_gap: f64,
    pub iterations: usize,
}

fn sweep_point(lambda: f64, mu: f64, cfg: &SweepConfig, grid: &Grid2, opts: &IterationOptions<f64>) -> SweepPoint {
    let params = PhysParams {
        eps: cfg.eps,
        lambda,
        mu,
        r0: cfg.r0,
    };
    match iterate(&params, grid, opts, &flat_pair(grid)) {
        Ok(o) => SweepPoint {
            lambda,
            mu,
            status: o.status.as_str().to_string(),
            min_gap: o.pair.min_gap(),
            iterations: o.iterations,
        },
        Err(_) => SweepPoint {
            lambda,
            mu,
            status: SolveStatus::EllipticFailure.as_str().to_string(),
            min_gap: f64::NAN,
            iterations: 0,
        },
    }
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| lo + (hi - lo) * k as f64 / steps as f64)
        .collect()
}

/// Parameter sweep: `sweep.csv`, plus `boundary.csv` for ray plans.
pub fn cmd_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<CommandReport> {
    let grid = cfg.grid();
    let opts = cfg.iteration().options();
    let points: Vec<(usize, f64, f64)> = match cfg.plan {
        SweepPlan::Grid => {
            let ls = linspace(cfg.lambda_min, cfg.lambda_max, cfg.lambda_steps);
            let ms = linspace(cfg.mu_min, cfg.mu_max, cfg.mu_steps);
            ls.iter()
                .flat_map(|&l| ms.iter().map(move |&m| (0, l, m)))
                .collect()
        }
        SweepPlan::Rays => cfg
            .rays
            .iter()
            .enumerate()
            .flat_map(|(r, d)| {
                linspace(0.0, cfg.s_max, cfg.s_steps)
                    .into_iter()
                    .map(move |s| (r, s * d[0], s * d[1]))
            })
            .collect(),
    };
    let results: Vec<SweepPoint> = pool(cfg.workers)?.install(|| {
        points
            .par_iter()
            .map(|&(_, l, m)| sweep_point(l, m, cfg, &grid, &opts))
            .collect()
    });

    let mut w = RunWriter::new(out_dir)?;
    let mut t = CsvTable::new(&["lambda", "mu", "status", "min_gap", "iterations"]);
    for p in &results {
        t.row(&[
            Cell::F(p.lambda),
            Cell::F(p.mu),
            Cell::S(&p.status),
            Cell::F(p.min_gap),
            Cell::U(p.iterations),
        ]);
    }
    w.write("sweep.csv", &t.into_string())?;

    let converged = results.iter().filter(|p| p.status == "converged").count();
    if cfg.plan == SweepPlan::Rays {
        let mut b = CsvTable::new(&[
            "ray_lambda",
            "ray_mu",
            "s_converged",
            "s_failed",
            "lambda",
            "mu",
            "failure_status",
        ]);
        let per_ray = cfg.s_steps + 1;
        for (r, dir) in cfg.rays.iter().enumerate() {
            let ray = &results[r * per_ray..(r + 1) * per_ray];
            let svals = linspace(0.0, cfg.s_max, cfg.s_steps);
            let first_fail = ray.iter().position(|p| p.status != "converged");
            let (s_ok, s_bad, status) = match first_fail {
                Some(0) => (f64::NAN, 0.0, ray[0].status.as_str()),
                Some(k) => (svals[k - 1], svals[k], ray[k].status.as_str()),
                None => (cfg.s_max, f64::NAN, "none"),
            };
            let s_mid = if s_bad.is_nan() { f64::NAN } else { 0.5 * (s_ok + s_bad) };
            b.row(&[
                Cell::F(dir[0]),
                Cell::F(dir[1]),
                Cell::F(s_ok),
                Cell::F(s_bad),
                Cell::F(s_mid * dir[0]),
                Cell::F(s_mid * dir[1]),
                Cell::S(status),
            ]);
        }
        w.write("boundary.csv", &b.into_string())?;
    }
    let status = format!("{converged}/{} converged", results.len());
    let files = w.finish("sweep", cfg, &status)?;
    Ok(CommandReport {
        status,
        exit_code: 0,
        files,
    })
}

const LIMITS_PLOT: &str = r#"# gnuplot script: log-log norms of psi and distances to the small-gap limit
set datafile separator ","
set logscale xy
set key left top
set xlabel "eps"
set terminal pngcairo size 900,600
set output "limits.png"
plot "limits.csv" using 1:2 skip 1 with linespoints title "psi_l2", \
     "limits.csv" using 1:3 skip 1 with linespoints title "dz_psi_l2", \
     "limits.csv" using 1:4 skip 1 with linespoints title "dzz_psi_l2", \
     "limits.csv" using 1:5 skip 1 with linespoints title "u_w1inf_err", \
     "limits.csv" using 1:6 skip 1 with linespoints title "v_w1inf_err", \
     "limits.csv" using 1:7 skip 1 with linespoints title "phi_l2_err"
"#;

/// Aspect-ratio sweep: `limits.csv`, `slopes.json`, optional `limits.gp`.
pub fn cmd_limits(cfg: &LimitsConfig, out_dir: &Path) -> Result<CommandReport> {
    let grid = cfg.grid();
    let opts = LimitOptions {
        r0: cfg.r0,
        iteration: cfg.iteration().options(),
        newton: dualmem_core::NewtonOptions {
            tol: cfg.newton_tol,
            ..Default::default()
        },
        workers: cfg.workers,
    };
    let report = run_eps_sweep(cfg.lambda, cfg.mu, &cfg.eps_list, &grid, &opts)?;
    let mut w = RunWriter::new(out_dir)?;
    let mut t = CsvTable::new(&[
        "eps",
        "psi_l2",
        "dz_psi_l2",
        "dzz_psi_l2",
        "u_w1inf_err",
        "v_w1inf_err",
        "phi_l2_err",
    ]);
    for r in &report.rows {
        t.row(&[
            Cell::F(r.eps),
            Cell::F(r.psi_l2),
            Cell::F(r.dz_psi_l2),
            Cell::F(r.dzz_psi_l2),
            Cell::F(r.u_w1inf_err),
            Cell::F(r.v_w1inf_err),
            Cell::F(r.phi_l2_err),
        ]);
    }
    w.write("limits.csv", &t.into_string())?;
    let opt = |s: Option<f64>| s.map_or(serde_json::Value::Null, json_f64);
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "eps": r.eps,
                "status": r.status.as_str(),
                "iterations": r.iterations,
                "psi_linf": json_f64(r.psi_linf),
                "trace_inequality_defect": json_f64(r.trace_defect),
                "error": r.error,
            })
        })
        .collect();
    w.write_json(
        "slopes.json",
        &json!({
            "lambda": cfg.lambda,
            "mu": cfg.mu,
            "slopes": {
                "psi_l2": opt(report.fitted_slopes.psi_l2),
                "dz_psi_l2": opt(report.fitted_slopes.dz_psi_l2),
                "dzz_psi_l2": opt(report.fitted_slopes.dzz_psi_l2),
            },
            "small_gap_residual": report.small_gap_residual,
            "rows": rows,
        }),
    )?;
    if cfg.plot_script {
        w.write("limits.gp", LIMITS_PLOT)?;
    }
    let ok = report
        .rows
        .iter()
        .filter(|r| r.status == SolveStatus::Converged)
        .count();
    let status = format!("{ok}/{} rows converged", report.rows.len());
    let files = w.finish("limits", cfg, &status)?;
    Ok(CommandReport {
        status,
        exit_code: 0,
        files,
    })
}

/// Cross-checks of the closed-form single-membrane solution against the
/// shooting integrator: `oracle_check.csv`, `oracle_check.json`.
pub fn cmd_oracle_check(cfg: &OracleConfig, out_dir: &Path) -> Result<CommandReport> {
    let mut w = RunWriter::new(out_dir)?;
    let mut t = CsvTable::new(&[
        "Lambda",
        "branch",
        "E",
        "w0",
        "max_implicit_residual",
        "max_shooting_difference",
        "shooting_mismatch",
    ]);
    let mut worst_residual = 0.0f64;
    let mut worst_difference = 0.0f64;
    let mut shooting_roots = Vec::new();
    for &lam in &cfg.lambdas {
        for b in oracle_e(lam) {
            let mut res = 0.0f64;
            for k in 1..=cfg.samples {
                let x = 0.5 * k as f64 / cfg.samples as f64;
                let wx = oracle_w(x, lam, &b)?;
                res = res.max(implicit_residual(x, wx, &b).abs());
            }
            let shot = shoot_membrane(lam, b.center_value())?;
            let mut diff = 0.0f64;
            for &(x, ws) in &shot.profile {
                diff = diff.max((oracle_w(x, lam, &b)? - ws).abs());
            }
            worst_residual = worst_residual.max(res);
            worst_difference = worst_difference.max(diff);
            t.row(&[
                Cell::F(lam),
                Cell::S(b.branch.as_str()),
                Cell::F(b.e),
                Cell::F(b.center_value()),
                Cell::F(res),
                Cell::F(diff),
                Cell::F(shot.mismatch),
            ]);
        }
        shooting_roots.push(json!({ "Lambda": lam, "center_values": shooting_branches(lam, 60)? }));
    }
    w.write("oracle_check.csv", &t.into_string())?;
    let ls = find_lambda_star();
    let fold = if cfg.shooting_fold {
        let sf = shooting_fold()?;
        json!({ "Lambda_star": sf.lambda_star, "center_value": sf.center_value,
                "difference": (sf.lambda_star - ls.lambda_star).abs() })
    } else {
        serde_json::Value::Null
    };
    w.write_json(
        "oracle_check.json",
        &json!({
            "max_implicit_residual": worst_residual,
            "max_shooting_difference": worst_difference,
            "Lambda_star": ls.lambda_star,
            "shooting_fold": fold,
            "shooting_roots": shooting_roots,
        }),
    )?;
    let status = format!("residual {worst_residual:.3e}, shooting difference {worst_difference:.3e}");
    let files = w.finish("oracle-check", cfg, &status)?;
    Ok(CommandReport {
        status,
        exit_code: 0,
        files,
    })
}
