//! Acceptance suite. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Run with `cargo test -p dualmem-cli --test acceptance`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dualmem_cli::cmd_limits;
use dualmem_cli::config::LimitsConfig;
use dualmem_core::battery::{admissible_battery, calibrate_c3, potential_and_traces, C3Row};
use dualmem_core::elliptic::solve_dirichlet;
use dualmem_core::grid::field_norms;
use dualmem_core::oracle::shooting_fold;
use dualmem_core::small_gap::{diagonal_fold, e_equation_residual, implicit_residual, symmetric_reduction};
use dualmem_core::transform::CoefficientField;
use dualmem_core::{
    find_lambda_star, flat_pair, iterate, make_grid, oracle_e, oracle_w, run_eps_sweep, shoot_membrane, Field2,
    IterationOptions, LimitOptions, LimitReport, MembranePair, NewtonOptions, PhysParams, SolveStatus,
};

type Verdict = (bool, String);

const R0: f64 = 1.0 / 3.0;
const BATTERY_SIZE: usize = 20;
const BATTERY_SEED: u64 = 20_240_601;
const CALIBRATION_SEED: u64 = 7;
const TRACE_EPS: [f64; 3] = [0.2, 0.1, 0.05];
const LIMIT_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn trivial_voltage() -> anyhow::Result<Verdict> {
    let g = make_grid(65, 65)?;
    let p = PhysParams::new(0.1, 0.0, 0.0, R0)?;
    let out = iterate(&p, &g, &IterationOptions::default(), &flat_pair(&g))?;
    let du = out.pair.u().iter().map(|u| u.abs()).fold(0.0, f64::max);
    let dv = out.pair.v().iter().map(|v| (v + 1.0).abs()).fold(0.0, f64::max);
    let phi = out.phi.as_ref().expect("potential of converged run");
    let dphi = Field2::from_fn(g, |_, z| z).zip_map(phi, |a, b| (a - b).abs())?.max_abs();
    let dpsi = out.psi.as_ref().expect("psi of converged run").max_abs();
    let worst = du.max(dv).max(dphi).max(dpsi);
    Ok((
        out.status == SolveStatus::Converged && worst <= 1e-12,
        format!("status {}, max deviation {worst:.3e}", out.status.as_str()),
    ))
}

fn manufactured_l2_error(n: usize) -> anyhow::Result<f64> {
    let eps = 0.1;
    let g = make_grid(n, n)?;
    let exact = Field2::from_fn(g, |x: f64, z: f64| (PI * (x + 1.0) / 2.0).sin() * (PI * z).sin());
    let factor = eps * eps * PI * PI / 4.0 + PI * PI;
    let rhs = exact.map(|v| factor * v);
    let (psi, _) = solve_dirichlet(&CoefficientField::flat(g, eps), &rhs, 1e-12)?;
    Ok(field_norms(&psi.zip_map(&exact, |a, b| a - b)?, &g)?.l2)
}

fn manufactured_convergence() -> anyhow::Result<Verdict> {
    let t = Instant::now();
    let errs = [33, 65, 129]
        .iter()
        .map(|&n| manufactured_l2_error(n))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let secs = t.elapsed().as_secs_f64();
    let ok = orders.iter().all(|&o| o >= 1.9) && secs <= 60.0;
    Ok((
        ok,
        format!(
            "L2 errors {:.3e} {:.3e} {:.3e}, orders {:.3} {:.3}, {secs:.1} s",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    ))
}

/// Largest amount by which `phi` leaves `[z'(u - v) + v - slack, 1 + slack]`; 0 when inside.
fn max_principle_violation(pair: &MembranePair<f64>, phi: &Field2<f64>, slack: f64) -> f64 {
    let g = phi.grid();
    let mut worst = 0.0f64;
    for i in 0..g.nx() {
        let (u, v) = (pair.u()[i], pair.v()[i]);
        for j in 0..g.nz() {
            let z: f64 = g.z(j);
            let p = phi.at(i, j);
            worst = worst.max((z * (u - v) + v - slack) - p).max(p - (1.0 + slack));
        }
    }
    worst
}

/// Pairs with a violation beyond `1e-3`, and the largest raw violation.
fn battery_violation(n: usize) -> anyhow::Result<(usize, f64)> {
    let g = make_grid(n, n)?;
    let battery = admissible_battery(BATTERY_SIZE, R0, n, BATTERY_SEED)?;
    let mut raw = 0.0f64;
    let mut count = 0usize;
    for pair in &battery {
        let (phi, _) = potential_and_traces(pair, 0.1, &g, 1e-12)?;
        count += usize::from(max_principle_violation(pair, &phi, 1e-3) > 0.0);
        raw = raw.max(max_principle_violation(pair, &phi, 0.0));
    }
    Ok((count, raw))
}

fn maximum_principle() -> anyhow::Result<Verdict> {
    let (bad65, raw65) = battery_violation(65)?;
    let (bad129, raw129) = battery_violation(129)?;
    // Both raw violations may be exactly zero; then the shrink factor holds trivially.
    let shrinks = raw129 == 0.0 || raw129 * 3.0 <= raw65;
    Ok((
        bad129 == 0 && shrinks,
        format!(
            "pairs violating at 129: {bad129}, at 65: {bad65}; raw max violation {raw65:.3e} (65) -> {raw129:.3e} (129)"
        ),
    ))
}

fn trace_bounds() -> anyhow::Result<Verdict> {
    let cal_grid = make_grid(65, 65)?;
    let cal_battery = admissible_battery(BATTERY_SIZE, R0, 65, CALIBRATION_SEED)?;
    let cal = calibrate_c3(&cal_battery, &TRACE_EPS, &cal_grid, 1e-12)?;
    let c3 = cal.c3;

    let g = make_grid(129, 129)?;
    let battery = admissible_battery(BATTERY_SIZE, R0, 129, BATTERY_SEED)?;
    let mut rows: Vec<C3Row<f64>> = Vec::new();
    let mut within = true;
    for &eps in &TRACE_EPS {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for pair in &battery {
            let (_, t) = potential_and_traces(pair, eps, &g, 1e-12)?;
            lo = lo.min(t.min());
            hi = hi.max(t.max());
        }
        within &= lo >= -1e-3 && hi <= 1.0 + c3 * eps * eps + 1e-3;
        rows.push(C3Row {
            eps,
            ratio: (hi - 1.0) / (eps * eps),
            min_trace: lo,
            max_trace: hi,
        });
    }
    // No growth as eps decreases, up to a 25% discretization allowance.
    let no_growth = rows.windows(2).all(|w| w[1].ratio <= 1.25 * w[0].ratio.max(0.0) + 1e-3);
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    let min_trace = rows.iter().map(|r| r.min_trace).fold(f64::INFINITY, f64::min);
    Ok((
        within && no_growth,
        format!(
            "calibrated c3 {c3:.4}; (max trace - 1)/eps^2 at eps 0.2/0.1/0.05: {}; min trace {min_trace:.4}",
            ratios.join(" ")
        ),
    ))
}

fn existence_invariants() -> anyhow::Result<Verdict> {
    let g = make_grid(65, 65)?;
    let opts = IterationOptions::default();
    let values = [0.005, 0.01, 0.02];
    let (mut runs, mut passed) = (0, 0);
    let mut failures = Vec::new();
    for &l in &values {
        for &m in &values {
            let p = PhysParams::new(0.1, l, m, R0)?;
            let out = iterate(&p, &g, &opts, &flat_pair(&g))?;
            if out.status != SolveStatus::Converged {
                failures.push(format!("({l},{m}) {}", out.status.as_str()));
                continue;
            }
            runs += 1;
            let rep = &out.admissibility;
            let ok = rep.all_pass()
                && rep.upper.evenness_defect <= 1e-8
                && rep.lower.evenness_defect <= 1e-8
                && out.fixed_point_residual <= 1e-10
                && rep.corner_angles.in_range(0.0);
            if ok {
                passed += 1;
            } else {
                failures.push(format!("({l},{m}) invariants"));
            }
        }
    }
    Ok((
        runs == 9 && passed == 9,
        if failures.is_empty() {
            format!("{passed}/9 converged runs pass every invariant")
        } else {
            format!("{passed}/9 pass; failing: {}", failures.join(", "))
        },
    ))
}

fn limit_sweep() -> anyhow::Result<(LimitReport<f64>, f64)> {
    let t = Instant::now();
    let g = make_grid(129, 129)?;
    let opts = LimitOptions {
        workers: 4,
        ..Default::default()
    };
    let rep = run_eps_sweep(0.01, 0.01, &LIMIT_EPS, &g, &opts)?;
    Ok((rep, t.elapsed().as_secs_f64()))
}

fn scaling(rep: &LimitReport<f64>, secs: f64) -> Verdict {
    let s = &rep.fitted_slopes;
    let get = |o: Option<f64>| o.unwrap_or(f64::NAN);
    let (a, b, c) = (get(s.psi_l2), get(s.dz_psi_l2), get(s.dzz_psi_l2));
    let all_converged = rep.rows.iter().all(|r| r.status == SolveStatus::Converged);
    let linf = rep.rows.iter().map(|r| r.psi_linf).fold(0.0, f64::max);
    (
        all_converged && a >= 0.9 && b >= 0.9 && c >= 1.8 && linf <= 2.0 && secs <= 300.0,
        format!("slopes psi {a:.3}, dz psi {b:.3}, dzz psi {c:.3}; max |psi| {linf:.3e}; {secs:.1} s"),
    )
}

fn convergence(rep: &LimitReport<f64>) -> Verdict {
    let check = |vals: Vec<f64>| {
        vals.windows(2).all(|w| w[1] < w[0]) && vals.last().copied().unwrap_or(f64::NAN) <= 0.1 * vals[0]
    };
    let u: Vec<f64> = rep.rows.iter().map(|r| r.u_w1inf_err).collect();
    let phi: Vec<f64> = rep.rows.iter().map(|r| r.phi_l2_err).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    (
        check(u.clone()) && check(phi.clone()),
        format!("u W1inf error {}; potential L2 distance {}", fmt(&u), fmt(&phi)),
    )
}

fn oracle_identity() -> anyhow::Result<Verdict> {
    let (mut res, mut agree, mut center, mut eres) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut branches = 0;
    for &lam in &[0.2, 0.6, 1.0] {
        for b in oracle_e(lam) {
            branches += 1;
            eres = eres.max(e_equation_residual(lam, b.e).abs());
            center = center.max((oracle_w(0.0, lam, &b)? - (lam / b.e - 1.0)).abs());
            let shot = shoot_membrane(lam, b.center_value())?;
            for k in 1..=50 {
                let x = k as f64 / 100.0;
                let w = oracle_w(x, lam, &b)?;
                res = res.max(implicit_residual(x, w, &b).abs());
                let (xs, ws) = shot.profile[k];
                debug_assert!((xs - x).abs() < 1e-12);
                agree = agree.max((w - ws).abs());
            }
        }
    }
    Ok((
        branches == 6 && res <= 1e-12 && agree <= 1e-8 && center <= 1e-12 && eres <= 1e-12,
        format!(
            "{branches} branches; implicit residual {res:.3e}; shooting gap {agree:.3e}; center defect {center:.3e}; E residual {eres:.3e}"
        ),
    ))
}

fn lambda_star_consistency() -> anyhow::Result<Verdict> {
    let e = find_lambda_star().lambda_star;
    let s = shooting_fold()?.lambda_star;
    let near = |v: f64| (v - 1.40).abs() < 0.01;
    Ok((
        (e - s).abs() <= 1e-3 && near(e) && near(s),
        format!("E-equation fold {e:.10}, shooting fold {s:.10}, difference {:.3e}", (e - s).abs()),
    ))
}

fn symmetric_reduction_check() -> anyhow::Result<Verdict> {
    let g = make_grid(201, 3)?;
    let newton = NewtonOptions::default();
    let red = symmetric_reduction(0.05, &g, &newton)?;
    let fold = diagonal_fold(&g, &newton, 0.01, 1e-7)?.lambda_star;
    let predicted = find_lambda_star().lambda_star / 8.0;
    let rel = (fold - predicted).abs() / predicted;
    Ok((
        red.max_profile_error <= 1e-6 && red.max_mirror_error <= 1e-6 && rel <= 0.01,
        format!(
            "profile error {:.3e}, mirror error {:.3e}; diagonal fold {fold:.6} vs {predicted:.6} (rel {rel:.2e})",
            red.max_profile_error, red.max_mirror_error
        ),
    ))
}

fn limits_outputs(dir: &Path, workers: usize) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let cfg = LimitsConfig {
        nx: 33,
        nz: 33,
        workers,
        ..Default::default()
    };
    cmd_limits(&cfg, dir)?;
    let mut files = Vec::new();
    for name in ["limits.csv", "slopes.json", "limits.gp"] {
        files.push((name.to_string(), fs::read(dir.join(name))?));
    }
    Ok(files)
}

fn determinism() -> anyhow::Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let runs = [1usize, 1, 4, 4]
        .iter()
        .enumerate()
        .map(|(k, &w)| limits_outputs(&tmp.path().join(format!("run{k}")), w))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let identical = runs.iter().all(|r| r == &runs[0]);
    let rows = String::from_utf8_lossy(&runs[0][0].1).lines().count() - 1;
    Ok((
        identical,
        format!("4 runs (workers 1, 1, 4, 4), {rows} rows; outputs byte-identical: {identical}"),
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, verdict: anyhow::Result<Verdict>| {
        let (ok, detail) = verdict.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        failed += usize::from(!ok);
        println!("[{}] {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };
    report(1, "trivial-voltage exactness", trivial_voltage());
    report(2, "manufactured elliptic convergence", manufactured_convergence());
    report(3, "maximum principle", maximum_principle());
    report(4, "trace bounds", trace_bounds());
    report(5, "existence invariants", existence_invariants());
    match limit_sweep() {
        Ok((rep, secs)) => {
            report(6, "eps scaling of psi", Ok(scaling(&rep, secs)));
            report(7, "convergence to the small-gap limit", Ok(convergence(&rep)));
        }
        Err(e) => {
            report(6, "eps scaling of psi", Err(e));
            report(7, "convergence to the small-gap limit", Err(anyhow::anyhow!("sweep failed")));
        }
    }
    report(8, "oracle identity", oracle_identity());
    report(9, "fold consistency", lambda_star_consistency());
    report(10, "symmetric reduction", symmetric_reduction_check());
    report(11, "determinism", determinism());
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
