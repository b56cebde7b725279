//! Acceptance checks. Every test prints one `PASS` or `FAIL` line (written
//! straight to stdout so it shows even when output is captured) and then
//! asserts the same condition.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use apfv::config::{CaseName, ConvergenceConfig, RunConfig, StudyMode};
use apfv::run::{simulate_with, StepRecord};
use apfv::{simulate, study, RunRecord};
use apfv_core::stepper::{Scheme, SchemeParams, State};
use apfv_core::{CellField, CellVectorField, StructuredMesh, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONSERVATION_TOL: f64 = 1e-12;
const ENERGY_SLACK: f64 = 1e-12;
const REMAINDER_FLOOR: f64 = -1e-14;
const IDENTITY_TOL: f64 = 1e-10;
const FIXED_EPS_MIN_EOC: f64 = 0.5;
const RHO_EOC_RANGE: (f64, f64) = (1.5, 2.5);
const U_MIN_EOC: f64 = 0.3;
const DEVIATION_RATIO_MAX: f64 = 10.0;
const KE_BAND: f64 = 0.05;
const SOLVER_ORACLE_TOL: f64 = 1e-8;
const SBP_TOL: f64 = 1e-12;
const MACH_LIST: [f64; 4] = [1.0, 1e-1, 1e-2, 1e-3];

fn verdict(criterion: u32, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let line = format!("{tag} criterion {criterion:>2} ({name}): {detail}\n");
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn vortex_config(n: usize, eps: f64, final_time: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.case.name = CaseName::Vortex;
    c.mesh.nx = n;
    c.mesh.ny = n;
    c.physics.gamma = 2.0;
    c.physics.eps = eps;
    c.physics.final_time = final_time;
    c
}

/// Vortex, eps = 1, 64x64, T = 0.1 (shared by several criteria).
fn main_run() -> &'static RunRecord {
    static RUN: OnceLock<RunRecord> = OnceLock::new();
    RUN.get_or_init(|| simulate(&vortex_config(64, 1.0, 0.1)).expect("eps = 1 run"))
}

/// Vortex, eps = 1e-2, 32x32, T = 0.1.
fn low_mach_run() -> &'static RunRecord {
    static RUN: OnceLock<RunRecord> = OnceLock::new();
    RUN.get_or_init(|| simulate(&vortex_config(32, 1e-2, 0.1)).expect("eps = 1e-2 run"))
}

/// Vortex on 64x64 to T = 0.1 for each eps in `MACH_LIST`.
fn mach_sweep() -> &'static Vec<RunRecord> {
    static RUNS: OnceLock<Vec<RunRecord>> = OnceLock::new();
    RUNS.get_or_init(|| {
        std::thread::scope(|s| {
            let handles: Vec<_> = MACH_LIST[1..]
                .iter()
                .map(|&eps| s.spawn(move || simulate(&vortex_config(64, eps, 0.1)).expect("sweep run")))
                .collect();
            let mut runs = vec![main_run().clone()];
            runs.extend(handles.into_iter().map(|h| h.join().unwrap()));
            runs
        })
    })
}

fn worst(steps: &[StepRecord], f: impl Fn(&StepRecord) -> f64) -> (f64, usize) {
    steps
        .iter()
        .map(|s| (f(s), s.diagnostics.step_index))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
}

#[test]
fn criterion_01_conservation() {
    let run = main_run();
    let (mass, ms) = worst(&run.steps, |s| s.mass_drift);
    let (mom, ps) = worst(&run.steps, |s| s.momentum_drift);
    let ok = !run.steps.is_empty() && mass <= CONSERVATION_TOL && mom <= CONSERVATION_TOL;
    verdict(
        1,
        "conservation",
        ok,
        &format!(
            "{} steps; max mass drift {mass:.2e} (step {ms}), max momentum drift {mom:.2e} (step {ps}), limit {CONSERVATION_TOL:e}",
            run.steps.len()
        ),
    );
}

/// Column `name` of a diagnostics CSV written by the binary.
fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|&h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

fn run_binary_with_assertions(dir: &Path, n: usize, eps: f64) -> (bool, String) {
    let cfg = vortex_config(n, eps, 0.1);
    let cfg_path = dir.join(format!("run_{n}.toml"));
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let out_dir = dir.join(format!("out_{n}"));
    let status = Command::new(env!("CARGO_BIN_EXE_apfv"))
        .args(["run", "--assert-inequalities", "--config"])
        .arg(&cfg_path)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    if !status.status.success() {
        return (
            false,
            format!(
                "eps {eps:e} {n}^2: exit {:?}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr).trim()
            ),
        );
    }
    let text = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let energy: Vec<f64> = csv_column(&text, "total_energy").iter().map(|v| v.parse().unwrap()).collect();
    let mut bad_energy = 0;
    for w in energy.windows(2) {
        if w[1] > w[0] + ENERGY_SLACK * w[0].abs() {
            bad_energy += 1;
        }
    }
    let mut bad_flags = 0;
    for flag in ["eta_ok", "flux_ok", "volume_ok"] {
        bad_flags += csv_column(&text, flag).iter().skip(1).filter(|v| v.as_str() != "1").count();
    }
    (
        bad_energy == 0 && bad_flags == 0,
        format!(
            "eps {eps:e} {n}^2: exit 0, {} steps, {bad_energy} energy increases, {bad_flags} violated condition flags",
            energy.len() - 1
        ),
    )
}

#[test]
fn criterion_02_energy_stability() {
    let dir = tempfile::tempdir().unwrap();
    let (ok1, d1) = run_binary_with_assertions(dir.path(), 64, 1.0);
    let (ok2, d2) = run_binary_with_assertions(dir.path(), 32, 1e-2);
    // In-process cross-check on the cancellation-free decrements.
    let mut inproc = 0;
    for run in [main_run(), low_mach_run()] {
        for s in &run.steps {
            let d = &s.diagnostics;
            if !d.conditions.all() || d.energy_decrement < -ENERGY_SLACK * s.energy_before.abs() {
                inproc += 1;
            }
        }
    }
    verdict(
        2,
        "energy stability",
        ok1 && ok2 && inproc == 0,
        &format!("{d1}; {d2}; in-process violations {inproc}"),
    );
}

#[test]
fn criterion_03_entropy_stability() {
    let mut details = Vec::new();
    let mut ok = true;
    for (label, run) in [("eps 1 64^2", main_run()), ("eps 1e-2 32^2", low_mach_run())] {
        let bad = run
            .steps
            .iter()
            .filter(|s| s.diagnostics.entropy_decrement < -ENERGY_SLACK * s.entropy_before.abs())
            .count();
        let (worst_rel, _) = worst(&run.steps, |s| -s.diagnostics.entropy_decrement / s.entropy_before.abs());
        ok &= bad == 0 && !run.steps.is_empty();
        details.push(format!("{label}: {bad} increases (worst relative change {worst_rel:.2e})"));
    }
    verdict(3, "entropy stability", ok, &details.join("; "));
}

#[test]
fn criterion_04_positivity() {
    let mut min_all = f64::INFINITY;
    let mut count = 0;
    let runs: Vec<&RunRecord> = [main_run(), low_mach_run()]
        .into_iter()
        .chain(mach_sweep().iter())
        .collect();
    for run in &runs {
        min_all = min_all.min(run.initial.rho.min());
        for s in &run.steps {
            min_all = min_all.min(s.diagnostics.min_density);
            count += 1;
        }
    }
    verdict(
        4,
        "positivity",
        min_all > 0.0 && count > 0,
        &format!("{} runs, {count} steps, smallest density {min_all:.6}", runs.len()),
    );
}

#[test]
fn criterion_05_energy_balance_audit() {
    let mut ok = true;
    let mut details = Vec::new();
    for (label, run, seed) in [("eps 1 64^2", main_run(), 11u64), ("eps 1e-2 32^2", low_mach_run(), 12)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = Vec::new();
        while picks.len() < 10.min(run.steps.len()) {
            let i = rng.random_range(0..run.steps.len());
            if !picks.contains(&i) {
                picks.push(i);
            }
        }
        picks.sort_unstable();
        let mut min_rem = f64::INFINITY;
        let mut max_id: f64 = 0.0;
        for &i in &picks {
            let a = &run.steps[i].audit;
            min_rem = min_rem.min(a.min_remainder);
            max_id = max_id.max(a.relative_identity_error());
        }
        ok &= picks.len() == 10 && min_rem >= REMAINDER_FLOOR && max_id <= IDENTITY_TOL;
        let steps: Vec<usize> = picks.iter().map(|&i| run.steps[i].diagnostics.step_index).collect();
        details.push(format!(
            "{label} steps {steps:?}: min cell remainder {min_rem:.2e}, max balance mismatch {max_id:.2e}"
        ));
    }
    verdict(5, "energy balance audit", ok, &details.join("; "));
}

#[test]
fn criterion_06_fixed_eps_convergence() {
    let mut cfg = ConvergenceConfig::default();
    cfg.study.mode = StudyMode::FixedEps;
    cfg.study.grids = vec![8, 16, 32];
    cfg.study.reference = Some(64);
    cfg.study.eps = vec![1.0];
    cfg.study.gamma = 2.0;
    cfg.study.final_time = 0.1;
    let (table, _) = study(&cfg, 2).unwrap();
    let (err, rates) = table.column("err_m").unwrap();
    let finest_rate = rates[2].unwrap_or(f64::NAN);
    let ok = err[2] < err[1] && finest_rate >= FIXED_EPS_MIN_EOC;
    verdict(
        6,
        "fixed-eps convergence",
        ok,
        &format!(
            "L2 momentum errors {:.3e}, {:.3e}, {:.3e} on 8, 16, 32 against 64; finest EOC {finest_rate:.3} (need >= {FIXED_EPS_MIN_EOC})",
            err[0], err[1], err[2]
        ),
    );
}

#[test]
fn criterion_07_asymptotic_convergence() {
    let mut ok = true;
    let mut details = Vec::new();
    for gamma in [2.0, 1.4] {
        let mut cfg = ConvergenceConfig::default();
        cfg.study.mode = StudyMode::EpsEqualsH;
        cfg.study.grids = vec![8, 16, 32, 64];
        cfg.study.reference = None;
        cfg.study.gamma = gamma;
        cfg.study.final_time = 0.1;
        let (table, _) = study(&cfg, 2).unwrap();
        let (_, rho_rates) = table.column("e_rho_inf2").unwrap();
        let (u_err, u_rates) = table.column("e_u_inf2").unwrap();
        let rho_rate = rho_rates[3].unwrap_or(f64::NAN);
        let u_rate = u_rates[3].unwrap_or(f64::NAN);
        let u_decreasing = u_err.windows(2).all(|w| w[1] < w[0]);
        ok &= (RHO_EOC_RANGE.0..=RHO_EOC_RANGE.1).contains(&rho_rate) && u_decreasing && u_rate >= U_MIN_EOC;
        details.push(format!(
            "gamma {gamma}: rho EOC {rho_rate:.3}, u errors {:?} decreasing {u_decreasing}, u EOC {u_rate:.3}",
            u_err.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ));
    }
    verdict(7, "eps = h convergence", ok, &details.join("; "));
}

#[test]
fn criterion_08_uniform_density_deviation() {
    let sups: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = MACH_LIST
            .iter()
            .map(|&eps| {
                s.spawn(move || {
                    let mesh = StructuredMesh::unit_square(32).unwrap();
                    let dev = |rho: &CellField| {
                        let d = CellField::from_fn(rho.len(), |k| rho[k] - 1.0);
                        mesh.l2_norm(&d)
                    };
                    let mut sup: f64 = 0.0;
                    let run = simulate_with(&vortex_config(32, eps, 0.05), |_, state| {
                        sup = sup.max(dev(&state.rho));
                        Ok(())
                    })
                    .unwrap();
                    sup = sup.max(dev(&run.initial.rho));
                    sup / eps
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let max = sups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sups.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    verdict(
        8,
        "uniform density deviation",
        ratio <= DEVIATION_RATIO_MAX,
        &format!(
            "sup ||rho - 1|| / eps = {:?} for eps {MACH_LIST:?}; max/min {ratio:.3e} (limit {DEVIATION_RATIO_MAX})",
            sups.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
        ),
    );
}

fn interpolate(series: &[(f64, f64)], t: f64) -> f64 {
    let i = series.partition_point(|&(s, _)| s < t);
    if i == 0 {
        return series[0].1;
    }
    if i >= series.len() {
        return series[series.len() - 1].1;
    }
    let ((t0, v0), (t1, v1)) = (series[i - 1], series[i]);
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

#[test]
fn criterion_09_mach_independent_dissipation() {
    let runs = mach_sweep();
    let curves: Vec<Vec<(f64, f64)>> = runs.iter().map(|r| r.ke_series()).collect();
    let times: Vec<f64> = (0..=10).map(|j| 0.01 * j as f64).collect();
    let mut gap: f64 = 0.0;
    let mut at = 0.0;
    for &t in &times {
        let vals: Vec<f64> = curves.iter().map(|c| interpolate(c, t)).collect();
        for a in 0..vals.len() {
            for b in a + 1..vals.len() {
                let g = (vals[a] - vals[b]).abs();
                if g > gap {
                    gap = g;
                    at = t;
                }
            }
        }
    }
    let finals: Vec<String> = curves.iter().map(|c| format!("{:.4}", c.last().unwrap().1)).collect();
    verdict(
        9,
        "Mach-independent dissipation",
        gap <= KE_BAND,
        &format!("final KE ratios {finals:?} for eps {MACH_LIST:?}; largest pairwise gap {gap:.4} at t = {at:.2} (limit {KE_BAND})"),
    );
}

/// Mass balance residual written cell by cell from the face formulas:
/// stabilised normal velocity, its upwind split, the donor-cell density flux
/// and the unit-scaled density jump.
#[allow(clippy::too_many_arguments)]
fn face_loop_residual(
    n: usize,
    gamma: f64,
    eps: f64,
    eta: f64,
    dt: f64,
    rho_n: &[f64],
    u: &[Vec2],
    rho: &[f64],
) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let cell = |i: usize, j: usize| (i % n) + n * (j % n);
    let p = |r: f64| r.powf(gamma);
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let k = cell(i, j);
            let mut acc = (rho[k] - rho_n[k]) / dt;
            for (l, normal) in [
                (cell(i + 1, j), Vec2::new(1.0, 0.0)),
                (cell(i + n - 1, j), Vec2::new(-1.0, 0.0)),
                (cell(i, j + 1), Vec2::new(0.0, 1.0)),
                (cell(i, j + n - 1), Vec2::new(0.0, -1.0)),
            ] {
                let un = ((u[k] + u[l]) * 0.5).dot(normal);
                // |sigma| / |D_sigma| = h / h^2 on a uniform square mesh.
                let du = eta * dt / (eps * eps) / h * (p(rho[l]) - p(rho[k]));
                let w_plus = un.max(0.0) - du.min(0.0);
                let w_minus = un.min(0.0) - du.max(0.0);
                let flux = rho[k] * w_plus + rho[l] * w_minus - (rho[l] - rho[k]);
                acc += flux / h;
            }
            out[k] = acc;
        }
    }
    out
}

/// Newton with a central-difference Jacobian and dense partial pivoting.
fn dense_newton(res: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    for _ in 0..60 {
        let r = res(&x);
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-12 {
            break;
        }
        let mut a = vec![vec![0.0; n + 1]; n];
        for c in 0..n {
            let step = 1e-7 * x[c].max(1e-3);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[c] += step;
            xm[c] -= step;
            let (rp, rm) = (res(&xp), res(&xm));
            for row in 0..n {
                a[row][c] = (rp[row] - rm[row]) / (2.0 * step);
            }
        }
        for row in 0..n {
            a[row][n] = -r[row];
        }
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for c in k..=n {
                    a[i][c] -= f * a[k][c];
                }
            }
        }
        let mut d = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| a[i][c] * d[c]).sum();
            d[i] = (a[i][n] - s) / a[i][i];
        }
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
    }
    x
}

#[test]
fn criterion_10_solver_oracle() {
    let n = 4;
    let mesh = StructuredMesh::unit_square(n).unwrap();
    let mut worst_diff: f64 = 0.0;
    let mut newton_total = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let eps = [1.0, 0.5, 0.1, 0.05][seed as usize % 4];
        let gamma = [2.0, 1.4][seed as usize % 2];
        let scheme = Scheme::new(
            mesh.clone(),
            SchemeParams {
                gamma,
                eps,
                ..Default::default()
            },
        )
        .unwrap();
        let state = State::new(
            CellField::from_fn(n * n, |_| rng.random_range(0.3..2.0)),
            CellVectorField::from_fn(n * n, |_| Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))),
        )
        .unwrap();
        let eta = scheme.initial_eta(&state);
        let dt = rng.random_range(0.002..0.02);
        let solve = scheme.solve_density(&state, dt, eta).unwrap();
        newton_total += solve.iterations;
        let rho_n = state.rho.as_slice().to_vec();
        let u = state.u.as_slice().to_vec();
        let oracle = dense_newton(|x| face_loop_residual(n, gamma, eps, eta, dt, &rho_n, &u, x), &rho_n);
        for k in 0..n * n {
            worst_diff = worst_diff.max((solve.rho[k] - oracle[k]).abs());
        }
    }
    verdict(
        10,
        "density solve vs dense oracle",
        worst_diff <= SOLVER_ORACLE_TOL,
        &format!("20 seeds on 4x4, {newton_total} Newton iterations; max |difference| {worst_diff:.2e} (limit {SOLVER_ORACLE_TOL:e})"),
    );
}

#[test]
fn criterion_11_summation_by_parts() {
    let mesh = StructuredMesh::unit_square(8).unwrap();
    let n = mesh.cell_count();
    let vol = mesh.cell_volume();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_cell: f64 = 0.0;
    let mut worst_face: f64 = 0.0;
    for _ in 0..1000 {
        let q = CellField::from_fn(n, |_| rng.random_range(-1.0..1.0));
        let phi = CellVectorField::from_fn(n, |_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        // Cell form: (q, div phi) + (grad q, phi) = 0.
        let div = mesh.cell_divergence(&phi);
        let grad = mesh.cell_gradient(&q);
        let (mut lhs, mut rhs, mut scale) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let a = vol * q[k] * div[k];
            let b = vol * grad[k].dot(phi[k]);
            lhs += a;
            rhs += b;
            scale += a.abs() + b.abs();
        }
        worst_cell = worst_cell.max((lhs + rhs).abs() / scale);

        // Face form: sum_K q_K sum_{sigma in K} |sigma| F n = -sum_sigma |sigma| [[q]] F.
        let flux: Vec<f64> = (0..mesh.face_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jump = mesh.face_jump(&q);
        let (mut cells, mut faces, mut fscale) = (0.0, 0.0, 0.0);
        for k in 0..n {
            for (s, sign) in mesh.cell_faces(k) {
                let t = q[k] * mesh.face_measure(mesh.faces()[s].axis) * sign * flux[s];
                cells += t;
                fscale += t.abs();
            }
        }
        for (s, f) in mesh.faces().iter().enumerate() {
            faces += mesh.face_measure(f.axis) * jump[s] * flux[s];
        }
        worst_face = worst_face.max((cells + faces).abs() / fscale);
    }
    verdict(
        11,
        "summation by parts",
        worst_cell <= SBP_TOL && worst_face <= SBP_TOL,
        &format!("1000 random pairs on 8x8; worst relative defect {worst_cell:.2e} (cell form), {worst_face:.2e} (face form), limit {SBP_TOL:e}"),
    );
}
