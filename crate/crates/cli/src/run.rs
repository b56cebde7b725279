//! Single runs: time loop, per-step checks and file output.

use std::path::{Path, PathBuf};

use apfv_core::cases::{vortex_compressible_init_with, vortex_incompressible_exact, well_prepared_perturbation};
use apfv_core::diagnostics::{audit_energy_balances, flow_mach, AuditRecord, EnergyReport};
use apfv_core::stepper::{Scheme, State, StepDiagnostics, StepOutcome};
use apfv_core::{StructuredMesh, Vec2};

use crate::config::{CaseName, CaseSection, PerturbationSection, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, snapshot_text, svg_line_chart, write_file, Csv};

/// Relative slack allowed in the per-step energy and entropy decrease.
pub const ENERGY_SLACK: f64 = 1e-12;
/// Lower bound for the cellwise internal-energy remainder.
pub const REMAINDER_FLOOR: f64 = -1e-14;
/// Largest relative mismatch between the recorded energy change and the
/// assembled balance.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Builds the initial state of `case` on `mesh`.
pub fn initial_state(
    case: &CaseSection,
    pert: &PerturbationSection,
    mesh: &StructuredMesh,
    gamma: f64,
    eps: f64,
) -> apfv_core::Result<State> {
    let spec = case.vortex();
    match case.name {
        CaseName::Vortex => vortex_compressible_init_with(mesh, &spec, gamma, eps, case.quadrature.into(), case.profile.into()),
        CaseName::WellPrepared => {
            let (v0, _) = vortex_incompressible_exact(mesh, &spec, 0.0, case.quadrature.into());
            well_prepared_perturbation(mesh, &v0, eps, &pert.perturbation())
        }
    }
}

/// Steps `state` to `final_time`, landing on it exactly, and hands every
/// accepted step to `observe` together with the state it started from.
pub fn integrate(
    scheme: &Scheme,
    mut state: State,
    final_time: f64,
    max_steps: usize,
    mut observe: impl FnMut(&State, &StepOutcome) -> CliResult<()>,
) -> CliResult<State> {
    let first = state.step_index;
    loop {
        let remaining = final_time - state.time;
        if remaining <= 1e-12 * final_time {
            return Ok(state);
        }
        if state.step_index - first >= max_steps {
            return Err(CliError::StepBudget {
                steps: max_steps,
                time: state.time,
            });
        }
        let out = scheme.step_limited(&state, remaining).map_err(|source| CliError::Solver {
            step: state.step_index + 1,
            source,
        })?;
        observe(&state, &out)?;
        state = out.state;
    }
}

/// Everything recorded about one accepted step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub diagnostics: StepDiagnostics,
    pub audit: AuditRecord,
    /// `|M^n - M^0| / M^0`.
    pub mass_drift: f64,
    /// `|m^n - m^0| / sum |K| rho^0 |u^0|`.
    pub momentum_drift: f64,
    pub ke_ratio: f64,
    /// Energy before the step, the scale of the energy slack.
    pub energy_before: f64,
    pub entropy_before: f64,
}

impl StepRecord {
    /// Inequality checks of one step; each failure becomes one message.
    pub fn violations(&self) -> Vec<String> {
        let d = &self.diagnostics;
        let a = &self.audit;
        let mut v = Vec::new();
        let step = d.step_index;
        if !d.conditions.all() {
            v.push(format!(
                "step {step}: stability conditions violated (eta {}, flux {}, volume {})",
                d.conditions.eta_ok, d.conditions.flux_ok, d.conditions.volume_ok
            ));
        }
        if d.energy_decrement < -ENERGY_SLACK * self.energy_before.abs() {
            v.push(format!("step {step}: total energy increased by {:e}", -d.energy_decrement));
        }
        if d.entropy_decrement < -ENERGY_SLACK * self.entropy_before.abs() {
            v.push(format!("step {step}: entropy increased by {:e}", -d.entropy_decrement));
        }
        if !(d.min_density > 0.0) {
            v.push(format!("step {step}: min density {:e}", d.min_density));
        }
        if !(a.min_remainder >= REMAINDER_FLOOR) {
            v.push(format!("step {step}: internal energy remainder {:e}", a.min_remainder));
        }
        if !(a.relative_identity_error() <= IDENTITY_TOL) {
            v.push(format!(
                "step {step}: energy balance mismatch {:e}",
                a.relative_identity_error()
            ));
        }
        v
    }
}

/// In-memory result of a run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub mesh: StructuredMesh,
    pub initial: State,
    pub initial_energy: EnergyReport,
    pub steps: Vec<StepRecord>,
    pub final_state: State,
}

impl RunRecord {
    pub fn violations(&self) -> Vec<String> {
        self.steps.iter().flat_map(|s| s.violations()).collect()
    }

    /// `(t, KE(t)/KE(0))` including `t = 0`.
    pub fn ke_series(&self) -> Vec<(f64, f64)> {
        let mut s = vec![(self.initial.time, 1.0)];
        s.extend(self.steps.iter().map(|r| (r.diagnostics.time, r.ke_ratio)));
        s
    }
}

pub fn build_scheme(config: &RunConfig) -> CliResult<(Scheme, State)> {
    let m = &config.mesh;
    let ph = &config.physics;
    let cfg_err = |e: apfv_core::Error| CliError::config("<config>", e.to_string());
    let mesh = StructuredMesh::new(m.nx, m.ny, m.lx, m.ly).map_err(cfg_err)?;
    let init = initial_state(&config.case, &config.perturbation, &mesh, ph.gamma, ph.eps).map_err(cfg_err)?;
    let scheme = Scheme::new(mesh, config.scheme.params(ph.gamma, ph.eps)).map_err(cfg_err)?;
    Ok((scheme, init))
}

/// Runs `config` without touching the file system. `on_step` sees every
/// accepted step as it is recorded.
pub fn simulate_with(
    config: &RunConfig,
    mut on_step: impl FnMut(&StepRecord, &State) -> CliResult<()>,
) -> CliResult<RunRecord> {
    config.validate()?;
    let (scheme, init) = build_scheme(config)?;
    let mesh = scheme.mesh().clone();
    let gas = *scheme.gas();
    let ph = &config.physics;
    let e0 = EnergyReport::compute(&mesh, &gas, ph.eps, &init.rho, &init.u)
        .map_err(|source| CliError::Solver { step: 0, source })?;
    let mass0 = mesh.integrate(&init.rho);
    let mom0 = momentum(&mesh, &init);
    let mom_scale = (0..mesh.cell_count())
        .map(|k| init.rho[k] * init.u[k].norm())
        .sum::<f64>()
        * mesh.cell_volume();
    let mut steps = Vec::new();
    let mut energy_before = e0.total;
    let mut entropy_before = e0.total_entropy();
    let final_state = integrate(&scheme, init.clone(), ph.final_time, ph.max_steps, |before, out| {
        let step = out.diagnostics.step_index;
        let audit = audit_energy_balances(&mesh, &gas, scheme.params(), before, &out.state, &out.fluxes, out.dt, out.eta)
            .map_err(|source| CliError::Solver { step, source })?;
        let d = &out.diagnostics;
        let rec = StepRecord {
            diagnostics: d.clone(),
            audit,
            mass_drift: (d.total_mass - mass0).abs() / mass0,
            momentum_drift: if mom_scale > 0.0 {
                (d.momentum - mom0).norm() / mom_scale
            } else {
                (d.momentum - mom0).norm()
            },
            ke_ratio: if e0.kinetic > 0.0 { d.kinetic_energy / e0.kinetic } else { 0.0 },
            energy_before,
            entropy_before,
        };
        energy_before = d.total_energy;
        entropy_before = d.total_entropy;
        on_step(&rec, &out.state)?;
        steps.push(rec);
        Ok(())
    })?;
    Ok(RunRecord {
        mesh,
        initial: init,
        initial_energy: e0,
        steps,
        final_state,
    })
}

pub fn simulate(config: &RunConfig) -> CliResult<RunRecord> {
    simulate_with(config, |_, _| Ok(()))
}

fn momentum(mesh: &StructuredMesh, s: &State) -> Vec2 {
    let mut m = Vec2::ZERO;
    for k in 0..mesh.cell_count() {
        m += s.u[k] * s.rho[k];
    }
    m * mesh.cell_volume()
}

/// Command-line overrides of a run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub assert_inequalities: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub steps: usize,
    pub final_time: f64,
    pub ke_ratio: f64,
    pub violations: Vec<String>,
}

pub const DIAGNOSTICS_HEADER: [&str; 24] = [
    "step",
    "time",
    "dt",
    "eta",
    "kinetic_energy",
    "total_energy",
    "total_entropy",
    "energy_decrement",
    "entropy_decrement",
    "mass",
    "mass_drift",
    "momentum_x",
    "momentum_y",
    "momentum_drift",
    "min_density",
    "newton_iters",
    "picard_iters",
    "residual",
    "eta_ok",
    "flux_ok",
    "volume_ok",
    "eta_retries",
    "dt_halvings",
    "ke_ratio",
];

pub const AUDIT_HEADER: [&str; 13] = [
    "step",
    "time",
    "min_remainder",
    "remainder",
    "stabilisation",
    "kinetic_source",
    "solver_term",
    "entropy_rate",
    "energy_rate",
    "identity_error",
    "relative_identity_error",
    "upper_bound",
    "internal_balance_error",
];

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub(crate) fn diagnostics_row(r: &StepRecord) -> Vec<String> {
    let d = &r.diagnostics;
    vec![
        d.step_index.to_string(),
        fmt_f64(d.time),
        fmt_f64(d.dt_used),
        fmt_f64(d.eta),
        fmt_f64(d.kinetic_energy),
        fmt_f64(d.total_energy),
        fmt_f64(d.total_entropy),
        fmt_f64(d.energy_decrement),
        fmt_f64(d.entropy_decrement),
        fmt_f64(d.total_mass),
        fmt_f64(r.mass_drift),
        fmt_f64(d.momentum.x),
        fmt_f64(d.momentum.y),
        fmt_f64(r.momentum_drift),
        fmt_f64(d.min_density),
        d.newton_iters.to_string(),
        d.picard_iters.to_string(),
        fmt_f64(d.final_residual),
        flag(d.conditions.eta_ok),
        flag(d.conditions.flux_ok),
        flag(d.conditions.volume_ok),
        d.eta_retries.to_string(),
        d.dt_halvings.to_string(),
        fmt_f64(r.ke_ratio),
    ]
}

pub(crate) fn initial_row(mesh: &StructuredMesh, s: &State, e: &EnergyReport) -> Vec<String> {
    let m = momentum(mesh, s);
    let mut row = vec![String::new(); DIAGNOSTICS_HEADER.len()];
    row[0] = s.step_index.to_string();
    row[1] = fmt_f64(s.time);
    row[4] = fmt_f64(e.kinetic);
    row[5] = fmt_f64(e.total);
    row[6] = fmt_f64(e.total_entropy());
    row[9] = fmt_f64(mesh.integrate(&s.rho));
    row[10] = fmt_f64(0.0);
    row[11] = fmt_f64(m.x);
    row[12] = fmt_f64(m.y);
    row[13] = fmt_f64(0.0);
    row[14] = fmt_f64(s.rho.min());
    row[23] = fmt_f64(1.0);
    row
}

fn audit_row(r: &StepRecord) -> Vec<String> {
    let a = &r.audit;
    vec![
        r.diagnostics.step_index.to_string(),
        fmt_f64(r.diagnostics.time),
        fmt_f64(a.min_remainder),
        fmt_f64(a.remainder),
        fmt_f64(a.stabilisation),
        fmt_f64(a.kinetic_source),
        fmt_f64(a.solver_term),
        fmt_f64(a.entropy_rate),
        fmt_f64(a.energy_rate),
        fmt_f64(a.identity_error),
        fmt_f64(a.relative_identity_error()),
        fmt_f64(a.upper_bound),
        fmt_f64(a.internal_balance_error),
    ]
}

fn write_snapshots(dir: &Path, mesh: &StructuredMesh, gas: &apfv_core::eos::GasLaw, s: &State) -> CliResult<()> {
    let mach = flow_mach(gas, &s.rho, &s.u).map_err(|source| CliError::Solver {
        step: s.step_index,
        source,
    })?;
    let ux: Vec<f64> = s.u.iter().map(|v| v.x).collect();
    let uy: Vec<f64> = s.u.iter().map(|v| v.y).collect();
    let fields: [(&str, &[f64]); 4] = [
        ("rho", s.rho.as_slice()),
        ("u_x", &ux),
        ("u_y", &uy),
        ("flow_mach", mach.as_slice()),
    ];
    for (name, values) in fields {
        let path = dir.join("fields").join(format!("{name}_{:06}.dat", s.step_index));
        write_file(&path, &snapshot_text(mesh, name, s.step_index, s.time, values))?;
    }
    Ok(())
}

/// Runs `config` and writes `config.toml`, `diagnostics.csv`, `audit.csv`,
/// optional field snapshots and optional SVG charts into the output
/// directory.
pub fn run(config: &RunConfig, opts: &RunOptions) -> CliResult<RunSummary> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.perturbation.seed = seed;
    }
    if let Some(dir) = &opts.output {
        config.output.directory = dir.to_string_lossy().into_owned();
    }
    config.validate()?;
    let dir = PathBuf::from(&config.output.directory);
    let hash = config.hash();
    write_file(&dir.join("config.toml"), &config.to_toml())?;

    let (scheme, init) = build_scheme(&config)?;
    let mesh = scheme.mesh().clone();
    let gas = *scheme.gas();
    let e0 = EnergyReport::compute(&mesh, &gas, config.physics.eps, &init.rho, &init.u)
        .map_err(|source| CliError::Solver { step: 0, source })?;
    let cadence = config.output.cadence;
    let emit_fields = config.output.emit_fields;
    if emit_fields {
        write_snapshots(&dir, &mesh, &gas, &init)?;
    }

    let mut diag = Csv::new(&hash, &DIAGNOSTICS_HEADER);
    diag.row(&initial_row(&mesh, &init, &e0));
    let mut audit = Csv::new(&hash, &AUDIT_HEADER);
    let result = simulate_with(&config, |rec, state| {
        diag.row(&diagnostics_row(rec));
        audit.row(&audit_row(rec));
        if emit_fields && state.step_index % cadence == 0 {
            write_snapshots(&dir, &mesh, &gas, state)?;
        }
        Ok(())
    });
    // Tables are written even when the solver fails part way.
    diag.write(&dir.join("diagnostics.csv"))?;
    audit.write(&dir.join("audit.csv"))?;
    let record = result?;

    if config.output.emit_svg {
        let t0 = record.initial.time;
        let mut energy = vec![(t0, e0.total)];
        let mut entropy = vec![(t0, e0.total_entropy())];
        for s in &record.steps {
            energy.push((s.diagnostics.time, s.diagnostics.total_energy));
            entropy.push((s.diagnostics.time, s.diagnostics.total_entropy));
        }
        write_file(
            &dir.join("energy.svg"),
            &svg_line_chart("Total energy", "time", "energy", &[("total energy", energy)]),
        )?;
        write_file(
            &dir.join("entropy.svg"),
            &svg_line_chart("Total entropy", "time", "entropy", &[("total entropy", entropy)]),
        )?;
        write_file(
            &dir.join("ke_ratio.svg"),
            &svg_line_chart(
                "Relative kinetic energy",
                "time",
                "KE(t)/KE(0)",
                &[("KE ratio", record.ke_series())],
            ),
        )?;
    }

    let violations = record.violations();
    let summary = RunSummary {
        output_dir: dir,
        steps: record.steps.len(),
        final_time: record.final_state.time,
        ke_ratio: record.steps.last().map_or(1.0, |s| s.ke_ratio),
        violations,
    };
    if opts.assert_inequalities && !summary.violations.is_empty() {
        let n = summary.violations.len();
        return Err(CliError::Assertion(format!(
            "{n} violation(s); first: {}",
            summary.violations[0]
        )));
    }
    Ok(summary)
}
