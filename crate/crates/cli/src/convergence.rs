//! Grid convergence studies.
//!
//! Fixed-eps mode compares each study grid with a finer reference run,
//! restricted by cell-block averaging. The `eps = h` mode measures the
//! distance of each run to the exact incompressible vortex.

use std::path::PathBuf;
use std::thread;

use apfv_core::cases::vortex_incompressible_exact;
use apfv_core::diagnostics::{eoc, ErrorAccumulator, ErrorReport};
use apfv_core::stepper::State;
use apfv_core::{CellField, StructuredMesh};

use crate::config::{ConvergenceConfig, MeshSection, OutputSection, PhysicsSection, RunConfig, StudyMode};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, write_file, Csv};
use crate::run::{build_scheme, diagnostics_row, initial_row, simulate_with, DIAGNOSTICS_HEADER};

/// Error names of the fixed-eps table: density, the two momentum
/// components and the momentum vector, all `L^2` at the final time.
pub const FIXED_EPS_ERRORS: [&str; 4] = ["err_rho", "err_m1", "err_m2", "err_m"];

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub n: usize,
    pub h: f64,
    pub errors: Vec<f64>,
    /// Rate against the previous (coarser) row of the same `eps`; `None` on
    /// the coarsest grid.
    pub eocs: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub mode: StudyMode,
    pub error_names: Vec<&'static str>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Rows of one `eps` value (all rows in `eps = h` mode).
    pub fn rows_for(&self, eps: f64) -> Vec<&ConvergenceRow> {
        match self.mode {
            StudyMode::EpsEqualsH => self.rows.iter().collect(),
            StudyMode::FixedEps => self.rows.iter().filter(|r| r.eps == eps).collect(),
        }
    }

    /// Column of error `name` and its rates, in row order.
    pub fn column(&self, name: &str) -> Option<(Vec<f64>, Vec<Option<f64>>)> {
        let i = self.error_names.iter().position(|&n| n == name)?;
        Some((
            self.rows.iter().map(|r| r.errors[i]).collect(),
            self.rows.iter().map(|r| r.eocs[i]).collect(),
        ))
    }

    /// CSV with error/EOC column pairs; EOC columns are left out when there
    /// is a single grid.
    pub fn to_csv(&self, hash: &str, with_eoc: bool) -> Csv {
        let mut header: Vec<String> = vec!["eps".into(), "n".into(), "h".into()];
        for name in &self.error_names {
            header.push(name.to_string());
            if with_eoc {
                header.push(format!("eoc_{name}"));
            }
        }
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut csv = Csv::new(hash, &header_refs);
        for r in &self.rows {
            let mut row = vec![fmt_f64(r.eps), r.n.to_string(), fmt_f64(r.h)];
            for (e, rate) in r.errors.iter().zip(&r.eocs) {
                row.push(fmt_f64(*e));
                if with_eoc {
                    row.push(rate.map(fmt_f64).unwrap_or_default());
                }
            }
            csv.row(&row);
        }
        csv
    }
}

#[derive(Clone, Debug)]
struct Job {
    n: usize,
    eps: f64,
    /// Index of `eps` in the study list (0 in `eps = h` mode).
    eps_index: usize,
    track_limit_errors: bool,
}

/// Final state, limit errors and per-step diagnostics of one job.
#[derive(Clone, Debug)]
pub struct JobOutput {
    pub n: usize,
    pub eps: f64,
    pub final_state: State,
    pub limit_errors: Option<ErrorReport>,
    pub steps: usize,
    diagnostics: Csv,
    subdir: String,
}

fn job_config(cfg: &ConvergenceConfig, job: &Job) -> RunConfig {
    RunConfig {
        case: cfg.case.clone(),
        mesh: MeshSection {
            nx: job.n,
            ny: job.n,
            lx: 1.0,
            ly: 1.0,
        },
        physics: PhysicsSection {
            gamma: cfg.study.gamma,
            eps: job.eps,
            final_time: cfg.study.final_time,
            max_steps: cfg.study.max_steps,
        },
        scheme: cfg.scheme.clone(),
        output: OutputSection::default(),
        perturbation: cfg.perturbation.clone(),
    }
}

fn run_job(cfg: &ConvergenceConfig, job: &Job, hash: &str) -> CliResult<JobOutput> {
    let rc = job_config(cfg, job);
    let mesh = StructuredMesh::unit_square(job.n).map_err(|e| CliError::config("<config>", e.to_string()))?;
    let gas = apfv_core::eos::GasLaw::new(rc.physics.gamma).map_err(|e| CliError::config("<config>", e.to_string()))?;
    let (v, _) = vortex_incompressible_exact(&mesh, &cfg.case.vortex(), 0.0, cfg.case.quadrature.into());
    let mut acc = ErrorAccumulator::new();
    let mut diagnostics = Csv::new(hash, &DIAGNOSTICS_HEADER);
    let eps = job.eps;
    let (_, init) = build_scheme(&rc)?;
    let solver = |step| move |source| CliError::Solver { step, source };
    let e0 = apfv_core::diagnostics::EnergyReport::compute(&mesh, &gas, eps, &init.rho, &init.u).map_err(solver(0))?;
    diagnostics.row(&initial_row(&mesh, &init, &e0));
    if job.track_limit_errors {
        acc.record(&mesh, &gas, eps, init.time, &init.rho, &init.u, &v)
            .map_err(solver(0))?;
    }
    let record = simulate_with(&rc, |rec, state| {
        diagnostics.row(&diagnostics_row(rec));
        if job.track_limit_errors {
            acc.record(&mesh, &gas, eps, state.time, &state.rho, &state.u, &v)
                .map_err(solver(state.step_index))?;
        }
        Ok(())
    })?;
    Ok(JobOutput {
        n: job.n,
        eps,
        steps: record.steps.len(),
        final_state: record.final_state,
        limit_errors: job.track_limit_errors.then(|| acc.report()),
        diagnostics,
        subdir: format!("n{}_eps{}", job.n, job.eps_index),
    })
}

fn jobs(cfg: &ConvergenceConfig) -> Vec<Job> {
    let s = &cfg.study;
    match s.mode {
        StudyMode::EpsEqualsH => s
            .grids
            .iter()
            .map(|&n| Job {
                n,
                eps: 1.0 / n as f64,
                eps_index: 0,
                track_limit_errors: true,
            })
            .collect(),
        StudyMode::FixedEps => {
            let reference = s.reference.expect("validated reference grid");
            let mut out = Vec::new();
            for (i, &eps) in s.eps.iter().enumerate() {
                for &n in s.grids.iter().chain(std::iter::once(&reference)) {
                    out.push(Job {
                        n,
                        eps,
                        eps_index: i,
                        track_limit_errors: false,
                    });
                }
            }
            out
        }
    }
}

/// Runs every job on up to `threads` workers. Job `i` goes to worker
/// `i % threads`, and results are reassembled in job order, so the output
/// does not depend on scheduling.
fn run_jobs(cfg: &ConvergenceConfig, jobs: &[Job], threads: usize, hash: &str) -> CliResult<Vec<JobOutput>> {
    let threads = threads.clamp(1, jobs.len().max(1));
    let mut slots: Vec<Option<CliResult<JobOutput>>> = (0..jobs.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                scope.spawn(move || {
                    (w..jobs.len())
                        .step_by(threads)
                        .map(|i| (i, run_job(cfg, &jobs[i], hash)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("convergence worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every job ran")).collect()
}

fn l2_diff(mesh: &StructuredMesh, a: &CellField, b: &CellField) -> f64 {
    let d = CellField::from_fn(a.len(), |k| a[k] - b[k]);
    mesh.l2_norm(&d)
}

fn momentum_components(s: &State) -> (CellField, CellField) {
    (
        CellField::from_fn(s.rho.len(), |k| s.rho[k] * s.u[k].x),
        CellField::from_fn(s.rho.len(), |k| s.rho[k] * s.u[k].y),
    )
}

fn with_rates(mut rows: Vec<ConvergenceRow>) -> Vec<ConvergenceRow> {
    let cols = rows.first().map_or(0, |r| r.errors.len());
    for c in 0..cols {
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.errors[c])).collect();
        let rates = eoc(&pairs);
        for (i, r) in rows.iter_mut().enumerate() {
            r.eocs[c] = if i == 0 { None } else { rates[i - 1] };
        }
    }
    rows
}

fn tabulate(cfg: &ConvergenceConfig, outputs: &[JobOutput]) -> CliResult<ConvergenceTable> {
    let s = &cfg.study;
    match s.mode {
        StudyMode::EpsEqualsH => {
            let rows = outputs
                .iter()
                .map(|o| {
                    let errors = o.limit_errors.expect("tracked").as_array().to_vec();
                    ConvergenceRow {
                        eps: o.eps,
                        n: o.n,
                        h: 1.0 / o.n as f64,
                        eocs: vec![None; errors.len()],
                        errors,
                    }
                })
                .collect();
            Ok(ConvergenceTable {
                mode: s.mode,
                error_names: ErrorReport::NAMES.to_vec(),
                rows: with_rates(rows),
            })
        }
        StudyMode::FixedEps => {
            let reference = s.reference.expect("validated reference grid");
            let fine_mesh = StructuredMesh::unit_square(reference).map_err(|e| CliError::config("<config>", e.to_string()))?;
            let mut all = Vec::new();
            for &eps in &s.eps {
                let of_eps: Vec<&JobOutput> = outputs.iter().filter(|o| o.eps == eps).collect();
                let fine = of_eps.iter().find(|o| o.n == reference).expect("reference job");
                let (fm1, fm2) = momentum_components(&fine.final_state);
                let mut rows = Vec::new();
                for o in of_eps.iter().filter(|o| o.n != reference) {
                    let mesh = StructuredMesh::unit_square(o.n).map_err(|e| CliError::config("<config>", e.to_string()))?;
                    let restrict = |f: &CellField| {
                        mesh.restrict_from(&fine_mesh, f)
                            .map_err(|e| CliError::config("<config>", e.to_string()))
                    };
                    let r_rho = restrict(&fine.final_state.rho)?;
                    let (r1, r2) = (restrict(&fm1)?, restrict(&fm2)?);
                    let (m1, m2) = momentum_components(&o.final_state);
                    let e_rho = l2_diff(&mesh, &o.final_state.rho, &r_rho);
                    let e1 = l2_diff(&mesh, &m1, &r1);
                    let e2 = l2_diff(&mesh, &m2, &r2);
                    let errors = vec![e_rho, e1, e2, (e1 * e1 + e2 * e2).sqrt()];
                    rows.push(ConvergenceRow {
                        eps,
                        n: o.n,
                        h: 1.0 / o.n as f64,
                        eocs: vec![None; errors.len()],
                        errors,
                    });
                }
                all.extend(with_rates(rows));
            }
            Ok(ConvergenceTable {
                mode: s.mode,
                error_names: FIXED_EPS_ERRORS.to_vec(),
                rows: all,
            })
        }
    }
}

/// Runs the study in memory on up to `threads` workers.
pub fn study(cfg: &ConvergenceConfig, threads: usize) -> CliResult<(ConvergenceTable, Vec<JobOutput>)> {
    cfg.validate()?;
    let hash = cfg.hash();
    let jobs = jobs(cfg);
    let outputs = run_jobs(cfg, &jobs, threads, &hash)?;
    let table = tabulate(cfg, &outputs)?;
    Ok((table, outputs))
}

#[derive(Clone, Debug, Default)]
pub struct ConvergenceOptions {
    pub output: Option<PathBuf>,
    pub threads: usize,
    pub seed: Option<u64>,
}

/// Runs the study and writes `config.toml`, `convergence.csv` and one
/// `runs/n<grid>_eps<index>/diagnostics.csv` per job.
pub fn convergence(cfg: &ConvergenceConfig, opts: &ConvergenceOptions) -> CliResult<ConvergenceTable> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.perturbation.seed = seed;
    }
    if let Some(dir) = &opts.output {
        cfg.output.directory = dir.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.output.directory);
    cfg.validate()?;
    write_file(&dir.join("config.toml"), &cfg.to_toml())?;
    let (table, outputs) = study(&cfg, opts.threads.max(1))?;
    let hash = cfg.hash();
    for o in &outputs {
        o.diagnostics.write(&dir.join("runs").join(&o.subdir).join("diagnostics.csv"))?;
    }
    table
        .to_csv(&hash, cfg.study.grids.len() > 1)
        .write(&dir.join("convergence.csv"))?;
    Ok(table)
}
