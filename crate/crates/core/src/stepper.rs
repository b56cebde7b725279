//! One time step: implicit density solve, explicit velocity update, and the
//! runtime checks of the stability conditions.
//!
//! The conditions checked after every solve are
//!
//! 1. `eta > 3 {{1 / rho^{n+1}}}_sigma` on every face,
//! 2. `1/4 - dt / rho^n_K sum_sigma |sigma|/|K| |F_{sigma,K}| >= 0` on every cell,
//! 3. `1/3 - dt / rho^{n+1}_K |dK|/|K| > beta` on every cell.

use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::{energy_change, EnergyReport};
use crate::eos::{check_density_field, GasLaw};
use crate::error::{Error, Result};
use crate::field::{CellField, CellVectorField, Vec2};
use crate::flux::{
    assemble_fluxes, mass_flux_scaled, split_normal_velocity, FaceFluxes, FluxSettings,
};
use crate::linalg::{BandedMatrix, GridOrdering};
use crate::math;
use crate::mesh::StructuredMesh;

/// `3d/2` for `d = 2`.
const ETA_FACTOR: f64 = 3.0;
const MAX_ETA_RETRIES: usize = 3;
const MAX_DT_HALVINGS: usize = 8;
const MAX_LINE_SEARCH_HALVINGS: usize = 20;
const STALL_WINDOW: usize = 5;
const STALL_REDUCTION: f64 = 0.9;
const PICARD_SWEEPS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaMode {
    Fixed(f64),
    /// `eta = safety * 3 * max_sigma {{1 / rho^n}}_sigma`, re-checked after
    /// the solve.
    Auto { safety: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeParams {
    pub gamma: f64,
    pub eps: f64,
    pub eta_mode: EtaMode,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub picard_relax: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub beta: f64,
    pub viscous_scale: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            gamma: 2.0,
            eps: 1.0,
            eta_mode: EtaMode::Auto { safety: 1.1 },
            newton_tol: 1e-10,
            newton_max_iter: 50,
            picard_relax: 0.5,
            dt_max: 1e-2,
            cfl_safety: 0.9,
            beta: 0.1,
            viscous_scale: 1.0,
        }
    }
}

fn require(ok: bool, name: &'static str, constraint: &'static str, value: f64) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            constraint,
            value,
        })
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        let g = self.gamma;
        require(g > 1.0 && g.is_finite(), "gamma", "gamma > 1", g)?;
        let e = self.eps;
        require(e > 0.0 && e.is_finite(), "eps", "eps > 0", e)?;
        match self.eta_mode {
            EtaMode::Fixed(v) => require(v > 0.0 && v.is_finite(), "eta", "eta > 0", v)?,
            EtaMode::Auto { safety } => require(
                safety >= 1.0 && safety.is_finite(),
                "eta_safety",
                "eta_safety >= 1",
                safety,
            )?,
        }
        let t = self.newton_tol;
        require(t > 0.0 && t.is_finite(), "newton_tol", "newton_tol > 0", t)?;
        let it = self.newton_max_iter as f64;
        require(it >= 1.0, "newton_max_iter", "newton_max_iter >= 1", it)?;
        let w = self.picard_relax;
        require(w > 0.0 && w <= 1.0, "picard_relax", "0 < picard_relax <= 1", w)?;
        let d = self.dt_max;
        require(d > 0.0 && d.is_finite(), "dt_max", "dt_max > 0", d)?;
        let c = self.cfl_safety;
        require(c > 0.0 && c <= 1.0, "cfl_safety", "0 < cfl_safety <= 1", c)?;
        let b = self.beta;
        require(b > 0.0 && b < 1.0 / 3.0, "beta", "0 < beta < 1/3", b)?;
        let s = self.viscous_scale;
        require(s > 0.0 && s.is_finite(), "viscous_scale", "viscous_scale > 0", s)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub time: f64,
    pub rho: CellField,
    pub u: CellVectorField,
    pub step_index: usize,
}

impl State {
    pub fn new(rho: CellField, u: CellVectorField) -> Result<Self> {
        if rho.len() != u.len() {
            return Err(Error::SizeMismatch {
                expected: rho.len(),
                found: u.len(),
            });
        }
        check_density_field(&rho)?;
        check_velocity_field(&u)?;
        Ok(State {
            time: 0.0,
            rho,
            u,
            step_index: 0,
        })
    }

    pub fn uniform(cells: usize, rho: f64, u: Vec2) -> Result<Self> {
        Self::new(CellField::constant(cells, rho), CellVectorField::constant(cells, u))
    }
}

/// Result of the implicit density solve.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySolve {
    pub rho: CellField,
    /// Newton plus Picard iterations.
    pub iterations: usize,
    pub picard_iterations: usize,
    /// Final `||R||_inf`.
    pub residual: f64,
    /// Tolerance the residual was tested against (the larger of the relative
    /// tolerance and the floating point noise floor of the residual).
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionReport {
    /// Condition 1 and its worst margin `min_sigma (eta - 3 {{1/rho^{n+1}}})`.
    pub eta_ok: bool,
    pub eta_margin: f64,
    /// Condition 2 and `min_K (1/4 - dt/rho^n_K sum |sigma|/|K| |F|)`.
    pub flux_ok: bool,
    pub flux_margin: f64,
    /// Condition 3 and `min_K (1/3 - dt/rho^{n+1}_K |dK|/|K|) - beta`.
    pub volume_ok: bool,
    pub volume_margin: f64,
}

impl ConditionReport {
    pub fn all(&self) -> bool {
        self.eta_ok && self.flux_ok && self.volume_ok
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step_index: usize,
    pub time: f64,
    pub dt_used: f64,
    pub eta: f64,
    pub kinetic_energy: f64,
    pub total_energy: f64,
    /// `sum |K| (rho |u|^2 / 2 + Pi(rho | 1) / eps^2)`.
    pub total_entropy: f64,
    pub total_mass: f64,
    pub momentum: Vec2,
    pub min_density: f64,
    /// Previous minus current; non-negative when the step dissipates.
    pub energy_decrement: f64,
    pub entropy_decrement: f64,
    pub newton_iters: usize,
    pub picard_iters: usize,
    pub final_residual: f64,
    pub conditions: ConditionReport,
    pub eta_retries: usize,
    pub dt_halvings: usize,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    pub diagnostics: StepDiagnostics,
    /// Fluxes of the accepted step, evaluated at `rho^{n+1}` and `u^n`.
    pub fluxes: FaceFluxes,
    pub dt: f64,
    pub eta: f64,
}

/// Mesh, pressure law and parameters of one run.
#[derive(Clone, Debug)]
pub struct Scheme {
    mesh: StructuredMesh,
    gas: GasLaw,
    params: SchemeParams,
    ordering: GridOrdering,
}

/// Per-solve constants for the residual and Jacobian loops.
struct SolveContext<'a> {
    scheme: &'a Scheme,
    rho_n: &'a CellField,
    u_normal: Vec<f64>,
    dt: f64,
    /// `|sigma| / |K|` per axis.
    coef: [f64; 2],
    /// `eta dt / eps^2 |sigma| / |D_sigma|` per axis.
    stab: [f64; 2],
}

fn axis_index(axis: crate::mesh::Axis) -> usize {
    match axis {
        crate::mesh::Axis::X => 0,
        crate::mesh::Axis::Y => 1,
    }
}

impl<'a> SolveContext<'a> {
    fn new(scheme: &'a Scheme, state: &'a State, dt: f64, eta: f64) -> Self {
        let mesh = &scheme.mesh;
        let u_normal = mesh
            .faces()
            .iter()
            .map(|f| f.axis.component((state.u[f.k] + state.u[f.l]) * 0.5))
            .collect();
        let eps2 = scheme.params.eps * scheme.params.eps;
        let vol = mesh.cell_volume();
        let dual = mesh.dual_volume();
        let (mx, my) = (
            mesh.face_measure(crate::mesh::Axis::X),
            mesh.face_measure(crate::mesh::Axis::Y),
        );
        SolveContext {
            scheme,
            rho_n: &state.rho,
            u_normal,
            dt,
            coef: [mx / vol, my / vol],
            stab: [eta * dt / eps2 * mx / dual, eta * dt / eps2 * my / dual],
        }
    }

    fn pressures(&self, rho: &[f64]) -> Vec<f64> {
        rho.iter().map(|&r| self.scheme.gas.p(r)).collect()
    }

    /// Fills `out` with the residual and returns the noise floor
    /// `32 eps_mach max_K (sum of magnitudes entering R_K)`.
    fn residual(&self, rho: &[f64], p: &[f64], out: &mut [f64]) -> f64 {
        let s = self.scheme.params.viscous_scale;
        let dt = self.dt;
        let mut mag: Vec<f64> = Vec::with_capacity(rho.len());
        for k in 0..rho.len() {
            out[k] = (rho[k] - self.rho_n[k]) / dt;
            mag.push((rho[k] + self.rho_n[k]) / dt);
        }
        for (idx, face) in self.scheme.mesh.faces().iter().enumerate() {
            let (k, l) = (face.k, face.l);
            let a = axis_index(face.axis);
            let du = self.stab[a] * (p[l] - p[k]);
            let (wp, wm) = split_normal_velocity(self.u_normal[idx], du);
            let mf = mass_flux_scaled(rho[k], rho[l], wp, wm, s);
            let c = self.coef[a];
            out[k] += c * mf.total;
            out[l] -= c * mf.total;
            let m = c
                * (mf.plus.abs()
                    + mf.minus.abs()
                    + f64::max(rho[k], rho[l]) * self.stab[a] * (p[k] + p[l]));
            mag[k] += m;
            mag[l] += m;
        }
        32.0 * f64::EPSILON * mag.iter().copied().fold(0.0, f64::max)
    }

    /// Semi-smooth Newton Jacobian, or the frozen-velocity Picard matrix
    /// when `picard` is set. Rows and columns follow the grid ordering.
    fn matrix(&self, rho: &[f64], p: &[f64], picard: bool) -> BandedMatrix {
        let ord = &self.scheme.ordering;
        let n = rho.len();
        let mut m = BandedMatrix::zeros(n, ord.bandwidth());
        let s = self.scheme.params.viscous_scale;
        for k in 0..n {
            let r = ord.row(k);
            m.add(r, r, 1.0 / self.dt);
        }
        for (idx, face) in self.scheme.mesh.faces().iter().enumerate() {
            let (k, l) = (face.k, face.l);
            let ax = axis_index(face.axis);
            let c = self.stab[ax];
            let du = c * (p[l] - p[k]);
            let (wp, wm) = split_normal_velocity(self.u_normal[idx], du);
            let mut a = wp + s;
            let mut b = wm - s;
            if !picard {
                let rho_up = if du < 0.0 { rho[k] } else { rho[l] };
                let gas = &self.scheme.gas;
                a += rho_up * c * gas.dp(rho[k]);
                b -= rho_up * c * gas.dp(rho[l]);
            }
            let coef = self.coef[ax];
            let (rk, rl) = (ord.row(k), ord.row(l));
            m.add(rk, rk, coef * a);
            m.add(rk, rl, coef * b);
            m.add(rl, rk, -coef * a);
            m.add(rl, rl, -coef * b);
        }
        m
    }

    fn solve_permuted(&self, m: BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let ord = &self.scheme.ordering;
        let n = rhs.len();
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[ord.row(k)] = rhs[k];
        }
        m.factor()?.solve_in_place(&mut x);
        Ok((0..n).map(|k| x[ord.row(k)]).collect())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

impl Scheme {
    pub fn new(mesh: StructuredMesh, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let gas = GasLaw::new(params.gamma)?;
        let ordering = GridOrdering::new(mesh.nx(), mesh.ny());
        Ok(Scheme {
            mesh,
            gas,
            params,
            ordering,
        })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn gas(&self) -> &GasLaw {
        &self.gas
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    fn check_state(&self, state: &State) -> Result<()> {
        let n = self.mesh.cell_count();
        for len in [state.rho.len(), state.u.len()] {
            if len != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        check_density_field(&state.rho)?;
        check_velocity_field(&state.u)
    }

    /// Residual of the implicit mass balance for the candidate `rho_next`.
    pub fn density_residual(
        &self,
        rho_next: &CellField,
        state: &State,
        dt: f64,
        eta: f64,
    ) -> Result<CellField> {
        self.check_state(state)?;
        if rho_next.len() != self.mesh.cell_count() {
            return Err(Error::SizeMismatch {
                expected: self.mesh.cell_count(),
                found: rho_next.len(),
            });
        }
        check_density_field(rho_next)?;
        let ctx = SolveContext::new(self, state, dt, eta);
        let p = ctx.pressures(rho_next.as_slice());
        let mut out = vec![0.0; rho_next.len()];
        ctx.residual(rho_next.as_slice(), &p, &mut out);
        Ok(CellField::from_vec(out))
    }

    /// Analytic (semi-smooth) Jacobian of [`Scheme::density_residual`] as a
    /// dense row-major matrix in cell ordering. Intended for tests and small
    /// meshes.
    pub fn density_jacobian_dense(
        &self,
        rho_next: &CellField,
        state: &State,
        dt: f64,
        eta: f64,
    ) -> Result<Vec<f64>> {
        self.check_state(state)?;
        check_density_field(rho_next)?;
        let ctx = SolveContext::new(self, state, dt, eta);
        let p = ctx.pressures(rho_next.as_slice());
        let m = ctx.matrix(rho_next.as_slice(), &p, false);
        let n = rho_next.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m.get(self.ordering.row(i), self.ordering.row(j));
            }
        }
        Ok(out)
    }

    /// Damped semi-smooth Newton on the mass balance, with a relaxed Picard
    /// fallback when Newton stalls.
    pub fn solve_density(&self, state: &State, dt: f64, eta: f64) -> Result<DensitySolve> {
        self.check_state(state)?;
        let prm = &self.params;
        let ctx = SolveContext::new(self, state, dt, eta);
        let n = self.mesh.cell_count();
        let mut rho: Vec<f64> = state.rho.as_slice().to_vec();
        let mut p = ctx.pressures(&rho);
        let mut r = vec![0.0; n];
        let mut floor = ctx.residual(&rho, &p, &mut r);
        let mut res = max_abs(&r);
        let rel_tol = prm.newton_tol * f64::max(1.0, state.rho.max_abs());

        let mut history: Vec<f64> = vec![res];
        let mut picard_left = 0usize;
        let mut picard_total = 0usize;
        let mut cand = vec![0.0; n];
        let mut r_cand = vec![0.0; n];
        let mut iterations = 0;

        while res > f64::max(rel_tol, floor) {
            if iterations >= prm.newton_max_iter {
                return Err(Error::NewtonNotConverged {
                    iterations,
                    residual: res,
                });
            }
            iterations += 1;

            if picard_left > 0 {
                picard_left -= 1;
                picard_total += 1;
                let m = ctx.matrix(&rho, &p, true);
                let rhs: Vec<f64> = state.rho.iter().map(|&v| v / dt).collect();
                let target = ctx.solve_permuted(m, &rhs)?;
                let w = prm.picard_relax;
                for k in 0..n {
                    cand[k] = (1.0 - w) * rho[k] + w * target[k];
                }
                if cand.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::PositivityLost { iterations });
                }
                rho.copy_from_slice(&cand);
                p = ctx.pressures(&rho);
                floor = ctx.residual(&rho, &p, &mut r);
                res = max_abs(&r);
                if picard_left == 0 {
                    history.clear();
                }
                history.push(res);
                continue;
            }

            let m = ctx.matrix(&rho, &p, false);
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta = ctx.solve_permuted(m, &neg)?;

            let mut lambda = 1.0;
            let mut any_positive = false;
            let mut accepted = false;
            for _ in 0..=MAX_LINE_SEARCH_HALVINGS {
                for k in 0..n {
                    cand[k] = rho[k] + lambda * delta[k];
                }
                if cand.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    any_positive = true;
                    let pc = ctx.pressures(&cand);
                    let fl = ctx.residual(&cand, &pc, &mut r_cand);
                    let rc = max_abs(&r_cand);
                    if rc <= (1.0 - 1e-4 * lambda) * res || rc <= f64::max(rel_tol, fl) {
                        rho.copy_from_slice(&cand);
                        p = pc;
                        core::mem::swap(&mut r, &mut r_cand);
                        floor = fl;
                        res = rc;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !any_positive {
                return Err(Error::PositivityLost { iterations });
            }
            history.push(res);
            let stalled = history.len() > STALL_WINDOW
                && res > STALL_REDUCTION * history[history.len() - 1 - STALL_WINDOW];
            if !accepted || stalled {
                picard_left = PICARD_SWEEPS;
            }
        }

        Ok(DensitySolve {
            rho: CellField::from_vec(rho),
            iterations,
            picard_iterations: picard_total,
            residual: res,
            tolerance: f64::max(rel_tol, floor),
        })
    }

    /// Explicit momentum update with fluxes evaluated at `rho_next`.
    pub fn update_velocity(
        &self,
        state: &State,
        rho_next: &CellField,
        fluxes: &FaceFluxes,
        dt: f64,
    ) -> Result<CellVectorField> {
        self.check_state(state)?;
        check_density_field(rho_next)?;
        let p = self.gas.pressure_field(rho_next)?;
        let grad = self.mesh.cell_gradient(&p);
        let div = fluxes.momentum_divergence(&self.mesh);
        let eps2 = self.params.eps * self.params.eps;
        Ok(CellVectorField::from_fn(self.mesh.cell_count(), |k| {
            let m = state.u[k] * state.rho[k] - (div[k] + grad[k] / eps2) * dt;
            m / rho_next[k]
        }))
    }

    /// Explicit surrogate of the sufficient time-step condition, using step
    /// `n` values throughout, capped at `dt_max`.
    pub fn compute_dt(&self, state: &State, eta: f64) -> Result<f64> {
        self.check_state(state)?;
        let mesh = &self.mesh;
        let beta = mesh.cell_volume() / mesh.boundary_measure();
        let eps2 = self.params.eps * self.params.eps;
        let mut dt = self.params.dt_max;
        for f in mesh.faces() {
            let (rk, rl) = (state.rho[f.k], state.rho[f.l]);
            let rmax = f64::max(rk, rl);
            let rmin = f64::min(rk, rl);
            let un = f.axis.component((state.u[f.k] + state.u[f.l]) * 0.5).abs();
            let dp = (self.gas.p(rl) - self.gas.p(rk)).abs();
            let d = un + (rl - rk).abs() / rmax + math::sqrt(eta / eps2 * dp);
            if d > 0.0 {
                let cand = self.params.cfl_safety * beta / 4.0 * f64::min(1.0, rmin / rmax) / d;
                dt = f64::min(dt, cand);
            }
        }
        Ok(dt)
    }

    /// Largest step that keeps condition 3 with `rho^n` in place of
    /// `rho^{n+1}`, scaled by `cfl_safety`.
    pub fn volume_condition_cap(&self, state: &State) -> f64 {
        let m = &self.mesh;
        self.params.cfl_safety * (1.0 / 3.0 - self.params.beta) * state.rho.min()
            * m.cell_volume()
            / m.boundary_measure()
    }

    /// `eta` for the step starting at `state`.
    pub fn initial_eta(&self, state: &State) -> f64 {
        match self.params.eta_mode {
            EtaMode::Fixed(v) => v,
            EtaMode::Auto { safety } => safety * ETA_FACTOR * self.max_face_inverse_density(&state.rho),
        }
    }

    fn max_face_inverse_density(&self, rho: &CellField) -> f64 {
        self.mesh
            .faces()
            .iter()
            .map(|f| 0.5 * (1.0 / rho[f.k] + 1.0 / rho[f.l]))
            .fold(0.0, f64::max)
    }

    pub fn check_conditions(
        &self,
        state: &State,
        rho_next: &CellField,
        fluxes: &FaceFluxes,
        dt: f64,
        eta: f64,
    ) -> ConditionReport {
        let mesh = &self.mesh;
        let eta_margin = eta - ETA_FACTOR * self.max_face_inverse_density(rho_next);

        let vol = mesh.cell_volume();
        let mut flux_sum = vec![0.0; mesh.cell_count()];
        for (s, f) in mesh.faces().iter().enumerate() {
            let v = mesh.face_measure(f.axis) / vol * fluxes.f[s].abs();
            flux_sum[f.k] += v;
            flux_sum[f.l] += v;
        }
        let flux_margin = (0..mesh.cell_count())
            .map(|k| 0.25 - dt / state.rho[k] * flux_sum[k])
            .fold(f64::INFINITY, f64::min);

        let ratio = mesh.boundary_measure() / vol;
        let volume_margin = rho_next
            .iter()
            .map(|&r| 1.0 / 3.0 - dt / r * ratio)
            .fold(f64::INFINITY, f64::min)
            - self.params.beta;

        ConditionReport {
            eta_ok: eta_margin > 0.0,
            eta_margin,
            flux_ok: flux_margin >= 0.0,
            flux_margin,
            volume_ok: volume_margin > 0.0,
            volume_margin,
        }
    }

    fn flux_settings(&self, dt: f64, eta: f64) -> FluxSettings {
        FluxSettings {
            eta,
            dt,
            eps: self.params.eps,
            viscous_scale: self.params.viscous_scale,
        }
    }

    /// One step with the controller's time step.
    pub fn step(&self, state: &State) -> Result<StepOutcome> {
        self.step_limited(state, f64::INFINITY)
    }

    /// One step with the time step additionally capped at `dt_limit` (used
    /// to land exactly on output or final times).
    pub fn step_limited(&self, state: &State, dt_limit: f64) -> Result<StepOutcome> {
        self.check_state(state)?;
        let mut eta = self.initial_eta(state);
        let mut dt = self
            .compute_dt(state, eta)?
            .min(self.volume_condition_cap(state))
            .min(dt_limit);
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                constraint: "dt > 0",
                value: dt,
            });
        }

        let mut halvings = 0;
        let mut retries = 0;
        loop {
            let attempt = self.attempt(state, dt, &mut eta, &mut retries);
            let last = halvings >= MAX_DT_HALVINGS;
            match attempt {
                Ok(done) if done.1.all() || last => {
                    let (solve, conditions, fluxes) = done;
                    return self.finish(state, solve, fluxes, conditions, dt, eta, retries, halvings);
                }
                Err(e) if last => return Err(e),
                _ => {
                    dt *= 0.5;
                    halvings += 1;
                }
            }
        }
    }

    fn attempt(
        &self,
        state: &State,
        dt: f64,
        eta: &mut f64,
        retries: &mut usize,
    ) -> Result<(DensitySolve, ConditionReport, FaceFluxes)> {
        let auto = matches!(self.params.eta_mode, EtaMode::Auto { .. });
        let mut local = 0;
        loop {
            let solve = self.solve_density(state, dt, *eta)?;
            let p = self.gas.pressure_field(&solve.rho)?;
            let fluxes = assemble_fluxes(
                &self.mesh,
                &solve.rho,
                &state.u,
                &p,
                &self.flux_settings(dt, *eta),
            )?;
            let report = self.check_conditions(state, &solve.rho, &fluxes, dt, *eta);
            if !report.eta_ok && auto && local < MAX_ETA_RETRIES {
                *eta *= 2.0;
                local += 1;
                *retries += 1;
                continue;
            }
            return Ok((solve, report, fluxes));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        state: &State,
        solve: DensitySolve,
        fluxes: FaceFluxes,
        conditions: ConditionReport,
        dt: f64,
        eta: f64,
        eta_retries: usize,
        dt_halvings: usize,
    ) -> Result<StepOutcome> {
        let u_next = self.update_velocity(state, &solve.rho, &fluxes, dt)?;
        check_velocity_field(&u_next)?;
        let next = State {
            time: state.time + dt,
            rho: solve.rho.clone(),
            u: u_next,
            step_index: state.step_index + 1,
        };
        let eps = self.params.eps;
        let report = EnergyReport::compute(&self.mesh, &self.gas, eps, &next.rho, &next.u)?;
        let change = energy_change(&self.mesh, &self.gas, eps, state, &next)?;
        let mut momentum = Vec2::ZERO;
        for k in 0..self.mesh.cell_count() {
            momentum += next.u[k] * next.rho[k];
        }
        let diagnostics = StepDiagnostics {
            step_index: next.step_index,
            time: next.time,
            dt_used: dt,
            eta,
            kinetic_energy: report.kinetic,
            total_energy: report.total,
            total_entropy: report.total_entropy(),
            total_mass: self.mesh.integrate(&next.rho),
            momentum: momentum * self.mesh.cell_volume(),
            min_density: next.rho.min(),
            energy_decrement: change.energy_decrement,
            entropy_decrement: change.entropy_decrement,
            newton_iters: solve.iterations,
            picard_iters: solve.picard_iterations,
            final_residual: solve.residual,
            conditions,
            eta_retries,
            dt_halvings,
        };
        Ok(StepOutcome {
            state: next,
            diagnostics,
            fluxes,
            dt,
            eta,
        })
    }
}

fn check_velocity_field(u: &CellVectorField) -> Result<()> {
    match u.iter().position(|v| !(v.x.is_finite() && v.y.is_finite())) {
        Some(cell) => Err(Error::NonFiniteVelocity { cell }),
        None => Ok(()),
    }
}
