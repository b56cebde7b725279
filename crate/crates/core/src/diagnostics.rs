//! Energies, relative energies, Mach number, error norms, convergence
//! orders and the per-step energy balance audit.

use alloc::vec::Vec;

use crate::eos::{check_density_field, GasLaw};
use crate::error::{Error, Result};
use crate::field::{CellField, CellVectorField, Vec2};
use crate::flux::FaceFluxes;
use crate::math;
use crate::mesh::StructuredMesh;
use crate::stepper::{SchemeParams, State};

fn check_len(mesh: &StructuredMesh, len: usize) -> Result<()> {
    if len != mesh.cell_count() {
        return Err(Error::SizeMismatch {
            expected: mesh.cell_count(),
            found: len,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    /// `sum |K| rho |u|^2 / 2`.
    pub kinetic: f64,
    /// `sum |K| P(rho) / eps^2`.
    pub internal_scaled: f64,
    /// `sum |K| Pi(rho | 1) / eps^2`.
    pub entropy_scaled: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn compute(
        mesh: &StructuredMesh,
        gas: &GasLaw,
        eps: f64,
        rho: &CellField,
        u: &CellVectorField,
    ) -> Result<Self> {
        check_len(mesh, rho.len())?;
        check_len(mesh, u.len())?;
        check_density_field(rho)?;
        let vol = mesh.cell_volume();
        let eps2 = eps * eps;
        let (mut kin, mut int, mut ent) = (0.0, 0.0, 0.0);
        for k in 0..rho.len() {
            kin += 0.5 * rho[k] * u[k].norm_sq();
            int += gas.big_p(rho[k]);
            ent += gas.bregman(rho[k], 1.0);
        }
        let kinetic = vol * kin;
        let internal_scaled = vol * int / eps2;
        Ok(EnergyReport {
            kinetic,
            internal_scaled,
            entropy_scaled: vol * ent / eps2,
            total: kinetic + internal_scaled,
        })
    }

    /// Kinetic energy plus the scaled relative internal energy.
    pub fn total_entropy(&self) -> f64 {
        self.kinetic + self.entropy_scaled
    }
}

pub fn kinetic_energy(mesh: &StructuredMesh, rho: &CellField, u: &CellVectorField) -> f64 {
    mesh.cell_volume()
        * (0..rho.len())
            .map(|k| 0.5 * rho[k] * u[k].norm_sq())
            .sum::<f64>()
}

/// Previous-minus-current energy and entropy, computed from cellwise
/// increments so that the `O(1/eps^2)` parts do not cancel catastrophically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyChange {
    pub kinetic_decrement: f64,
    pub energy_decrement: f64,
    pub entropy_decrement: f64,
}

pub fn energy_change(
    mesh: &StructuredMesh,
    gas: &GasLaw,
    eps: f64,
    before: &State,
    after: &State,
) -> Result<EnergyChange> {
    for f in [&before.rho, &after.rho] {
        check_len(mesh, f.len())?;
        check_density_field(f)?;
    }
    let vol = mesh.cell_volume();
    let eps2 = eps * eps;
    let (mut kin, mut int, mut ent) = (0.0, 0.0, 0.0);
    for k in 0..mesh.cell_count() {
        let (a, b) = (before.rho[k], after.rho[k]);
        kin += 0.5 * (a * before.u[k].norm_sq() - b * after.u[k].norm_sq());
        let pi = gas.bregman(a, b);
        int += gas.big_dp(b) * (a - b) + pi;
        ent += gas.big_dp_minus_ref(b) * (a - b) + pi;
    }
    let kinetic_decrement = vol * kin;
    Ok(EnergyChange {
        kinetic_decrement,
        energy_decrement: kinetic_decrement + vol * int / eps2,
        entropy_decrement: kinetic_decrement + vol * ent / eps2,
    })
}

/// `sum |K| [rho |u - u_ref|^2 / 2 + Pi(rho | rho_ref)]`.
pub fn relative_energy_compressible(
    mesh: &StructuredMesh,
    gas: &GasLaw,
    rho: &CellField,
    u: &CellVectorField,
    ref_rho: &CellField,
    ref_u: &CellVectorField,
) -> Result<f64> {
    for len in [rho.len(), u.len(), ref_rho.len(), ref_u.len()] {
        check_len(mesh, len)?;
    }
    check_density_field(rho)?;
    check_density_field(ref_rho)?;
    let sum: f64 = (0..rho.len())
        .map(|k| 0.5 * rho[k] * (u[k] - ref_u[k]).norm_sq() + gas.bregman(rho[k], ref_rho[k]))
        .sum();
    Ok(mesh.cell_volume() * sum)
}

/// `sum |K| [rho |u - v|^2 / 2 + Pi(rho | 1) / eps^2]`.
pub fn relative_energy_incompressible(
    mesh: &StructuredMesh,
    gas: &GasLaw,
    rho: &CellField,
    u: &CellVectorField,
    v: &CellVectorField,
    eps: f64,
) -> Result<f64> {
    for len in [rho.len(), u.len(), v.len()] {
        check_len(mesh, len)?;
    }
    check_density_field(rho)?;
    let eps2 = eps * eps;
    let sum: f64 = (0..rho.len())
        .map(|k| 0.5 * rho[k] * (u[k] - v[k]).norm_sq() + gas.bregman(rho[k], 1.0) / eps2)
        .sum();
    Ok(mesh.cell_volume() * sum)
}

/// Cellwise `|u| / sqrt(p'(rho))`.
pub fn flow_mach(gas: &GasLaw, rho: &CellField, u: &CellVectorField) -> Result<CellField> {
    check_density_field(rho)?;
    if rho.len() != u.len() {
        return Err(Error::SizeMismatch {
            expected: rho.len(),
            found: u.len(),
        });
    }
    Ok(CellField::from_fn(rho.len(), |k| {
        math::sqrt(u[k].norm_sq() / gas.dp(rho[k]))
    }))
}

/// The five norms measuring the distance to the incompressible limit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorReport {
    /// `sup_{n >= 1} int E_rel(rho^n, u^n | 1, v(t^n))`.
    pub e_rel_energy_sup: f64,
    /// `||rho - 1||_{L2 L2}`.
    pub e_rho_22: f64,
    /// `sup_{n >= 1} ||rho^n - 1||_{L2}`.
    pub e_rho_inf2: f64,
    pub e_u_22: f64,
    pub e_u_inf2: f64,
}

impl ErrorReport {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.e_rel_energy_sup,
            self.e_rho_22,
            self.e_rho_inf2,
            self.e_u_22,
            self.e_u_inf2,
        ]
    }

    pub const NAMES: [&'static str; 5] = ["e_rel_inf1", "e_rho_22", "e_rho_inf2", "e_u_22", "e_u_inf2"];
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sample {
    time: f64,
    e_rel: f64,
    rho_sq: f64,
    u_sq: f64,
}

/// Collects `(t^n, rho^n, u^n)` samples, `n = 0..N`, and evaluates the
/// space-time norms. Time integrals use the left endpoint of each step; the
/// sup norms run over `n >= 1`.
#[derive(Clone, Debug, Default)]
pub struct ErrorAccumulator {
    samples: Vec<Sample>,
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the sample at time `time`; `v` is the limit velocity at that time.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        mesh: &StructuredMesh,
        gas: &GasLaw,
        eps: f64,
        time: f64,
        rho: &CellField,
        u: &CellVectorField,
        v: &CellVectorField,
    ) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(time > last.time) {
                return Err(Error::InvalidParameter {
                    name: "time",
                    constraint: "strictly increasing sample times",
                    value: time,
                });
            }
        }
        let e_rel = relative_energy_incompressible(mesh, gas, rho, u, v, eps)?;
        let vol = mesh.cell_volume();
        let rho_sq = vol * rho.iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>();
        let u_sq = vol * (0..u.len()).map(|k| (u[k] - v[k]).norm_sq()).sum::<f64>();
        self.samples.push(Sample {
            time,
            e_rel,
            rho_sq,
            u_sq,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn report(&self) -> ErrorReport {
        let mut r = ErrorReport::default();
        let (mut rho22, mut u22) = (0.0, 0.0);
        for w in self.samples.windows(2) {
            let dt = w[1].time - w[0].time;
            rho22 += dt * w[0].rho_sq;
            u22 += dt * w[0].u_sq;
        }
        for s in self.samples.iter().skip(1) {
            r.e_rel_energy_sup = r.e_rel_energy_sup.max(s.e_rel);
            r.e_rho_inf2 = r.e_rho_inf2.max(math::sqrt(s.rho_sq));
            r.e_u_inf2 = r.e_u_inf2.max(math::sqrt(s.u_sq));
        }
        r.e_rho_22 = math::sqrt(rho22);
        r.e_u_22 = math::sqrt(u22);
        r
    }
}

/// Experimental orders `log(e_{i-1}/e_i) / log(h_{i-1}/h_i)` for consecutive
/// `(h, e)` pairs. A pair with a non-positive error has no rate.
pub fn eoc(errors: &[(f64, f64)]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            if e0 > 0.0 && e1 > 0.0 && h0 > 0.0 && h1 > 0.0 && h0 != h1 {
                Some(math::ln(e0 / e1) / math::ln(h0 / h1))
            } else {
                None
            }
        })
        .collect()
}

/// Exact energy bookkeeping of one accepted step.
///
/// With `r_K` the residual left by the density solve, the scheme satisfies
///
/// ```text
/// (E_ent^{n+1} - E_ent^n) / dt = -stabilisation + kinetic_source - remainder + solver_term
/// ```
///
/// where `stabilisation = eps^-2 sum_sigma |sigma| du [[p]] >= 0`,
/// `remainder = eps^-2 sum_K |K| R_K` with
/// `R_K = Pi(rho^n | rho^{n+1}) / dt + sum |sigma|/|K| (s - w-) Pi(rho_L | rho_K) >= 0`,
/// `kinetic_source = sum_K |K| S_K` with
/// `S_K = rho^{n+1} |u^{n+1} - u^n|^2 / (2 dt) - sum |sigma|/|K| (s - F-) |[[u]]|^2 / 2`,
/// and `solver_term = sum_K |K| r_K ((P'(rho_K) - P'(1)) / eps^2 - |u_K|^2 / 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditRecord {
    pub min_remainder: f64,
    pub remainder: f64,
    pub stabilisation: f64,
    pub kinetic_source: f64,
    pub solver_term: f64,
    /// `(E_ent^{n+1} - E_ent^n) / dt`.
    pub entropy_rate: f64,
    /// `(E^{n+1} - E^n) / dt`.
    pub energy_rate: f64,
    pub identity_error: f64,
    pub identity_scale: f64,
    /// `-(dt/eps^4) sum |sigma|^2/|D| (eta - 3 {{1/rho}}) [[p]]^2
    ///  - (3 beta / 2) sum_K sum_sigma |sigma| |[[u]]|^2 - remainder`.
    pub upper_bound: f64,
    /// Largest cellwise violation of the internal energy balance, relative
    /// to the largest term entering it.
    pub internal_balance_error: f64,
}

impl AuditRecord {
    pub fn relative_identity_error(&self) -> f64 {
        if self.identity_scale > 0.0 {
            self.identity_error / self.identity_scale
        } else {
            self.identity_error
        }
    }
}

/// Evaluates the internal and kinetic energy balances of one accepted step.
#[allow(clippy::too_many_arguments)]
pub fn audit_energy_balances(
    mesh: &StructuredMesh,
    gas: &GasLaw,
    params: &SchemeParams,
    before: &State,
    after: &State,
    fluxes: &FaceFluxes,
    dt: f64,
    eta: f64,
) -> Result<AuditRecord> {
    let n = mesh.cell_count();
    for len in [before.rho.len(), after.rho.len(), before.u.len(), after.u.len()] {
        check_len(mesh, len)?;
    }
    if fluxes.f.len() != mesh.face_count() {
        return Err(Error::SizeMismatch {
            expected: mesh.face_count(),
            found: fluxes.f.len(),
        });
    }
    check_density_field(&before.rho)?;
    check_density_field(&after.rho)?;
    let eps2 = params.eps * params.eps;
    let s = params.viscous_scale;
    let vol = mesh.cell_volume();
    let (rn, r1) = (&before.rho, &after.rho);
    let (un, u1) = (&before.u, &after.u);
    let p1: Vec<f64> = r1.iter().map(|&r| gas.p(r)).collect();

    let mut rem: Vec<f64> = (0..n).map(|k| gas.bregman(rn[k], r1[k]) / dt).collect();
    let mut src: Vec<f64> = (0..n)
        .map(|k| 0.5 * r1[k] * (u1[k] - un[k]).norm_sq() / dt)
        .collect();
    let mut src_mag = src.clone();
    let mut mass_res: Vec<f64> = (0..n).map(|k| (r1[k] - rn[k]) / dt).collect();
    // Internal energy balance: dP/dt + sum c H + p_K sum c w + R_K - P'(rho_K) r_K = 0.
    let mut bal: Vec<f64> = (0..n)
        .map(|k| (gas.big_dp(r1[k]) * (r1[k] - rn[k]) - gas.bregman(rn[k], r1[k])) / dt)
        .collect();
    let mut bal_mag: Vec<f64> = (0..n)
        .map(|k| (gas.big_p(r1[k]) + gas.big_p(rn[k])) / dt)
        .collect();

    let mut stabilisation = 0.0;
    let mut bound_pressure = 0.0;
    let mut bound_velocity = 0.0;
    for (idx, face) in mesh.faces().iter().enumerate() {
        let (k, l) = (face.k, face.l);
        let len = mesh.face_measure(face.axis);
        let c = len / vol;
        let jump_p = p1[l] - p1[k];
        stabilisation += len * fluxes.delta_u[idx] * jump_p / eps2;
        let inv = 0.5 * (1.0 / r1[k] + 1.0 / r1[l]);
        bound_pressure +=
            len * len / mesh.dual_volume() * (eta - 3.0 * inv) * jump_p * jump_p;
        let ju = (un[l] - un[k]).norm_sq();
        bound_velocity += 2.0 * len * ju;

        let (wp, wm) = (fluxes.w_plus[idx], fluxes.w_minus[idx]);
        rem[k] += c * (s - wm) * gas.bregman(r1[l], r1[k]);
        rem[l] += c * (s + wp) * gas.bregman(r1[k], r1[l]);
        let (fp, fm) = (fluxes.f_plus[idx], fluxes.f_minus[idx]);
        src[k] -= c * 0.5 * (s - fm) * ju;
        src[l] -= c * 0.5 * (s + fp) * ju;
        src_mag[k] += c * 0.5 * (s - fm).abs() * ju;
        src_mag[l] += c * 0.5 * (s + fp).abs() * ju;

        mass_res[k] += c * fluxes.f[idx];
        mass_res[l] -= c * fluxes.f[idx];

        let (bk, bl) = (gas.big_p(r1[k]), gas.big_p(r1[l]));
        let h = bk * wp + bl * wm - s * (bl - bk);
        let w = wp + wm;
        bal[k] += c * (h + p1[k] * w);
        bal[l] += c * (-h - p1[l] * w);
        let m = c * (bk.abs() * wp.abs() + bl * wm.abs() + s * (bk + bl) + (p1[k] + p1[l]) * w.abs());
        bal_mag[k] += m;
        bal_mag[l] += m;
    }

    let mut remainder = 0.0;
    let mut kinetic_source = 0.0;
    let mut source_mag = 0.0;
    let mut solver_term = 0.0;
    let mut solver_mag = 0.0;
    let mut min_remainder = f64::INFINITY;
    let mut internal_balance_error: f64 = 0.0;
    for k in 0..n {
        remainder += vol * rem[k] / eps2;
        kinetic_source += vol * src[k];
        source_mag += vol * src_mag[k];
        min_remainder = min_remainder.min(rem[k]);
        let t = vol * mass_res[k] * (gas.big_dp_minus_ref(r1[k]) / eps2 - 0.5 * un[k].norm_sq());
        solver_term += t;
        solver_mag += t.abs();
        let b = bal[k] + rem[k] - gas.big_dp(r1[k]) * mass_res[k];
        let scale = bal_mag[k] + rem[k];
        if scale > 0.0 {
            internal_balance_error = internal_balance_error.max(b.abs() / scale);
        }
    }

    let change = energy_change(mesh, gas, params.eps, before, after)?;
    let entropy_rate = -change.entropy_decrement / dt;
    let energy_rate = -change.energy_decrement / dt;
    let predicted = -stabilisation + kinetic_source - remainder + solver_term;
    let identity_error = (entropy_rate - predicted).abs();
    let identity_scale = stabilisation.abs() + source_mag + remainder.abs() + solver_mag + entropy_rate.abs();
    let upper_bound = -dt / (eps2 * eps2) * bound_pressure
        - 1.5 * params.beta * bound_velocity
        - remainder;

    Ok(AuditRecord {
        min_remainder,
        remainder,
        stabilisation,
        kinetic_source,
        solver_term,
        entropy_rate,
        energy_rate,
        identity_error,
        identity_scale,
        upper_bound,
        internal_balance_error,
    })
}

/// Momentum `sum |K| rho u`.
pub fn total_momentum(mesh: &StructuredMesh, rho: &CellField, u: &CellVectorField) -> Vec2 {
    let mut m = Vec2::ZERO;
    for k in 0..rho.len() {
        m += u[k] * rho[k];
    }
    m * mesh.cell_volume()
}
