//! Initial data: the stationary vortex and well-prepared perturbations of a
//! given velocity field.

use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{CellField, CellVectorField, Vec2};
use crate::math;
use crate::mesh::{Quadrature, StructuredMesh};
use crate::stepper::State;

/// Below this radius the vortex velocity is set to zero (its direction is
/// undefined at the centre).
const CENTRE_GUARD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VortexSpec {
    pub center: (f64, f64),
    pub r1: f64,
    pub r2: f64,
    pub amplitude: f64,
}

impl Default for VortexSpec {
    fn default() -> Self {
        VortexSpec {
            center: (0.5, 0.5),
            r1: 0.2,
            r2: 0.4,
            amplitude: 0.1,
        }
    }
}

impl VortexSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > self.r1 && self.r2.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "r2",
                constraint: "0 < r1 < r2",
                value: self.r2,
            });
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                constraint: "finite amplitude",
                value: self.amplitude,
            });
        }
        Ok(())
    }

    pub fn a1(&self) -> f64 {
        self.amplitude / self.r1
    }

    pub fn a2(&self) -> f64 {
        -self.amplitude * self.r2 / (self.r1 - self.r2)
    }

    pub fn a3(&self) -> f64 {
        self.amplitude / (self.r1 - self.r2)
    }

    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        math::sqrt(dx * dx + dy * dy)
    }
}

pub fn angular_velocity(r: f64, spec: &VortexSpec) -> f64 {
    if r <= spec.r1 {
        spec.a1() * r
    } else if r <= spec.r2 {
        spec.a2() + spec.a3() * r
    } else {
        0.0
    }
}

/// `pi(r) = int_0^r u_theta(s)^2 / s ds` in closed form.
pub fn incompressible_pressure(r: f64, spec: &VortexSpec) -> f64 {
    let (a1, a2, a3) = (spec.a1(), spec.a2(), spec.a3());
    let r1 = spec.r1;
    if r <= r1 {
        return 0.5 * a1 * a1 * r * r;
    }
    let r = r.min(spec.r2);
    0.5 * a1 * a1 * r1 * r1
        + a2 * a2 * math::ln(r / r1)
        + 2.0 * a2 * a3 * (r - r1)
        + 0.5 * a3 * a3 * (r * r - r1 * r1)
}

/// Which closed form to use for the compressible vortex density.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DensityProfile {
    /// `rho = (1 + gamma eps^2 pi / (gamma - 1))^(1/(gamma-1))`.
    #[default]
    Standard,
    /// `rho = (1 + (gamma - 1) eps^2 pi / gamma)^(1/(gamma-1))`, the exact
    /// solution of `eps^-2 d_r p(rho) = rho u_theta^2 / r` with `rho(0) = 1`.
    Balanced,
}

pub fn vortex_density(r: f64, spec: &VortexSpec, gamma: f64, eps: f64, profile: DensityProfile) -> f64 {
    let pi = incompressible_pressure(r, spec);
    let factor = match profile {
        DensityProfile::Standard => gamma / (gamma - 1.0),
        DensityProfile::Balanced => (gamma - 1.0) / gamma,
    };
    math::powf(1.0 + factor * eps * eps * pi, 1.0 / (gamma - 1.0))
}

/// `(u_theta (y - yc) / r, -u_theta (x - xc) / r)`.
pub fn vortex_velocity(x: f64, y: f64, spec: &VortexSpec) -> Vec2 {
    let r = spec.radius(x, y);
    if r < CENTRE_GUARD {
        return Vec2::ZERO;
    }
    let ut = angular_velocity(r, spec);
    Vec2::new(ut * (y - spec.center.1) / r, -ut * (x - spec.center.0) / r)
}

fn check_gas(gamma: f64, eps: f64) -> Result<()> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            constraint: "gamma > 1",
            value: gamma,
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps",
            constraint: "eps > 0",
            value: eps,
        });
    }
    Ok(())
}

/// Projected vortex initial data with the standard density profile.
pub fn vortex_compressible_init(
    mesh: &StructuredMesh,
    spec: &VortexSpec,
    gamma: f64,
    eps: f64,
    quadrature: Quadrature,
) -> Result<State> {
    vortex_compressible_init_with(mesh, spec, gamma, eps, quadrature, DensityProfile::Standard)
}

pub fn vortex_compressible_init_with(
    mesh: &StructuredMesh,
    spec: &VortexSpec,
    gamma: f64,
    eps: f64,
    quadrature: Quadrature,
    profile: DensityProfile,
) -> Result<State> {
    spec.validate()?;
    check_gas(gamma, eps)?;
    let rho = mesh.project(quadrature, |x, y| {
        vortex_density(spec.radius(x, y), spec, gamma, eps, profile)
    });
    let u = mesh.project_vector(quadrature, |x, y| vortex_velocity(x, y, spec));
    State::new(rho, u)
}

/// Projected steady incompressible solution `(v, pi)`; `pi` is shifted to
/// have zero mean. The solution does not depend on `t`.
pub fn vortex_incompressible_exact(
    mesh: &StructuredMesh,
    spec: &VortexSpec,
    _t: f64,
    quadrature: Quadrature,
) -> (CellVectorField, CellField) {
    let v = mesh.project_vector(quadrature, |x, y| vortex_velocity(x, y, spec));
    let pi = mesh.project(quadrature, |x, y| incompressible_pressure(spec.radius(x, y), spec));
    let mean = mesh.integrate(&pi) / (mesh.lx() * mesh.ly());
    let pi = CellField::from_fn(pi.len(), |k| pi[k] - mean);
    (v, pi)
}

/// `(1/eps^2) d_r p(rho) / (rho u_theta^2 / r)` at radius `r` by central
/// differencing with step `dr`.
pub fn radial_balance_ratio(
    r: f64,
    dr: f64,
    spec: &VortexSpec,
    gamma: f64,
    eps: f64,
    profile: DensityProfile,
) -> f64 {
    let p = |s: f64| math::powf(vortex_density(s, spec, gamma, eps, profile), gamma);
    let dpdr = (p(r + dr) - p(r - dr)) / (2.0 * dr);
    let ut = angular_velocity(r, spec);
    let rhs = vortex_density(r, spec, gamma, eps, profile) * ut * ut / r;
    dpdr / (eps * eps) / rhs
}

/// Shape and amplitudes of a well-prepared perturbation.
///
/// The density perturbation is `g = sin(2 pi (x/lx + phase[0])) sin(2 pi (y/ly + phase[1]))`
/// and the velocity perturbation the divergence-free field
/// `w = (sin(2 pi (y/ly + phase[2])), sin(2 pi (x/lx + phase[3])))`, both
/// normalised by their largest cell value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub rho_amplitude: f64,
    pub u_amplitude: f64,
    pub phases: [f64; 4],
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            rho_amplitude: 1.0,
            u_amplitude: 1.0,
            phases: [0.0, 0.25, 0.125, 0.375],
        }
    }
}

/// `rho0 = 1 + eps^2 a g`, `u0 = v0 + eps b w` with `g`, `w` normalised to
/// unit maximum norm on the mesh.
pub fn well_prepared_perturbation(
    mesh: &StructuredMesh,
    v0: &CellVectorField,
    eps: f64,
    pert: &Perturbation,
) -> Result<State> {
    if v0.len() != mesh.cell_count() {
        return Err(Error::SizeMismatch {
            expected: mesh.cell_count(),
            found: v0.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps",
            constraint: "eps > 0",
            value: eps,
        });
    }
    let a = pert.rho_amplitude;
    if !(a >= 0.0 && eps * eps * a < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho_amplitude",
            constraint: "0 <= eps^2 rho_amplitude < 1",
            value: a,
        });
    }
    let (lx, ly) = (mesh.lx(), mesh.ly());
    let ph = pert.phases;
    let s = |t: f64| math::sin(2.0 * PI * t);
    let g = mesh.project(Quadrature::Midpoint, |x, y| s(x / lx + ph[0]) * s(y / ly + ph[1]));
    let w = mesh.project_vector(Quadrature::Midpoint, |x, y| {
        Vec2::new(s(y / ly + ph[2]), s(x / lx + ph[3]))
    });
    let g_max = g.max_abs();
    let w_max = w.iter().fold(0.0, |m: f64, v| m.max(v.norm()));
    let rho = CellField::from_fn(g.len(), |k| {
        if g_max > 0.0 {
            1.0 + eps * eps * a * g[k] / g_max
        } else {
            1.0
        }
    });
    let b = pert.u_amplitude;
    let u = CellVectorField::from_fn(w.len(), |k| {
        if w_max > 0.0 {
            v0[k] + w[k] * (eps * b / w_max)
        } else {
            v0[k]
        }
    });
    State::new(rho, u)
}
