//! Stabilised, upwind-split convection fluxes.
//!
//! For a face `sigma = K|L` all per-face quantities are stored as seen from
//! `K` (the stored orientation). The values seen from `L` are the negatives:
//! `F_{sigma,L} = -F_{sigma,K}`, `F+_{sigma,L} = -F-_{sigma,K}` and so on.
//!
//! The normal stabilised velocity is `w = {{u}}.n - du` with
//! `du = (eta dt / eps^2) (grad_E p) . n`. Its split
//!
//! ```text
//! w+ = max(u, 0) - min(du, 0) >= 0
//! w- = min(u, 0) - max(du, 0) <= 0
//! ```
//!
//! drives the upwind mass flux `F = rho_K (w+ + s) + rho_L (w- - s)` and the
//! momentum flux `G = F+ u_K + F- u_L - s [[u]]`, where `s` is the viscous
//! scale (1 by default).

use alloc::vec::Vec;

use crate::eos::check_density_field;
use crate::error::{Error, Result};
use crate::field::{CellField, CellVectorField, FaceField, Vec2};
use crate::mesh::StructuredMesh;

/// Parameters fixed for the duration of one implicit solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxSettings {
    pub eta: f64,
    pub dt: f64,
    pub eps: f64,
    pub viscous_scale: f64,
}

impl FluxSettings {
    pub fn new(eta: f64, dt: f64, eps: f64) -> Self {
        FluxSettings {
            eta,
            dt,
            eps,
            viscous_scale: 1.0,
        }
    }

    /// `eta dt / eps^2`.
    #[inline]
    pub fn stabilisation_coefficient(&self) -> f64 {
        self.eta * self.dt / (self.eps * self.eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassFlux {
    pub total: f64,
    pub plus: f64,
    pub minus: f64,
}

/// Per-face fluxes with the `K`-side sign.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceFluxes {
    /// `{{u^n}}_sigma . n_{K,sigma}`.
    pub u_normal: Vec<f64>,
    pub delta_u: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub f: Vec<f64>,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub g: Vec<Vec2>,
}

impl FaceFluxes {
    /// `sum_sigma |sigma|/|K| F_{sigma,K}` for every cell.
    pub fn mass_divergence(&self, mesh: &StructuredMesh) -> CellField {
        let mut out = CellField::constant(mesh.cell_count(), 0.0);
        let vol = mesh.cell_volume();
        for (s, face) in mesh.faces().iter().enumerate() {
            let v = mesh.face_measure(face.axis) / vol * self.f[s];
            out[face.k] += v;
            out[face.l] -= v;
        }
        out
    }

    /// `sum_sigma |sigma|/|K| G_{sigma,K}` for every cell.
    pub fn momentum_divergence(&self, mesh: &StructuredMesh) -> CellVectorField {
        let mut out = CellVectorField::constant(mesh.cell_count(), Vec2::ZERO);
        let vol = mesh.cell_volume();
        for (s, face) in mesh.faces().iter().enumerate() {
            let v = self.g[s] * (mesh.face_measure(face.axis) / vol);
            out[face.k] += v;
            out[face.l] -= v;
        }
        out
    }
}

/// Normal component of `(eta dt / eps^2) (grad_E p)_sigma` on every face.
pub fn stabilisation_velocity(
    mesh: &StructuredMesh,
    p: &CellField,
    eta: f64,
    dt: f64,
    eps: f64,
) -> FaceField {
    let c = eta * dt / (eps * eps);
    let grad = mesh.face_normal_gradient(p);
    FaceField::from_fn(grad.len(), |s| c * grad[s])
}

/// Sign-preserving split `(w+, w-)` of the stabilised normal velocity.
#[inline]
pub fn split_normal_velocity(u_avg_n: f64, delta_u_n: f64) -> (f64, f64) {
    (
        f64::max(u_avg_n, 0.0) - f64::min(delta_u_n, 0.0),
        f64::min(u_avg_n, 0.0) - f64::max(delta_u_n, 0.0),
    )
}

#[inline]
pub fn mass_flux(rho_k: f64, rho_l: f64, w_plus: f64, w_minus: f64) -> MassFlux {
    mass_flux_scaled(rho_k, rho_l, w_plus, w_minus, 1.0)
}

/// Mass flux with the viscous jump `-s [[rho]]` folded into the split parts.
#[inline]
pub fn mass_flux_scaled(
    rho_k: f64,
    rho_l: f64,
    w_plus: f64,
    w_minus: f64,
    viscous_scale: f64,
) -> MassFlux {
    let plus = rho_k * (w_plus + viscous_scale);
    let minus = rho_l * (w_minus - viscous_scale);
    MassFlux {
        total: plus + minus,
        plus,
        minus,
    }
}

#[inline]
pub fn momentum_flux(f_plus: f64, f_minus: f64, u_k: Vec2, u_l: Vec2) -> Vec2 {
    momentum_flux_scaled(f_plus, f_minus, u_k, u_l, 1.0)
}

#[inline]
pub fn momentum_flux_scaled(
    f_plus: f64,
    f_minus: f64,
    u_k: Vec2,
    u_l: Vec2,
    viscous_scale: f64,
) -> Vec2 {
    u_k * f_plus + u_l * f_minus - (u_l - u_k) * viscous_scale
}

/// Assemble all face fluxes for the candidate density `rho_next`, the
/// velocity `u_now` and the pressure `p_next = p(rho_next)`.
pub fn assemble_fluxes(
    mesh: &StructuredMesh,
    rho_next: &CellField,
    u_now: &CellVectorField,
    p_next: &CellField,
    settings: &FluxSettings,
) -> Result<FaceFluxes> {
    let n = mesh.cell_count();
    for len in [rho_next.len(), u_now.len(), p_next.len()] {
        if len != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: len,
            });
        }
    }
    check_density_field(rho_next)?;

    let nf = mesh.face_count();
    let mut out = FaceFluxes {
        u_normal: Vec::with_capacity(nf),
        delta_u: Vec::with_capacity(nf),
        w_plus: Vec::with_capacity(nf),
        w_minus: Vec::with_capacity(nf),
        f: Vec::with_capacity(nf),
        f_plus: Vec::with_capacity(nf),
        f_minus: Vec::with_capacity(nf),
        g: Vec::with_capacity(nf),
    };
    let du = stabilisation_velocity(mesh, p_next, settings.eta, settings.dt, settings.eps);
    let s = settings.viscous_scale;
    for (idx, face) in mesh.faces().iter().enumerate() {
        let (k, l) = (face.k, face.l);
        let un = face.axis.component((u_now[k] + u_now[l]) * 0.5);
        let (wp, wm) = split_normal_velocity(un, du[idx]);
        let mf = mass_flux_scaled(rho_next[k], rho_next[l], wp, wm, s);
        let g = momentum_flux_scaled(mf.plus, mf.minus, u_now[k], u_now[l], s);
        out.u_normal.push(un);
        out.delta_u.push(du[idx]);
        out.w_plus.push(wp);
        out.w_minus.push(wm);
        out.f.push(mf.total);
        out.f_plus.push(mf.plus);
        out.f_minus.push(mf.minus);
        out.g.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eos::GasLaw;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stabilisation_velocity_examples() {
        let mesh = StructuredMesh::new(4, 4, 2.0, 2.0).unwrap();
        let p = CellField::constant(16, 1.3);
        assert!(stabilisation_velocity(&mesh, &p, 1.0, 0.1, 1.0)
            .iter()
            .all(|&v| v == 0.0));

        let mut p = CellField::constant(16, 1.0);
        p[1] = 2.0;
        let du = stabilisation_velocity(&mesh, &p, 1.0, 0.1, 1.0);
        assert!((du[0] - 0.2).abs() < 1e-15);
        let du2 = stabilisation_velocity(&mesh, &p, 2.0, 0.1, 1.0);
        for s in 0..mesh.face_count() {
            assert_eq!(du2[s], 2.0 * du[s]);
        }
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_normal_velocity(0.0, 0.0), (0.0, 0.0));
        let (wp, wm) = split_normal_velocity(0.3, 0.5);
        assert_eq!((wp, wm), (0.3, -0.5));
        assert!((wp + wm - (-0.2)).abs() < 1e-15);
        assert_eq!(split_normal_velocity(-1.0, 0.0), (0.0, -1.0));
    }

    #[test]
    fn mass_flux_examples() {
        assert_eq!(
            mass_flux(1.0, 1.0, 0.0, 0.0),
            MassFlux {
                total: 0.0,
                plus: 1.0,
                minus: -1.0
            }
        );
        assert_eq!(mass_flux(2.0, 1.0, 1.0, 0.0).total, 3.0);
        assert_eq!(mass_flux(1.0, 2.0, 0.0, -1.0).total, -3.0);
    }

    #[test]
    fn momentum_flux_examples() {
        let u = Vec2::new(0.3, -0.7);
        assert_eq!(momentum_flux(1.0, -1.0, u, u), Vec2::ZERO);
        let g = momentum_flux(2.0, 0.0, Vec2::new(1.0, 0.0), Vec2::ZERO);
        assert_eq!(g, Vec2::new(3.0, 0.0));
        let g = momentum_flux(0.7, -0.2, u, u);
        assert!((g - u * 0.5).norm() < 1e-15);
    }

    #[test]
    fn upwind_density_matches_definition() {
        // rho_up w = rho_K (w)+ + rho_L (w)-, plus the viscous jump.
        for &(u, rk, rl) in &[(0.4, 1.2, 0.8), (-0.4, 1.2, 0.8)] {
            let (wp, wm) = split_normal_velocity(u, 0.0);
            let mf = mass_flux(rk, rl, wp, wm);
            let upwind = if u > 0.0 { rk * u } else { rl * u };
            assert!((mf.total - (upwind - (rl - rk))).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_state_has_zero_fluxes() {
        let mesh = StructuredMesh::unit_square(5).unwrap();
        let rho = CellField::constant(25, 1.3);
        let u = CellVectorField::constant(25, Vec2::ZERO);
        let gas = GasLaw::new(2.0).unwrap();
        let p = gas.pressure_field(&rho).unwrap();
        let fx = assemble_fluxes(&mesh, &rho, &u, &p, &FluxSettings::new(3.0, 0.01, 0.1)).unwrap();
        assert!(fx.f.iter().all(|&v| v == 0.0));
        assert!(fx.g.iter().all(|v| *v == Vec2::ZERO));
        assert!(fx.delta_u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assembly_reproduces_single_face_oracle() {
        let mesh = StructuredMesh::new(4, 4, 2.0, 2.0).unwrap();
        let mut rho = CellField::constant(16, 1.0);
        rho[1] = 2.0f64.sqrt();
        let gas = GasLaw::new(2.0).unwrap();
        let p = gas.pressure_field(&rho).unwrap();
        let mut u = CellVectorField::constant(16, Vec2::ZERO);
        u[0] = Vec2::new(0.6, 0.1);
        u[1] = Vec2::new(0.0, -0.3);
        let settings = FluxSettings::new(1.0, 0.1, 1.0);
        let fx = assemble_fluxes(&mesh, &rho, &u, &p, &settings).unwrap();
        // face 0: K = 0, L = 1, p jump 1 over hx = 0.5 -> du = 0.2
        let du = 0.2;
        let (wp, wm) = split_normal_velocity(0.3, du);
        let mf = mass_flux(rho[0], rho[1], wp, wm);
        let g = momentum_flux(mf.plus, mf.minus, u[0], u[1]);
        assert!((fx.delta_u[0] - du).abs() < 1e-15);
        assert!((fx.f[0] - mf.total).abs() < 1e-15);
        assert!((fx.g[0] - g).norm() < 1e-15);
    }

    #[test]
    fn mass_flux_telescopes() {
        let mesh = StructuredMesh::new(6, 5, 1.0, 1.0).unwrap();
        let gas = GasLaw::new(1.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let rho = CellField::from_fn(30, |_| rng.random_range(0.5..2.0));
            let u = CellVectorField::from_fn(30, |_| {
                Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let p = gas.pressure_field(&rho).unwrap();
            let fx =
                assemble_fluxes(&mesh, &rho, &u, &p, &FluxSettings::new(4.0, 0.01, 0.3)).unwrap();
            let div = fx.mass_divergence(&mesh);
            let total = mesh.integrate(&div);
            let scale: f64 = fx.f.iter().map(|v| v.abs()).sum::<f64>() * mesh.hx();
            assert!(total.abs() <= 1e-12 * scale);
            let mdiv = fx.momentum_divergence(&mesh);
            assert!(mesh.integrate_vector(&mdiv).norm() <= 1e-12 * scale.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn split_signs_and_sum(u in -5.0f64..5.0, du in -5.0f64..5.0,
                               rk in 0.01f64..10.0, rl in 0.01f64..10.0) {
            let (wp, wm) = split_normal_velocity(u, du);
            prop_assert!(wp >= 0.0);
            prop_assert!(wm <= 0.0);
            prop_assert!((wp + wm - (u - du)).abs() <= 1e-14 * (1.0 + u.abs() + du.abs()));
            let mf = mass_flux(rk, rl, wp, wm);
            prop_assert!(mf.plus >= 0.0);
            prop_assert!(mf.minus <= 0.0);
            prop_assert_eq!(mf.total, mf.plus + mf.minus);
            // Seen from L the split parts swap roles with opposite sign.
            let (lp, lm) = split_normal_velocity(-u, -du);
            let ml = mass_flux(rl, rk, lp, lm);
            prop_assert!((ml.plus + mf.minus).abs() <= 1e-13 * (1.0 + mf.minus.abs()));
            prop_assert!((ml.minus + mf.plus).abs() <= 1e-13 * (1.0 + mf.plus.abs()));
        }
    }
}
