//! Periodic uniform Cartesian mesh and the discrete operators living on it.
//!
//! Cells are indexed row-major, `k = i + nx * j`. Faces are stored in two
//! contiguous blocks: the x-face between `(i, j)` and `(i + 1, j)` has index
//! `i + nx * j`, the y-face between `(i, j)` and `(i, j + 1)` has index
//! `nx * ny + i + nx * j` (all indices taken modulo the periodic wrap).
//!
//! Every face `sigma = K|L` stores `K` on its negative side and `L` on its
//! positive side, so the stored normal `n_{K,sigma}` is always `+x` or `+y`
//! and the jump is `[[q]] = q_L - q_K`. On the wrap faces this makes `K` the
//! cell with the larger index.
//!
//! The dual cell of a face is the union of the two half cells touching it,
//! so on this uniform mesh `|D_sigma| = |K|`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{CellField, CellVectorField, FaceField, FaceVectorField, Vec2};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    #[inline]
    pub fn normal(self) -> Vec2 {
        match self {
            Axis::X => Vec2::new(1.0, 0.0),
            Axis::Y => Vec2::new(0.0, 1.0),
        }
    }

    /// Component of `v` along this axis.
    #[inline]
    pub fn component(self, v: Vec2) -> f64 {
        match self {
            Axis::X => v.x,
            Axis::Y => v.y,
        }
    }
}

/// An interior face `sigma = K|L` with `n_{K,sigma}` pointing from `K` to `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub k: usize,
    pub l: usize,
    pub axis: Axis,
}

/// Cell-average quadrature used by [`StructuredMesh::project`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    #[default]
    Midpoint,
    /// Tensor-product 3-point Gauss rule (exact for bi-quintic integrands).
    Gauss3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredMesh {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    faces: Vec<Face>,
}

impl StructuredMesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::MeshTooSmall { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidDomain { lx, ly });
        }
        let mut faces = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                faces.push(Face {
                    k: i + nx * j,
                    l: (i + 1) % nx + nx * j,
                    axis: Axis::X,
                });
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                faces.push(Face {
                    k: i + nx * j,
                    l: i + nx * ((j + 1) % ny),
                    axis: Axis::Y,
                });
            }
        }
        Ok(StructuredMesh {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            faces,
        })
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn lx(&self) -> f64 {
        self.lx
    }

    #[inline]
    pub fn ly(&self) -> f64 {
        self.ly
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.hx
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Largest cell diameter.
    pub fn h(&self) -> f64 {
        math::sqrt(self.hx * self.hx + self.hy * self.hy)
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    /// `|D_sigma|`, identical for all faces on the uniform mesh.
    #[inline]
    pub fn dual_volume(&self) -> f64 {
        self.cell_volume()
    }

    /// `|sigma|`: `hy` for x-faces, `hx` for y-faces.
    #[inline]
    pub fn face_measure(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.hy,
            Axis::Y => self.hx,
        }
    }

    /// `|dK| = 2 (hx + hy)`.
    #[inline]
    pub fn boundary_measure(&self) -> f64 {
        2.0 * (self.hx + self.hy)
    }

    /// Distance between the centres of the two cells sharing a face.
    #[inline]
    pub fn center_distance(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.hx,
            Axis::Y => self.hy,
        }
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn cell_ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn cell_center(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.cell_ij(k);
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// The four faces of cell `k` as `(face index, sign)`, where the sign
    /// turns the stored normal into the outward normal of `k`. Order: east,
    /// west, north, south.
    pub fn cell_faces(&self, k: usize) -> [(usize, f64); 4] {
        let (i, j) = self.cell_ij(k);
        let nx = self.nx;
        let ny = self.ny;
        let y0 = nx * ny;
        let west = (i + nx - 1) % nx + nx * j;
        let south = i + nx * ((j + ny - 1) % ny);
        [
            (k, 1.0),
            (west, -1.0),
            (y0 + k, 1.0),
            (y0 + south, -1.0),
        ]
    }

    fn check_cells(&self, len: usize) -> Result<()> {
        if len != self.cell_count() {
            return Err(Error::SizeMismatch {
                expected: self.cell_count(),
                found: len,
            });
        }
        Ok(())
    }

    /// Cell means of `f` by the chosen quadrature.
    pub fn project(&self, quadrature: Quadrature, f: impl Fn(f64, f64) -> f64) -> CellField {
        CellField::from_fn(self.cell_count(), |k| self.cell_mean(k, quadrature, &f))
    }

    pub fn project_vector(
        &self,
        quadrature: Quadrature,
        f: impl Fn(f64, f64) -> Vec2,
    ) -> CellVectorField {
        let fx = |x, y| f(x, y).x;
        let fy = |x, y| f(x, y).y;
        CellVectorField::from_fn(self.cell_count(), |k| {
            Vec2::new(
                self.cell_mean(k, quadrature, &fx),
                self.cell_mean(k, quadrature, &fy),
            )
        })
    }

    fn cell_mean(&self, k: usize, quadrature: Quadrature, f: &impl Fn(f64, f64) -> f64) -> f64 {
        let (xc, yc) = self.cell_center(k);
        match quadrature {
            Quadrature::Midpoint => f(xc, yc),
            Quadrature::Gauss3 => {
                let a = math::sqrt(0.6);
                const NODES: [f64; 3] = [-1.0, 0.0, 1.0];
                const WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
                let mut sum = 0.0;
                for (nx, wx) in NODES.iter().zip(WEIGHTS) {
                    for (ny, wy) in NODES.iter().zip(WEIGHTS) {
                        let x = xc + 0.5 * self.hx * a * nx;
                        let y = yc + 0.5 * self.hy * a * ny;
                        sum += wx * wy * f(x, y);
                    }
                }
                sum
            }
        }
    }

    /// `{{q}}_sigma = (q_K + q_L) / 2`.
    pub fn face_average(&self, q: &CellField) -> FaceField {
        FaceField::from_fn(self.face_count(), |s| {
            let f = self.faces[s];
            0.5 * (q[f.k] + q[f.l])
        })
    }

    /// Face-average of a vector field, component-wise.
    pub fn face_average_vector(&self, q: &CellVectorField) -> FaceVectorField {
        FaceVectorField::from_fn(self.face_count(), |s| {
            let f = self.faces[s];
            (q[f.k] + q[f.l]) * 0.5
        })
    }

    /// `[[q]]_sigma = q_L - q_K` with the stored orientation.
    pub fn face_jump(&self, q: &CellField) -> FaceField {
        FaceField::from_fn(self.face_count(), |s| {
            let f = self.faces[s];
            q[f.l] - q[f.k]
        })
    }

    /// Cell-centred gradient `(grad_T q)_K = sum_sigma |sigma|/|K| {{q}} n_{K,sigma}`.
    pub fn cell_gradient(&self, q: &CellField) -> CellVectorField {
        let mut out = CellVectorField::constant(self.cell_count(), Vec2::ZERO);
        let vol = self.cell_volume();
        for f in &self.faces {
            let contribution =
                f.axis.normal() * (self.face_measure(f.axis) / vol * 0.5 * (q[f.k] + q[f.l]));
            out[f.k] += contribution;
            out[f.l] -= contribution;
        }
        out
    }

    /// Dual-cell gradient `(grad_E q)_sigma = |sigma|/|D_sigma| [[q]] n_{K,sigma}`.
    pub fn face_gradient(&self, q: &CellField) -> FaceVectorField {
        FaceVectorField::from_fn(self.face_count(), |s| {
            let f = self.faces[s];
            f.axis.normal() * self.face_normal_gradient_at(q, s)
        })
    }

    /// Normal component `(grad_E q)_sigma . n_{K,sigma}` of the dual gradient.
    pub fn face_normal_gradient(&self, q: &CellField) -> FaceField {
        FaceField::from_fn(self.face_count(), |s| self.face_normal_gradient_at(q, s))
    }

    #[inline]
    fn face_normal_gradient_at(&self, q: &CellField, s: usize) -> f64 {
        let f = self.faces[s];
        self.face_measure(f.axis) / self.dual_volume() * (q[f.l] - q[f.k])
    }

    /// `(div_T phi)_K = sum_sigma |sigma|/|K| {{phi}}_sigma . n_{K,sigma}`.
    pub fn cell_divergence(&self, phi: &CellVectorField) -> CellField {
        let mut out = CellField::constant(self.cell_count(), 0.0);
        let vol = self.cell_volume();
        for f in &self.faces {
            let avg = (phi[f.k] + phi[f.l]) * 0.5;
            let flux = self.face_measure(f.axis) / vol * f.axis.component(avg);
            out[f.k] += flux;
            out[f.l] -= flux;
        }
        out
    }

    /// `sum_K |K| q_K`.
    pub fn integrate(&self, q: &CellField) -> f64 {
        self.cell_volume() * q.iter().sum::<f64>()
    }

    pub fn integrate_vector(&self, q: &CellVectorField) -> Vec2 {
        let mut sum = Vec2::ZERO;
        for v in q {
            sum += *v;
        }
        sum * self.cell_volume()
    }

    /// Discrete `L^2` norm `(sum_K |K| q_K^2)^(1/2)`.
    pub fn l2_norm(&self, q: &CellField) -> f64 {
        math::sqrt(self.cell_volume() * q.iter().map(|v| v * v).sum::<f64>())
    }

    pub fn l2_norm_vector(&self, q: &CellVectorField) -> f64 {
        math::sqrt(self.cell_volume() * q.iter().map(|v| v.norm_sq()).sum::<f64>())
    }

    /// Block average of a field given on an integer refinement of `self`.
    pub fn restrict_from(&self, fine_mesh: &StructuredMesh, fine: &CellField) -> Result<CellField> {
        fine_mesh.check_cells(fine.len())?;
        let nested = fine_mesh.nx % self.nx == 0
            && fine_mesh.ny % self.ny == 0
            && fine_mesh.nx >= self.nx
            && fine_mesh.ny >= self.ny
            && (fine_mesh.lx - self.lx).abs() <= 1e-12 * self.lx
            && (fine_mesh.ly - self.ly).abs() <= 1e-12 * self.ly;
        if !nested {
            return Err(Error::NonNestedGrids);
        }
        let rx = fine_mesh.nx / self.nx;
        let ry = fine_mesh.ny / self.ny;
        let weight = 1.0 / (rx * ry) as f64;
        Ok(CellField::from_fn(self.cell_count(), |k| {
            let (i, j) = self.cell_ij(k);
            let mut sum = 0.0;
            for jj in 0..ry {
                for ii in 0..rx {
                    sum += fine[fine_mesh.cell_index(i * rx + ii, j * ry + jj)];
                }
            }
            sum * weight
        }))
    }
}
