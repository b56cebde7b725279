//! Banded LU without pivoting, plus a row ordering that gives the periodic
//! five-point stencil a bandwidth of `2 nx`.
//!
//! The density Jacobian is a column diagonally dominant M-matrix, for which
//! Gaussian elimination without pivoting is backward stable, so no pivoting
//! (and no fill outside the band) is needed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Square matrix with equal lower and upper half-bandwidth `bw`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        let width = 2 * bw + 1;
        BandedMatrix {
            n,
            bw,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i}, {j}) outside band {}", self.bw);
        i * self.width + (j + self.bw - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                (lo..hi).map(|j| self.data[self.offset(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorisation (unit lower factor stored below the diagonal).
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, bw, width) = (self.n, self.bw, self.width);
        for k in 0..n {
            let pivot = self.data[k * width + bw];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::ZeroPivot { row: k });
            }
            let hi = (k + bw + 1).min(n);
            let len = hi - k - 1;
            for i in k + 1..hi {
                let lik = i * width + (k + bw - i);
                let l = self.data[lik] / pivot;
                self.data[lik] = l;
                if l == 0.0 {
                    continue;
                }
                // Row k from column k+1, row i from column k+1: both contiguous.
                let src = k * width + bw + 1;
                let dst = i * width + (k + 1 + bw - i);
                let (head, tail) = self.data.split_at_mut(dst);
                let row_k = &head[src..src + len];
                for (a, b) in tail[..len].iter_mut().zip(row_k) {
                    *a -= l * b;
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let BandedMatrix {
            n, bw, width, data, ..
        } = &self.m;
        let (n, bw, width) = (*n, *bw, *width);
        assert_eq!(x.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &data[i * width + (lo + bw - i)..i * width + bw];
            let s: f64 = row.iter().zip(&x[lo..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let row = &data[i * width + bw + 1..i * width + bw + (hi - i)];
            let s: f64 = row.iter().zip(&x[i + 1..hi]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / data[i * width + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Maps cell indices to matrix rows. Grid rows are interleaved from both
/// ends (`0, ny-1, 1, ny-2, ...`) so that the periodic wrap in `y` only
/// spans one grid row of the matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOrdering {
    nx: usize,
    ny: usize,
    cell_to_row: Vec<usize>,
    row_to_cell: Vec<usize>,
}

impl GridOrdering {
    pub fn new(nx: usize, ny: usize) -> Self {
        let pos = |j: usize| if 2 * j < ny { 2 * j } else { 2 * (ny - 1 - j) + 1 };
        let mut cell_to_row = vec![0; nx * ny];
        let mut row_to_cell = vec![0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = i + nx * j;
                let r = i + nx * pos(j);
                cell_to_row[k] = r;
                row_to_cell[r] = k;
            }
        }
        GridOrdering {
            nx,
            ny,
            cell_to_row,
            row_to_cell,
        }
    }

    /// Half-bandwidth of any matrix with the periodic five-point pattern.
    pub fn bandwidth(&self) -> usize {
        if self.ny <= 2 {
            self.nx * self.ny
        } else {
            2 * self.nx
        }
    }

    #[inline]
    pub fn row(&self, cell: usize) -> usize {
        self.cell_to_row[cell]
    }

    #[inline]
    pub fn cell(&self, row: usize) -> usize {
        self.row_to_cell[row]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::StructuredMesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let l = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= l * a[k][j];
                }
                b[i] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn banded_matches_dense_on_random_diagonally_dominant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, bw) in &[(1, 0), (5, 1), (12, 3), (30, 7), (9, 20)] {
            let mut m = BandedMatrix::zeros(n, bw);
            let bw = m.bandwidth();
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                let mut row_sum = 0.0;
                for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                    if i != j {
                        let v: f64 = rng.random_range(-1.0..1.0);
                        m.add(i, j, v);
                        dense[i][j] = v;
                        row_sum += v.abs();
                    }
                }
                m.add(i, i, row_sum + 1.0);
                dense[i][i] = row_sum + 1.0;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let expected = dense_solve(dense, b.clone());
            let ax = m.mul_vec(&expected);
            for i in 0..n {
                assert!((ax[i] - b[i]).abs() < 1e-12);
            }
            let x = m.factor().unwrap().solve(&b);
            for i in 0..n {
                assert!((x[i] - expected[i]).abs() < 1e-12, "n {n} i {i}");
            }
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut m = BandedMatrix::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(2, 2, 1.0);
        assert_eq!(m.factor().unwrap_err(), Error::ZeroPivot { row: 1 });
    }

    #[test]
    fn ordering_is_a_permutation_with_stencil_inside_band() {
        for &(nx, ny) in &[(3, 3), (4, 7), (8, 8), (5, 6), (16, 3)] {
            let ord = GridOrdering::new(nx, ny);
            let mesh = StructuredMesh::new(nx, ny, 1.0, 1.0).unwrap();
            let mut seen = vec![false; nx * ny];
            for k in 0..nx * ny {
                let r = ord.row(k);
                assert!(!seen[r]);
                seen[r] = true;
                assert_eq!(ord.cell(r), k);
            }
            for f in mesh.faces() {
                let d = ord.row(f.k).abs_diff(ord.row(f.l));
                assert!(d <= ord.bandwidth(), "{nx}x{ny}: {d}");
            }
        }
    }
}
