//! Piecewise-constant data on primal cells and on dual (face) cells.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::math;

/// A vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

macro_rules! field_type {
    ($(#[$meta:meta])* $name:ident, $elem:ty) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            values: Vec<$elem>,
        }

        impl $name {
            pub fn from_vec(values: Vec<$elem>) -> Self {
                Self { values }
            }

            pub fn constant(len: usize, value: $elem) -> Self {
                Self { values: vec![value; len] }
            }

            pub fn from_fn(len: usize, f: impl FnMut(usize) -> $elem) -> Self {
                Self { values: (0..len).map(f).collect() }
            }

            #[inline]
            pub fn len(&self) -> usize {
                self.values.len()
            }

            #[inline]
            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            #[inline]
            pub fn as_slice(&self) -> &[$elem] {
                &self.values
            }

            #[inline]
            pub fn as_mut_slice(&mut self) -> &mut [$elem] {
                &mut self.values
            }

            pub fn iter(&self) -> core::slice::Iter<'_, $elem> {
                self.values.iter()
            }

            pub fn into_vec(self) -> Vec<$elem> {
                self.values
            }
        }

        impl Index<usize> for $name {
            type Output = $elem;
            #[inline]
            fn index(&self, i: usize) -> &$elem {
                &self.values[i]
            }
        }

        impl IndexMut<usize> for $name {
            #[inline]
            fn index_mut(&mut self, i: usize) -> &mut $elem {
                &mut self.values[i]
            }
        }

        impl<'a> IntoIterator for &'a $name {
            type Item = &'a $elem;
            type IntoIter = core::slice::Iter<'a, $elem>;
            fn into_iter(self) -> Self::IntoIter {
                self.values.iter()
            }
        }
    };
}

field_type!(
    /// One scalar per primal cell, indexed `i + nx * j`.
    CellField,
    f64
);
field_type!(
    /// One vector per primal cell.
    CellVectorField,
    Vec2
);
field_type!(
    /// One scalar per face (dual cell); x-faces first, then y-faces.
    FaceField,
    f64
);
field_type!(
    /// One vector per face (dual cell).
    FaceVectorField,
    Vec2
);

macro_rules! scalar_helpers {
    ($name:ident) => {
        impl $name {
            pub fn min(&self) -> f64 {
                self.values.iter().copied().fold(f64::INFINITY, f64::min)
            }

            pub fn max(&self) -> f64 {
                self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
            }

            pub fn all_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }
        }
    };
}

scalar_helpers!(CellField);
scalar_helpers!(FaceField);

impl CellVectorField {
    /// Extract the x (`0`) or y (`1`) component.
    pub fn component(&self, axis: usize) -> CellField {
        CellField::from_fn(self.len(), |k| match axis {
            0 => self.values[k].x,
            _ => self.values[k].y,
        })
    }

    pub fn from_components(x: &CellField, y: &CellField) -> Self {
        assert_eq!(x.len(), y.len());
        Self::from_fn(x.len(), |k| Vec2::new(x[k], y[k]))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
