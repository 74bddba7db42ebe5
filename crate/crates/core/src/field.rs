//! Dense row-major pixel grids.
//!
//! Pixel `(u, v)` lives at `data[v * width + u]`; `u` runs rightward and `v`
//! downward from the top-left corner.

use crate::error::{Error, Result};
use crate::photometry::AlbedoHS;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Depth in millimetres along the unit ray, or any other per-pixel scalar.
pub type ScalarField = Grid<f64>;
pub type VectorField = Grid<Vec3>;
/// Unit normals, oriented toward the camera.
pub type NormalMap = Grid<Vec3>;
/// RGB colours in `[0, 1]`.
pub type ColorImage = Grid<Vec3>;
pub type AlbedoField = Grid<AlbedoHS>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "grid of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    /// Fallible variant of [`Grid::from_fn`]; stops at the first error.
    pub fn try_from_fn<E>(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> std::result::Result<T, E>,
    ) -> std::result::Result<Self, E> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v)?);
            }
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, T> {
        self.data.chunks(self.width.max(1))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Errors with [`Error::Shape`] unless `other` has the same resolution.
    pub fn check_same_shape<U>(
        &self,
        name: &'static str,
        other: &Grid<U>,
        other_name: &'static str,
    ) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                left_name: name,
                left: self.shape(),
                right_name: other_name,
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl ScalarField {
    /// Fails on the first non-positive or non-finite value.
    pub fn check_positive(&self, what: &str) -> Result<()> {
        for (i, &d) in self.data.iter().enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::domain(format!(
                    "{what} must be positive and finite, got {d} at pixel ({}, {})",
                    i % self.width,
                    i / self.width
                )));
            }
        }
        Ok(())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (u, v): (usize, usize)) -> &T {
        self.get(u, v)
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (u, v): (usize, usize)) -> &mut T {
        self.get_mut(u, v)
    }
}

/// Sums `f(row)` over rows in parallel, then adds the row totals in row
/// order so the result does not depend on the thread count.
pub(crate) fn sum_rows(height: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    use rayon::prelude::*;
    let partial: Vec<f64> = (0..height).into_par_iter().map(f).collect();
    partial.iter().sum()
}
