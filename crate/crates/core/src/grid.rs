use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centred grid on a rectangle.
///
/// Cells are indexed `(i, j)` with `i` along x; storage is row-major,
/// `index = j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    h: f64,
    origin: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Grid(format!("need at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Grid(format!("cell width must be positive, got {h}")));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::Grid("origin must be finite".into()));
        }
        Ok(Self { nx, ny, h, origin })
    }

    /// `n x n` cells covering the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0 / n as f64, [0.0, 0.0])
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
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn area(&self) -> f64 {
        self.cell_count() as f64 * self.cell_area()
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.nx as f64 * self.h, self.ny as f64 * self.h]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    /// Number of x-normal faces, `(nx + 1) * ny`.
    #[inline]
    pub fn x_face_count(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    /// Number of y-normal faces, `nx * (ny + 1)`.
    #[inline]
    pub fn y_face_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// x-face on the west side of cell `(i, j)`; `i == nx` is the east boundary.
    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// y-face on the south side of cell `(i, j)`; `j == ny` is the north boundary.
    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Location of the centre of x-face `(i, j)`.
    pub fn x_face_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    pub fn y_face_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    /// Grid vertex `(i, j)` with `0 <= i <= nx`, `0 <= j <= ny`.
    pub fn vertex(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    /// Dyadic radius ladder `{h, 2h, 4h, ...}` with `levels` entries.
    pub fn dyadic_ladder(&self, levels: usize) -> Vec<f64> {
        (0..levels).map(|k| self.h * (1u64 << k) as f64).collect()
    }

    /// Dyadic ladder extended until a ball of the largest radius covers the domain.
    pub fn covering_ladder(&self) -> Vec<f64> {
        let [lx, ly] = self.extent();
        let diag = (lx * lx + ly * ly).sqrt();
        let mut radii = vec![self.h];
        while *radii.last().unwrap() < diag {
            let next = radii.last().unwrap() * 2.0;
            radii.push(next);
        }
        radii
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.h == other.h
    }
}
