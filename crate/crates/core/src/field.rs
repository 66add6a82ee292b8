use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// One value per cell, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Field(format!(
                "expected {} values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Field(format!("non-finite value at cell {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let [x, y] = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid.same_shape(&other.grid));
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `sum(values) * h^2`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L^ell` norm, `(sum |f|^ell h^2)^(1/ell)`.
    pub fn lp_norm(&self, ell: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(ell)).sum();
        (s * self.grid.cell_area()).powf(1.0 / ell)
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn l2_distance(&self, other: &ScalarField) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s * self.grid.cell_area()).sqrt()
    }
}

/// One 2-vector per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid2D,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(grid: Grid2D, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Field(format!(
                "expected {} vectors, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[self.grid.index(i, j)]
    }

    pub fn magnitude(&self) -> ScalarField {
        let values = self.values.iter().map(|v| v[0].hypot(v[1])).collect();
        ScalarField::new(self.grid, values).expect("magnitudes of finite vectors")
    }

    pub fn magnitude_squared(&self) -> ScalarField {
        let values = self.values.iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
        ScalarField::new(self.grid, values).expect("finite")
    }
}

/// Normal velocities on cell faces.
///
/// `x_faces[j * (nx + 1) + i]` is the x-component on the west face of cell
/// `(i, j)`; `y_faces[j * nx + i]` the y-component on its south face. Boundary
/// entries are held at zero (no-flow boundary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxField {
    grid: Grid2D,
    x_faces: Vec<f64>,
    y_faces: Vec<f64>,
}

impl FluxField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            x_faces: vec![0.0; grid.x_face_count()],
            y_faces: vec![0.0; grid.y_face_count()],
        }
    }

    /// Builds a flux field, zeroing every boundary face.
    pub fn new(grid: Grid2D, mut x_faces: Vec<f64>, mut y_faces: Vec<f64>) -> Result<Self> {
        if x_faces.len() != grid.x_face_count() || y_faces.len() != grid.y_face_count() {
            return Err(Error::Field(format!(
                "face counts {}/{} do not match grid ({}/{})",
                x_faces.len(),
                y_faces.len(),
                grid.x_face_count(),
                grid.y_face_count()
            )));
        }
        if x_faces.iter().chain(&y_faces).any(|v| !v.is_finite()) {
            return Err(Error::Field("non-finite face flux".into()));
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        for j in 0..ny {
            x_faces[grid.x_face(0, j)] = 0.0;
            x_faces[grid.x_face(nx, j)] = 0.0;
        }
        for i in 0..nx {
            y_faces[grid.y_face(i, 0)] = 0.0;
            y_faces[grid.y_face(i, ny)] = 0.0;
        }
        Ok(Self {
            grid,
            x_faces,
            y_faces,
        })
    }

    /// Samples the normal components of `f` at interior face centres.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut xf = vec![0.0; grid.x_face_count()];
        let mut yf = vec![0.0; grid.y_face_count()];
        for j in 0..grid.ny() {
            for i in 1..grid.nx() {
                let [x, y] = grid.x_face_center(i, j);
                xf[grid.x_face(i, j)] = f(x, y)[0];
            }
        }
        for j in 1..grid.ny() {
            for i in 0..grid.nx() {
                let [x, y] = grid.y_face_center(i, j);
                yf[grid.y_face(i, j)] = f(x, y)[1];
            }
        }
        Self::new(grid, xf, yf).expect("sampled fluxes")
    }

    /// Divergence-free fluxes from a stream function sampled at vertices.
    ///
    /// `v = (d psi/dy, -d psi/dx)`; discrete divergence vanishes identically
    /// and boundary faces carry no flow when `psi` is constant on the boundary.
    pub fn from_stream_function(grid: Grid2D, psi: impl Fn(f64, f64) -> f64) -> Self {
        let (nx, ny, h) = (grid.nx(), grid.ny(), grid.h());
        let mut vertex = vec![0.0; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                let [x, y] = grid.vertex(i, j);
                vertex[j * (nx + 1) + i] = psi(x, y);
            }
        }
        let at = |i: usize, j: usize| vertex[j * (nx + 1) + i];
        let mut xf = vec![0.0; grid.x_face_count()];
        let mut yf = vec![0.0; grid.y_face_count()];
        for j in 0..ny {
            for i in 1..nx {
                xf[grid.x_face(i, j)] = (at(i, j + 1) - at(i, j)) / h;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                yf[grid.y_face(i, j)] = -(at(i + 1, j) - at(i, j)) / h;
            }
        }
        Self::new(grid, xf, yf).expect("stream function fluxes")
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn x_faces(&self) -> &[f64] {
        &self.x_faces
    }

    #[inline]
    pub fn y_faces(&self) -> &[f64] {
        &self.y_faces
    }

    /// Multiplies every flux by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            x_faces: self.x_faces.iter().map(|v| v * factor).collect(),
            y_faces: self.y_faces.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x_faces
            .iter()
            .chain(&self.y_faces)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn boundary_is_closed(&self) -> bool {
        let g = &self.grid;
        (0..g.ny()).all(|j| self.x_faces[g.x_face(0, j)] == 0.0 && self.x_faces[g.x_face(g.nx(), j)] == 0.0)
            && (0..g.nx())
                .all(|i| self.y_faces[g.y_face(i, 0)] == 0.0 && self.y_faces[g.y_face(i, g.ny())] == 0.0)
    }

    /// Cell velocity reconstructed by averaging opposite faces.
    pub fn cell_velocity(&self, i: usize, j: usize) -> [f64; 2] {
        let g = &self.grid;
        [
            0.5 * (self.x_faces[g.x_face(i, j)] + self.x_faces[g.x_face(i + 1, j)]),
            0.5 * (self.y_faces[g.y_face(i, j)] + self.y_faces[g.y_face(i, j + 1)]),
        ]
    }

    pub fn cell_velocities(&self) -> VectorField {
        let g = self.grid;
        let mut out = Vec::with_capacity(g.cell_count());
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                out.push(self.cell_velocity(i, j));
            }
        }
        VectorField::new(g, out).expect("sized")
    }
}

/// Symmetric 2x2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn isotropic(value: f64) -> Self {
        Self::new(value, 0.0, value)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// `xi . T xi`.
    pub fn quadratic_form(self, xi: [f64; 2]) -> f64 {
        self.xx * xi[0] * xi[0] + 2.0 * self.xy * xi[0] * xi[1] + self.yy * xi[1] * xi[1]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(self) -> [f64; 2] {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        [mean - radius, mean + radius]
    }

    pub fn frobenius(self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

impl std::ops::Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.xx - rhs.xx, self.xy - rhs.xy, self.yy - rhs.yy)
    }
}

/// One symmetric tensor per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2Field {
    grid: Grid2D,
    values: Vec<SymTensor2>,
}

impl SymTensor2Field {
    pub fn new(grid: Grid2D, values: Vec<SymTensor2>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Field(format!(
                "expected {} tensors, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        if values.iter().any(|t| !t.is_finite()) {
            return Err(Error::Field("non-finite tensor entry".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, value: SymTensor2) -> Self {
        Self {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(usize, usize) -> SymTensor2) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(i, j));
            }
        }
        Self::new(grid, values)
    }

    /// Assembles from component fields.
    pub fn from_components(xx: &ScalarField, xy: &ScalarField, yy: &ScalarField) -> Result<Self> {
        let grid = *xx.grid();
        if !grid.same_shape(xy.grid()) || !grid.same_shape(yy.grid()) {
            return Err(Error::Field("tensor components live on different grids".into()));
        }
        let values = (0..grid.cell_count())
            .map(|k| SymTensor2::new(xx.values()[k], xy.values()[k], yy.values()[k]))
            .collect();
        Self::new(grid, values)
    }

    pub fn component(&self, pick: impl Fn(&SymTensor2) -> f64) -> ScalarField {
        ScalarField::new(self.grid, self.values.iter().map(pick).collect()).expect("finite")
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[SymTensor2] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> SymTensor2 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .map(|t| t.eigenvalues()[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn has_cross_terms(&self) -> bool {
        self.values.iter().any(|t| t.xy != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D {
        Grid2D::unit_square(4).unwrap()
    }

    #[test]
    fn scalar_field_checks_length_and_finiteness() {
        assert!(ScalarField::new(grid(), vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::INFINITY;
        assert!(ScalarField::new(grid(), v).is_err());
    }

    #[test]
    fn flux_field_zeroes_boundary_faces() {
        let g = grid();
        let f = FluxField::new(g, vec![1.0; g.x_face_count()], vec![2.0; g.y_face_count()]).unwrap();
        assert!(f.boundary_is_closed());
        assert_eq!(f.x_faces()[g.x_face(1, 0)], 1.0);
        assert_eq!(f.y_faces()[g.y_face(0, 1)], 2.0);
    }

    #[test]
    fn stream_function_fluxes_close_the_boundary() {
        let g = Grid2D::unit_square(8).unwrap();
        let pi = std::f64::consts::PI;
        let f = FluxField::from_stream_function(g, |x, y| (pi * x).sin() * (pi * y).sin());
        assert!(f.boundary_is_closed());
        assert!(f.max_abs() > 0.1);
    }

    #[test]
    fn tensor_eigenvalues_of_diagonal() {
        let t = SymTensor2::new(3.0, 0.0, 1.0);
        assert_eq!(t.eigenvalues(), [1.0, 3.0]);
        let r = SymTensor2::new(2.0, 1.0, 2.0).eigenvalues();
        assert!((r[0] - 1.0).abs() < 1e-15 && (r[1] - 3.0).abs() < 1e-15);
    }
}
