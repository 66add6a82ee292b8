//! Elliptic pressure problem `-div((1/mu(u)) K grad p) = q_I - q_P` with
//! no-flow boundaries and zero-mean normalisation.
//!
//! Five-point finite volumes: each interior face carries a transmissibility,
//! the harmonic mean of the two adjacent cells' `K/mu`. Off-diagonal
//! permeability enters through a flux built from averaged transverse
//! differences; the full operator is then solved with BiCGSTAB.

use crate::coefficients::{viscosity, FluidSpec, MediumSpec, SourceSpec};
use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField, SymTensor2};
use crate::grid::Grid2D;
use crate::linalg::{self, bicgstab, conjugate_gradient, LinearOperator, SolverOptions};
use crate::ops::{divergence, gradient, mean_over};
use crate::region::Ball;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureOptions {
    /// Relative residual target; also the cellwise absolute target in
    /// source-density units.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PressureOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureSolution {
    pub p: ScalarField,
    pub v: FluxField,
    /// `max_c |div v - (q_I - q_P)|`.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Cell mobility tensor `K / mu(u)`.
fn mobility(medium: &MediumSpec, fluid: &FluidSpec, u: &ScalarField) -> Vec<SymTensor2> {
    medium
        .permeability
        .values()
        .iter()
        .zip(u.values())
        .map(|(k, &uc)| k.scale(1.0 / viscosity(uc, fluid)))
        .collect()
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Face transmissibilities and cross-term coefficients for one mobility field.
#[derive(Debug, Clone)]
pub struct Transmissibility {
    grid: Grid2D,
    /// Harmonic-mean `(K/mu)_xx` on x-faces (zero on the boundary).
    tx: Vec<f64>,
    /// Harmonic-mean `(K/mu)_yy` on y-faces.
    ty: Vec<f64>,
    /// Arithmetic-mean `(K/mu)_xy` on x- and y-faces; empty when K is diagonal.
    cross_x: Vec<f64>,
    cross_y: Vec<f64>,
}

impl Transmissibility {
    pub fn assemble(medium: &MediumSpec, fluid: &FluidSpec, u: &ScalarField) -> Self {
        let grid = *u.grid();
        let mob = mobility(medium, fluid, u);
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut tx = vec![0.0; grid.x_face_count()];
        let mut ty = vec![0.0; grid.y_face_count()];
        for j in 0..ny {
            for i in 1..nx {
                let (l, r) = (mob[grid.index(i - 1, j)], mob[grid.index(i, j)]);
                tx[grid.x_face(i, j)] = harmonic(l.xx, r.xx);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let (s, n) = (mob[grid.index(i, j - 1)], mob[grid.index(i, j)]);
                ty[grid.y_face(i, j)] = harmonic(s.yy, n.yy);
            }
        }
        let (mut cross_x, mut cross_y) = (Vec::new(), Vec::new());
        if medium.permeability.has_cross_terms() {
            cross_x = vec![0.0; grid.x_face_count()];
            cross_y = vec![0.0; grid.y_face_count()];
            for j in 0..ny {
                for i in 1..nx {
                    cross_x[grid.x_face(i, j)] =
                        0.5 * (mob[grid.index(i - 1, j)].xy + mob[grid.index(i, j)].xy);
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    cross_y[grid.y_face(i, j)] =
                        0.5 * (mob[grid.index(i, j - 1)].xy + mob[grid.index(i, j)].xy);
                }
            }
        }
        Self {
            grid,
            tx,
            ty,
            cross_x,
            cross_y,
        }
    }

    pub fn has_cross_terms(&self) -> bool {
        !self.cross_x.is_empty()
    }

    /// Two-point part of the face velocities, `-T (p_R - p_L) / h`.
    fn two_point_fluxes(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let h = g.h();
        let mut xf = vec![0.0; g.x_face_count()];
        let mut yf = vec![0.0; g.y_face_count()];
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                let f = g.x_face(i, j);
                xf[f] = -self.tx[f] * (p[g.index(i, j)] - p[g.index(i - 1, j)]) / h;
            }
        }
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                let f = g.y_face(i, j);
                yf[f] = -self.ty[f] * (p[g.index(i, j)] - p[g.index(i, j - 1)]) / h;
            }
        }
        (xf, yf)
    }

    /// Off-diagonal flux `-(K/mu)_xy * transverse derivative` on each face.
    fn cross_fluxes(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut xf = vec![0.0; g.x_face_count()];
        let mut yf = vec![0.0; g.y_face_count()];
        if !self.has_cross_terms() {
            return (xf, yf);
        }
        let field = ScalarField::new(*g, p.to_vec()).expect("finite pressure");
        let grad = gradient(&field);
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                let f = g.x_face(i, j);
                let dpdy = 0.5 * (grad.at(i - 1, j)[1] + grad.at(i, j)[1]);
                xf[f] = -self.cross_x[f] * dpdy;
            }
        }
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                let f = g.y_face(i, j);
                let dpdx = 0.5 * (grad.at(i, j - 1)[0] + grad.at(i, j)[0]);
                yf[f] = -self.cross_y[f] * dpdx;
            }
        }
        (xf, yf)
    }

    /// Full Darcy face velocities for pressure `p`.
    pub fn velocity(&self, p: &ScalarField) -> FluxField {
        let (mut xf, mut yf) = self.two_point_fluxes(p.values());
        if self.has_cross_terms() {
            let (cx, cy) = self.cross_fluxes(p.values());
            xf.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            yf.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
        }
        FluxField::new(self.grid, xf, yf).expect("finite fluxes")
    }
}

impl LinearOperator for Transmissibility {
    fn len(&self) -> usize {
        self.grid.cell_count()
    }

    /// `(A p)_c = h^-2 sum_f T_f (p_c - p_nb)`, i.e. the divergence of the
    /// two-point fluxes.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.h() * g.h());
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let c = g.index(i, j);
                let pc = x[c];
                let mut acc = 0.0;
                if i > 0 {
                    acc += self.tx[g.x_face(i, j)] * (pc - x[c - 1]);
                }
                if i + 1 < g.nx() {
                    acc += self.tx[g.x_face(i + 1, j)] * (pc - x[c + 1]);
                }
                if j > 0 {
                    acc += self.ty[g.y_face(i, j)] * (pc - x[c - g.nx()]);
                }
                if j + 1 < g.ny() {
                    acc += self.ty[g.y_face(i, j + 1)] * (pc - x[c + g.nx()]);
                }
                y[c] = acc * inv_h2;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.h() * g.h());
        let mut d = Vec::with_capacity(g.cell_count());
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let s = self.tx[g.x_face(i, j)]
                    + self.tx[g.x_face(i + 1, j)]
                    + self.ty[g.y_face(i, j)]
                    + self.ty[g.y_face(i, j + 1)];
                d.push(s * inv_h2);
            }
        }
        d
    }
}

/// `div v(p)` including the off-diagonal fluxes, acting on the zero-mean part
/// of its argument.
struct FullOperator<'a> {
    trans: &'a Transmissibility,
}

impl LinearOperator for FullOperator<'_> {
    fn len(&self) -> usize {
        self.trans.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut centred = x.to_vec();
        linalg::remove_mean(&mut centred);
        let p = ScalarField::new(self.trans.grid, centred).expect("finite pressure");
        y.copy_from_slice(divergence(&self.trans.velocity(&p)).values());
    }

    fn diagonal(&self) -> Vec<f64> {
        self.trans.diagonal()
    }
}

/// Solves for pressure given a right-hand side density `rhs` (normally
/// `q_I - q_P`).
pub fn solve_pressure_rhs(
    u: &ScalarField,
    medium: &MediumSpec,
    fluid: &FluidSpec,
    rhs: &ScalarField,
    opts: &PressureOptions,
) -> Result<PressureSolution> {
    let grid = *u.grid();
    let total = rhs.integral();
    if total.abs() > 1e-10 * grid.area() {
        return Err(Error::Config(format!(
            "pressure right-hand side integrates to {total:.3e}; sources are not balanced"
        )));
    }
    let mut b = rhs.values().to_vec();
    linalg::remove_mean(&mut b);
    let trans = Transmissibility::assemble(medium, fluid, u);
    let solver = SolverOptions::new(opts.tol, opts.tol, opts.max_iter);
    let mut p = vec![0.0; grid.cell_count()];
    let mut iterations = 0;

    let stats = conjugate_gradient(&trans, &b, &mut p, &solver, true)?;
    iterations += stats.iterations;
    if trans.has_cross_terms() {
        // the two-point solution seeds a Krylov solve of the full operator
        let full = FullOperator { trans: &trans };
        let stats = bicgstab(&full, &b, &mut p, &solver)?;
        iterations += stats.iterations;
    }
    linalg::remove_mean(&mut p);
    let p = ScalarField::new(grid, p)?;
    let mut target = rhs.values().to_vec();
    linalg::remove_mean(&mut target);
    let v = reconcile_fluxes(trans.velocity(&p), &target);
    let residual_norm = divergence(&v).sup_distance(rhs);
    Ok(PressureSolution {
        p,
        v,
        residual_norm,
        iterations,
    })
}

/// Adds a spanning-tree flux correction so that `div v` matches `target`
/// (which must sum to zero) up to rounding: each row is swept from east to
/// west, and the row totals are carried down the first column. The correction
/// is of the size of the solver residual.
fn reconcile_fluxes(v: FluxField, target: &[f64]) -> FluxField {
    let g = *v.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let div = divergence(&v);
    let r: Vec<f64> = target.iter().zip(div.values()).map(|(t, d)| (t - d) * h).collect();
    let mut xf = v.x_faces().to_vec();
    let mut yf = v.y_faces().to_vec();
    let mut row_total = vec![0.0; ny];
    for j in 0..ny {
        let mut east = 0.0;
        for i in (1..nx).rev() {
            let west = east - r[g.index(i, j)];
            xf[g.x_face(i, j)] += west;
            east = west;
        }
        row_total[j] = r[g.index(0, j)] - east;
    }
    let mut north = 0.0;
    for j in (1..ny).rev() {
        let south = north - row_total[j];
        yf[g.y_face(0, j)] += south;
        north = south;
    }
    FluxField::new(g, xf, yf).expect("finite fluxes")
}

/// Pressure and Darcy velocity for concentration `u`.
pub fn solve_pressure(
    u: &ScalarField,
    medium: &MediumSpec,
    fluid: &FluidSpec,
    sources: &SourceSpec,
    opts: &PressureOptions,
) -> Result<PressureSolution> {
    solve_pressure_rhs(u, medium, fluid, &sources.net(), opts)
}

/// Darcy velocity `-(1/mu(u)) K grad p` on faces, using the same
/// transmissibilities as the pressure assembly.
pub fn darcy_velocity(p: &ScalarField, u: &ScalarField, medium: &MediumSpec, fluid: &FluidSpec) -> FluxField {
    Transmissibility::assemble(medium, fluid, u).velocity(p)
}

/// Empirical reverse-Hoelder ratio
/// `(avg_{B_r/2} |grad p|^s)^(1/s) / [(avg_{B_r} |grad p|^2)^(1/2) + r (avg_{B_r} |q_I - q_P|^s)^(1/s)]`.
///
/// Requires the doubled ball to fit in the domain. A vanishing denominator
/// yields 0.
pub fn reverse_holder_diagnostic(p: &ScalarField, ball: &Ball, s: f64, sources: &SourceSpec) -> Result<f64> {
    if !(s > 2.0) {
        return Err(Error::Config(format!("integrability exponent must exceed 2, got {s}")));
    }
    let grid = *p.grid();
    if !ball.scaled_fits(&grid, 2.0) {
        return Err(Error::Domain(format!(
            "doubled ball of radius {} around {:?} leaves the domain",
            2.0 * ball.radius,
            ball.center
        )));
    }
    let grad_sq = gradient(p).magnitude_squared();
    let inner = Ball::new(ball.center, 0.5 * ball.radius).members(&grid)?;
    let outer = ball.members(&grid)?;
    let g = grad_sq.values();
    let gs: Vec<f64> = g.iter().map(|v| v.powf(0.5 * s)).collect();
    let numerator = mean_over(&gs, &inner).powf(1.0 / s);
    let energy = mean_over(g, &outer).sqrt();
    let net: Vec<f64> = sources.net().values().iter().map(|v| v.abs().powf(s)).collect();
    let source_term = ball.radius * mean_over(&net, &outer).powf(1.0 / s);
    let denominator = energy + source_term;
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok(numerator / denominator)
}
