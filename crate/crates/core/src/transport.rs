//! Implicit concentration step for the divergence-form transport equation
//!
//! ```text
//! Phi du/dt - div(Phi D_k(v) grad u - u v) + q_P u = q_I u_hat
//! ```
//!
//! Backward Euler in time, two-point diffusion with harmonic face averages,
//! first-order upwind advection. The implicit matrix is a column diagonally
//! dominant M-matrix, so `0 <= u <= 1` is preserved. Off-diagonal dispersion
//! is added as an explicit conservative flux, limited face by face so that
//! the right-hand side stays inside the band that the maximum principle
//! needs.

use serde::{Deserialize, Serialize};

use crate::coefficients::{dispersion_tensor, truncated_dispersion, FluidSpec, MediumSpec, SourceSpec};
use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField, SymTensor2};
use crate::grid::Grid2D;
use crate::linalg::{banded_direct, bicgstab, norm_inf, BandedMatrix, LinearOperator, SolverOptions};
use crate::ops::gradient;

/// How the off-diagonal part of the dispersion tensor is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossDiffusion {
    /// Dropped.
    Off,
    /// Explicit flux built from the step's initial concentration.
    #[default]
    Deferred,
    /// Explicit flux built from the previous fixed-point iterate.
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded LU with iterative refinement.
    #[default]
    Direct,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOptions {
    /// Normwise backward-error target for the linear solve.
    pub tol: f64,
    pub max_iter: usize,
    pub cross_diffusion: CrossDiffusion,
    pub solver: LinearSolver,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
            cross_diffusion: CrossDiffusion::Deferred,
            solver: LinearSolver::Direct,
        }
    }
}

/// Everything except the concentration that one transport step needs.
#[derive(Debug, Clone, Copy)]
pub struct TransportProblem<'a> {
    pub medium: &'a MediumSpec,
    pub fluid: &'a FluidSpec,
    pub sources: &'a SourceSpec,
    pub velocity: &'a FluxField,
    pub dt: f64,
    /// Velocity truncation level; `None` uses the untruncated tensor.
    pub k_trunc: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportStepReport {
    pub u_new: ScalarField,
    /// `sum Phi u_old h^2`.
    pub mass_before: f64,
    /// `sum Phi u_new h^2`.
    pub mass_after: f64,
    /// `dt * sum (q_I u_hat - q_P u_new + forcing) h^2`.
    pub source_mass: f64,
    pub dt: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub linear_iterations: usize,
}

impl TransportStepReport {
    /// `mass_after - mass_before - source_mass`.
    pub fn balance_defect(&self) -> f64 {
        self.mass_after - self.mass_before - self.source_mass
    }

    pub fn mass_scale(&self) -> f64 {
        self.mass_before.abs().max(self.mass_after.abs()).max(self.source_mass.abs())
    }
}

/// Five-point implicit operator; off-diagonals are nonpositive.
struct TransportMatrix {
    grid: Grid2D,
    diag: Vec<f64>,
    /// West, east, south, north couplings per cell.
    off: Vec<[f64; 4]>,
}

impl LinearOperator for TransportMatrix {
    fn len(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let nx = g.nx();
        for j in 0..g.ny() {
            for i in 0..nx {
                let c = g.index(i, j);
                let o = &self.off[c];
                let mut acc = self.diag[c] * x[c];
                if i > 0 {
                    acc += o[0] * x[c - 1];
                }
                if i + 1 < nx {
                    acc += o[1] * x[c + 1];
                }
                if j > 0 {
                    acc += o[2] * x[c - nx];
                }
                if j + 1 < g.ny() {
                    acc += o[3] * x[c + nx];
                }
                y[c] = acc;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diag.clone()
    }
}

impl TransportMatrix {
    fn row_sum(&self, c: usize) -> f64 {
        self.diag[c] + self.off[c].iter().sum::<f64>()
    }

    fn norm_inf(&self) -> f64 {
        (0..self.diag.len())
            .map(|c| self.diag[c].abs() + self.off[c].iter().map(|o| o.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn to_banded(&self) -> BandedMatrix {
        let g = &self.grid;
        let nx = g.nx();
        let mut band = BandedMatrix::zeros(g.cell_count(), nx);
        for j in 0..g.ny() {
            for i in 0..nx {
                let c = g.index(i, j);
                let o = &self.off[c];
                band.add(c, c, self.diag[c]);
                if i > 0 {
                    band.add(c, c - 1, o[0]);
                }
                if i + 1 < nx {
                    band.add(c, c + 1, o[1]);
                }
                if j > 0 {
                    band.add(c, c - nx, o[2]);
                }
                if j + 1 < g.ny() {
                    band.add(c, c + nx, o[3]);
                }
            }
        }
        band
    }
}

#[inline]
fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Cell tensors `Phi D_k(v_cell)`.
pub fn cell_dispersion(problem: &TransportProblem<'_>) -> Vec<SymTensor2> {
    let g = *problem.velocity.grid();
    let phi = problem.medium.porosity.values();
    let mut out = Vec::with_capacity(g.cell_count());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let vc = problem.velocity.cell_velocity(i, j);
            let d = match problem.k_trunc {
                Some(k) => truncated_dispersion(vc, k, problem.fluid),
                None => dispersion_tensor(vc, problem.fluid),
            };
            out.push(d.scale(phi[g.index(i, j)]));
        }
    }
    out
}

fn assemble(problem: &TransportProblem<'_>, tensors: &[SymTensor2]) -> TransportMatrix {
    let g = *problem.velocity.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let inv_h = 1.0 / h;
    let inv_h2 = inv_h * inv_h;
    let phi = problem.medium.porosity.values();
    let qp = problem.sources.q_produce.values();
    let (xf, yf) = (problem.velocity.x_faces(), problem.velocity.y_faces());
    let mut diag: Vec<f64> = (0..g.cell_count()).map(|c| phi[c] / problem.dt + qp[c]).collect();
    let mut off = vec![[0.0; 4]; g.cell_count()];

    for j in 0..ny {
        for i in 1..nx {
            let (l, r) = (g.index(i - 1, j), g.index(i, j));
            let kappa = harmonic(tensors[l].xx, tensors[r].xx) * inv_h2;
            let vel = xf[g.x_face(i, j)] * inv_h;
            diag[l] += kappa + vel.max(0.0);
            diag[r] += kappa + (-vel).max(0.0);
            off[l][1] -= kappa + (-vel).max(0.0);
            off[r][0] -= kappa + vel.max(0.0);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (s, n) = (g.index(i, j - 1), g.index(i, j));
            let kappa = harmonic(tensors[s].yy, tensors[n].yy) * inv_h2;
            let vel = yf[g.y_face(i, j)] * inv_h;
            diag[s] += kappa + vel.max(0.0);
            diag[n] += kappa + (-vel).max(0.0);
            off[s][3] -= kappa + (-vel).max(0.0);
            off[n][2] -= kappa + vel.max(0.0);
        }
    }
    TransportMatrix { grid: g, diag, off }
}

/// Explicit off-diagonal dispersion fluxes `-(Phi D)_xy * transverse derivative`
/// on interior faces, from concentration `u_ref`.
fn cross_fluxes(grid: &Grid2D, tensors: &[SymTensor2], u_ref: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let g = grid;
    let grad = gradient(u_ref);
    let mut xf = vec![0.0; g.x_face_count()];
    let mut yf = vec![0.0; g.y_face_count()];
    for j in 0..g.ny() {
        for i in 1..g.nx() {
            let (l, r) = (g.index(i - 1, j), g.index(i, j));
            let dxy = 0.5 * (tensors[l].xy + tensors[r].xy);
            let dudy = 0.5 * (grad.values()[l][1] + grad.values()[r][1]);
            xf[g.x_face(i, j)] = -dxy * dudy;
        }
    }
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            let (s, n) = (g.index(i, j - 1), g.index(i, j));
            let dxy = 0.5 * (tensors[s].xy + tensors[n].xy);
            let dudx = 0.5 * (grad.values()[s][0] + grad.values()[n][0]);
            yf[g.y_face(i, j)] = -dxy * dudx;
        }
    }
    (xf, yf)
}

/// Adds limited cross fluxes to `rhs` so that `0 <= rhs_c <= rowsum_c`
/// wherever the unlimited right-hand side already satisfied it.
fn add_limited_cross_fluxes(
    grid: &Grid2D,
    matrix: &TransportMatrix,
    rhs: &mut [f64],
    xf: &[f64],
    yf: &[f64],
) {
    let g = grid;
    let inv_h = 1.0 / g.h();
    let n = g.cell_count();
    let mut gain = vec![0.0; n];
    let mut loss = vec![0.0; n];
    // Face flux G > 0 moves mass from the low-index cell to the high-index one.
    let faces = || {
        let x = (0..g.ny()).flat_map(move |j| {
            (1..g.nx()).map(move |i| (xf[g.x_face(i, j)] * inv_h, g.index(i - 1, j), g.index(i, j)))
        });
        let y = (1..g.ny()).flat_map(move |j| {
            (0..g.nx()).map(move |i| (yf[g.y_face(i, j)] * inv_h, g.index(i, j - 1), g.index(i, j)))
        });
        x.chain(y)
    };
    for (flux, from, to) in faces() {
        if flux > 0.0 {
            gain[to] += flux;
            loss[from] += flux;
        } else if flux < 0.0 {
            gain[from] -= flux;
            loss[to] -= flux;
        }
    }
    let room_up: Vec<f64> = (0..n)
        .map(|c| ratio((matrix.row_sum(c) - rhs[c]).max(0.0), gain[c]))
        .collect();
    let room_down: Vec<f64> = (0..n).map(|c| ratio(rhs[c].max(0.0), loss[c])).collect();
    let mut delta = vec![0.0; n];
    for (flux, from, to) in faces() {
        let alpha = if flux > 0.0 {
            room_up[to].min(room_down[from])
        } else if flux < 0.0 {
            room_up[from].min(room_down[to])
        } else {
            0.0
        };
        let limited = alpha * flux;
        delta[from] -= limited;
        delta[to] += limited;
    }
    for (r, d) in rhs.iter_mut().zip(&delta) {
        *r += d;
    }
}

#[inline]
fn ratio(room: f64, demand: f64) -> f64 {
    if demand <= 0.0 {
        1.0
    } else {
        (room / demand).min(1.0)
    }
}

/// One backward-Euler transport step.
pub fn advance_concentration(
    u_old: &ScalarField,
    problem: &TransportProblem<'_>,
    opts: &TransportOptions,
) -> Result<TransportStepReport> {
    advance_concentration_with(u_old, problem, opts, None, None)
}

/// Transport step with an optional extra source density `forcing` and an
/// explicit reference concentration for lagged cross-diffusion.
pub fn advance_concentration_with(
    u_old: &ScalarField,
    problem: &TransportProblem<'_>,
    opts: &TransportOptions,
    forcing: Option<&ScalarField>,
    cross_reference: Option<&ScalarField>,
) -> Result<TransportStepReport> {
    if !(problem.dt > 0.0 && problem.dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {}", problem.dt)));
    }
    if !problem.velocity.boundary_is_closed() {
        return Err(Error::Config("velocity must have zero boundary flux".into()));
    }
    let g = *u_old.grid();
    let area = g.cell_area();
    let phi = problem.medium.porosity.values();
    let (qi, qp, uh) = (
        problem.sources.q_inject.values(),
        problem.sources.q_produce.values(),
        problem.sources.u_hat.values(),
    );
    let tensors = cell_dispersion(problem);
    let matrix = assemble(problem, &tensors);

    let mut rhs: Vec<f64> = (0..g.cell_count())
        .map(|c| phi[c] / problem.dt * u_old.values()[c] + qi[c] * uh[c])
        .collect();
    if let Some(f) = forcing {
        rhs.iter_mut().zip(f.values()).for_each(|(r, f)| *r += f);
    }
    let cross_source = match opts.cross_diffusion {
        CrossDiffusion::Off => None,
        CrossDiffusion::Deferred => Some(u_old),
        CrossDiffusion::Lagged => Some(cross_reference.unwrap_or(u_old)),
    };
    if let Some(u_ref) = cross_source {
        if tensors.iter().any(|t| t.xy != 0.0) {
            let (xf, yf) = cross_fluxes(&g, &tensors, u_ref);
            add_limited_cross_fluxes(&g, &matrix, &mut rhs, &xf, &yf);
        }
    }

    let mut x = u_old.values().to_vec();
    // Normwise backward-error target: |r|_inf <= tol (|A|_inf max(|u|_inf, 1) + |b|_inf).
    let scale = matrix.norm_inf() * norm_inf(u_old.values()).max(1.0) + norm_inf(&rhs);
    let solver = SolverOptions::new(f64::INFINITY, opts.tol * scale, opts.max_iter);
    let stats = match opts.solver {
        LinearSolver::Direct => {
            let lu = matrix.to_banded().factor()?;
            banded_direct(&matrix, &lu, &rhs, &mut x, &solver)?
        }
        LinearSolver::Bicgstab => bicgstab(&matrix, &rhs, &mut x, &solver)?,
    };
    let u_new = ScalarField::new(g, x)?;

    let mass_before: f64 = phi.iter().zip(u_old.values()).map(|(p, u)| p * u).sum::<f64>() * area;
    let mass_after: f64 = phi.iter().zip(u_new.values()).map(|(p, u)| p * u).sum::<f64>() * area;
    let mut source_rate: f64 = (0..g.cell_count())
        .map(|c| qi[c] * uh[c] - qp[c] * u_new.values()[c])
        .sum();
    if let Some(f) = forcing {
        source_rate += f.values().iter().sum::<f64>();
    }
    Ok(TransportStepReport {
        min_u: u_new.min(),
        max_u: u_new.max(),
        mass_before,
        mass_after,
        source_mass: problem.dt * source_rate * area,
        dt: problem.dt,
        linear_iterations: stats.iterations,
        u_new,
    })
}

/// Advective CFL step `h / max |v|`; `None` for a still fluid.
pub fn suggest_dt(velocity: &FluxField) -> Option<f64> {
    let vmax = velocity.max_abs();
    (vmax > 0.0).then(|| velocity.grid().h() / vmax)
}

/// One entry of a transport history.
#[derive(Debug, Clone, Copy)]
pub struct EnergySample<'a> {
    pub time: f64,
    pub u: &'a ScalarField,
    pub v: &'a FluxField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `sup_t sum Phi u^2 h^2`.
    pub sup_mass: f64,
    /// `sum_t dt sum (1 + |v|) |grad u|^2 h^2`.
    pub dissipation: f64,
}

impl EnergyReport {
    pub fn total(&self) -> f64 {
        self.sup_mass + self.dissipation
    }
}

/// Discrete energy functional of a transport history. The dissipation sum
/// starts at the second sample, weighting each sample by the preceding time
/// increment.
pub fn energy_monitor(history: &[EnergySample<'_>], medium: &MediumSpec) -> Result<EnergyReport> {
    if history.is_empty() {
        return Err(Error::Degenerate("energy monitor needs at least one snapshot".into()));
    }
    let phi = medium.porosity.values();
    let mut sup_mass: f64 = 0.0;
    let mut dissipation = 0.0;
    for (n, s) in history.iter().enumerate() {
        let g = s.u.grid();
        let area = g.cell_area();
        let mass: f64 = phi.iter().zip(s.u.values()).map(|(p, u)| p * u * u).sum::<f64>() * area;
        sup_mass = sup_mass.max(mass);
        if n > 0 {
            let dt = s.time - history[n - 1].time;
            let speeds = s.v.cell_velocities().magnitude();
            let grad = gradient(s.u).magnitude_squared();
            let local: f64 = speeds
                .values()
                .iter()
                .zip(grad.values())
                .map(|(v, g2)| (1.0 + v) * g2)
                .sum();
            dissipation += dt * local * area;
        }
    }
    Ok(EnergyReport { sup_mass, dissipation })
}
