//! Frozen-coefficient comparison: replace `w = p zeta` inside a ball by the
//! solution of the constant-coefficient problem with the same boundary values
//! and measure the energy of the difference.

use serde::{Deserialize, Serialize};

use crate::coefficients::{viscosity, FluidSpec, MediumSpec};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SymTensor2};
use crate::grid::Grid2D;
use crate::linalg::{conjugate_gradient, LinearOperator, SolverOptions};
use crate::region::Ball;

use super::local::eta_snapshot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    /// `sum over interior faces of the ball of (Delta (phi - w))^2`.
    pub gap: f64,
    /// Discrete Dirichlet energy of `w` on the same faces.
    pub w_energy: f64,
    /// Coefficient oscillation on the ball for this snapshot.
    pub eta: f64,
    /// The frozen tensor `(1/mu(u(x0))) avg_B K`.
    pub frozen: SymTensor2,
    pub interior_cells: usize,
    pub boundary_cells: usize,
    pub iterations: usize,
    /// `phi` and `w` on the ball's cells, in member order.
    pub phi: Vec<f64>,
    pub w: Vec<f64>,
    pub cells: Vec<usize>,
}

/// Cutoff equal to 1 on `B_rho`, decreasing linearly in the distance to 0 at
/// `radius`.
pub fn cutoff(distance: f64, rho: f64, radius: f64) -> f64 {
    if distance <= rho {
        1.0
    } else if distance >= radius {
        0.0
    } else {
        (radius - distance) / (radius - rho)
    }
}

const FIVE: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const NINE: [(i64, i64); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)];

/// Constant-coefficient operator on the interior cells of the ball.
struct FrozenOperator {
    a: SymTensor2,
    /// For each unknown, its neighbours' unknown indices (`None` when the
    /// neighbour is a boundary cell), in [`NINE`] order.
    neighbours: Vec<[Option<usize>; 8]>,
}

impl FrozenOperator {
    /// Stencil weights (times `h^2`) for the centre and the [`NINE`] offsets.
    fn weights(a: SymTensor2) -> (f64, [f64; 8]) {
        let c = a.xy / 2.0;
        (
            2.0 * (a.xx + a.yy),
            [-a.xx, -a.xx, -a.yy, -a.yy, -c, c, c, -c],
        )
    }
}

impl LinearOperator for FrozenOperator {
    fn len(&self) -> usize {
        self.neighbours.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (centre, w) = Self::weights(self.a);
        for (k, nb) in self.neighbours.iter().enumerate() {
            let mut acc = centre * x[k];
            for (m, slot) in nb.iter().enumerate() {
                if let Some(n) = slot {
                    acc += w[m] * x[*n];
                }
            }
            y[k] = acc;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        vec![Self::weights(self.a).0; self.neighbours.len()]
    }
}

/// Solves `-div(A grad phi) = 0` in the ball with `phi = w = p zeta` on its
/// boundary cells and returns the energy of `phi - w`.
///
/// `A = (1/mu(u(x0))) avg_B K`. Cells are interior when every stencil
/// neighbour (five-point, or nine-point when `A` has a cross term) belongs to
/// the ball; all other members carry Dirichlet data.
pub fn frozen_coefficient_comparison(
    p: &ScalarField,
    u: &ScalarField,
    medium: &MediumSpec,
    fluid: &FluidSpec,
    ball: &Ball,
    rho: f64,
    opts: &ComparisonOptions,
) -> Result<ComparisonResult> {
    let grid: Grid2D = *p.grid();
    let h = grid.h();
    if ball.radius < h * (1.0 - 1e-9) {
        return Err(Error::Resolution {
            radius: ball.radius,
            reason: "comparison ball must span at least three cells".into(),
        });
    }
    if !ball.scaled_fits(&grid, 1.0) {
        return Err(Error::Domain(format!(
            "comparison ball of radius {} around {:?} leaves the domain",
            ball.radius, ball.center
        )));
    }
    if !(0.0..=ball.radius).contains(&rho) {
        return Err(Error::Config(format!(
            "cutoff radius {rho} must lie in [0, {}]",
            ball.radius
        )));
    }
    let cells = ball.members(&grid)?;
    let (ci, cj) = ball.center;
    let mu = viscosity(u.at(ci, cj), fluid);
    let k = medium.permeability.values();
    let n = cells.len() as f64;
    let (mut kxx, mut kxy, mut kyy) = (0.0, 0.0, 0.0);
    for &c in &cells {
        kxx += k[c].xx;
        kxy += k[c].xy;
        kyy += k[c].yy;
    }
    let a = SymTensor2 {
        xx: kxx / n / mu,
        xy: kxy / n / mu,
        yy: kyy / n / mu,
    };
    let stencil: &[(i64, i64)] = if a.xy != 0.0 { &NINE } else { &FIVE };

    let mut slot = vec![usize::MAX; grid.cell_count()];
    for (m, &c) in cells.iter().enumerate() {
        slot[c] = m;
    }
    let neighbour = |c: usize, (di, dj): (i64, i64)| -> Option<usize> {
        let (i, j) = grid.coords(c);
        let (a, b) = (i as i64 + di, j as i64 + dj);
        if a < 0 || b < 0 || a >= grid.nx() as i64 || b >= grid.ny() as i64 {
            return None;
        }
        let nb = grid.index(a as usize, b as usize);
        (slot[nb] != usize::MAX).then_some(nb)
    };
    let interior: Vec<bool> = cells
        .iter()
        .map(|&c| stencil.iter().all(|&o| neighbour(c, o).is_some()))
        .collect();

    let w: Vec<f64> = cells
        .iter()
        .map(|&c| {
            let (i, j) = grid.coords(c);
            let d = h * (((i as f64 - ci as f64).powi(2) + (j as f64 - cj as f64).powi(2)).sqrt());
            p.values()[c] * cutoff(d, rho, ball.radius)
        })
        .collect();

    let mut unknown = vec![usize::MAX; cells.len()];
    let mut members_of_unknown = Vec::new();
    for (m, &is_in) in interior.iter().enumerate() {
        if is_in {
            unknown[m] = members_of_unknown.len();
            members_of_unknown.push(m);
        }
    }
    let (_, weights) = FrozenOperator::weights(a);
    let mut neighbours = Vec::with_capacity(members_of_unknown.len());
    let mut rhs = Vec::with_capacity(members_of_unknown.len());
    for &m in &members_of_unknown {
        let c = cells[m];
        let mut nb = [None; 8];
        let mut b = 0.0;
        for (s, &o) in NINE.iter().enumerate() {
            if weights[s] == 0.0 {
                continue;
            }
            let Some(cell) = neighbour(c, o) else { continue };
            let member = slot[cell];
            if interior[member] {
                nb[s] = Some(unknown[member]);
            } else {
                b -= weights[s] * w[member];
            }
        }
        neighbours.push(nb);
        rhs.push(b);
    }
    let op = FrozenOperator { a, neighbours };
    let mut x: Vec<f64> = members_of_unknown.iter().map(|&m| w[m]).collect();
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let stats = if x.is_empty() {
        Default::default()
    } else {
        conjugate_gradient(
            &op,
            &rhs,
            &mut x,
            &SolverOptions::new(opts.tol, opts.tol * scale, opts.max_iter),
            false,
        )?
    };
    let mut phi = w.clone();
    for (k, &m) in members_of_unknown.iter().enumerate() {
        phi[m] = x[k];
    }

    let mut gap = 0.0;
    let mut w_energy = 0.0;
    for (m, &c) in cells.iter().enumerate() {
        for o in [(1, 0), (0, 1)] {
            if let Some(nb) = neighbour(c, o) {
                let q = slot[nb];
                let e = (phi[q] - w[q]) - (phi[m] - w[m]);
                gap += e * e;
                let dw = w[q] - w[m];
                w_energy += dw * dw;
            }
        }
    }
    Ok(ComparisonResult {
        gap,
        w_energy,
        eta: eta_snapshot(u, ball, medium, fluid)?,
        frozen: a,
        interior_cells: members_of_unknown.len(),
        boundary_cells: cells.len() - members_of_unknown.len(),
        iterations: stats.iterations,
        phi,
        w,
        cells,
    })
}
