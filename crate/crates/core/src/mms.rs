//! Manufactured-solution convergence studies for the pressure and transport
//! discretisations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coefficients::{dispersion_tensor, viscosity, FluidSpec, MediumSpec, SourceSpec, ViscosityLaw};
use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField};
use crate::grid::Grid2D;
use crate::linalg::remove_mean;
use crate::pressure::{solve_pressure_rhs, PressureOptions};
use crate::transport::{advance_concentration_with, TransportOptions, TransportProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Pressure,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub n: usize,
    pub h: f64,
    pub l2_error: f64,
    pub max_error: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsTable {
    pub study: Study,
    pub rows: Vec<MmsRow>,
}

impl MmsTable {
    /// Order between the last two grids.
    pub fn final_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:?} study\n{:>6} {:>12} {:>14} {:>14} {:>8}\n",
            self.study, "n", "h", "L2 error", "max error", "order"
        );
        for r in &self.rows {
            let order = r.order.map_or_else(|| "-".to_string(), |o| format!("{o:.3}"));
            out.push_str(&format!(
                "{:>6} {:>12.6e} {:>14.6e} {:>14.6e} {:>8}\n",
                r.n, r.h, r.l2_error, r.max_error, order
            ));
        }
        out
    }
}

/// Divergence of an analytic vector field by fourth-order central differences.
fn divergence_of(flux: impl Fn(f64, f64) -> [f64; 2], x: f64, y: f64) -> f64 {
    const D: f64 = 1e-3;
    let d = |f: &dyn Fn(f64) -> f64| (8.0 * (f(D) - f(-D)) - (f(2.0 * D) - f(-2.0 * D))) / (12.0 * D);
    d(&|s| flux(x + s, y)[0]) + d(&|s| flux(x, y + s)[1])
}

fn errors(numeric: &ScalarField, exact: &ScalarField) -> (f64, f64) {
    (numeric.l2_distance(exact), numeric.sup_distance(exact))
}

/// Concentration used to vary the pressure coefficient.
fn pressure_concentration(x: f64, y: f64) -> f64 {
    0.5 + 0.4 * (PI * x).sin() * (PI * y).sin()
}

fn pressure_fluid() -> FluidSpec {
    FluidSpec::new(
        0.01,
        0.05,
        0.5,
        ViscosityLaw::QuarterPower {
            mu0: 1.0,
            mobility_ratio: 4.0,
        },
    )
    .expect("valid manufactured fluid")
}

/// `p = cos(pi x) cos(pi y)` with coefficient `K / mu(u(x, y))`, `K = 1 + x y / 2`.
fn pressure_error(n: usize, opts: &PressureOptions) -> Result<(f64, f64)> {
    let g = Grid2D::unit_square(n)?;
    let fluid = pressure_fluid();
    let perm = |x: f64, y: f64| 1.0 + 0.5 * x * y;
    let medium = MediumSpec::new(
        ScalarField::constant(g, 0.2),
        crate::field::SymTensor2Field::new(
            g,
            (0..g.cell_count())
                .map(|c| {
                    let (i, j) = g.coords(c);
                    let [x, y] = g.cell_center(i, j);
                    crate::field::SymTensor2::isotropic(perm(x, y))
                })
                .collect(),
        )?,
    )?;
    let u = ScalarField::from_fn(g, pressure_concentration);
    let exact = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
    let flux = |x: f64, y: f64| {
        let k = perm(x, y) / viscosity(pressure_concentration(x, y), &fluid);
        [
            -k * -PI * (PI * x).sin() * (PI * y).cos(),
            -k * -PI * (PI * x).cos() * (PI * y).sin(),
        ]
    };
    let mut rhs: Vec<f64> = (0..g.cell_count())
        .map(|c| {
            let (i, j) = g.coords(c);
            let [x, y] = g.cell_center(i, j);
            divergence_of(flux, x, y)
        })
        .collect();
    remove_mean(&mut rhs);
    let sol = solve_pressure_rhs(&u, &medium, &fluid, &ScalarField::new(g, rhs)?, opts)?;
    let mut p_exact = ScalarField::from_fn(g, exact);
    let mean = p_exact.mean();
    p_exact.values_mut().iter_mut().for_each(|v| *v -= mean);
    Ok(errors(&sol.p, &p_exact))
}

/// Steady `u = 1/2 + cos(pi x) cos(pi y) / 4` in the divergence-free flow of
/// `psi = sin(pi x) sin(pi y) / 2`, with uniform injection and production of
/// strength 5, `u_hat = u` and a compatible forcing.
fn transport_error(n: usize, opts: &TransportOptions) -> Result<(f64, f64)> {
    const PHI: f64 = 0.2;
    const SIGMA: f64 = 5.0;
    let g = Grid2D::unit_square(n)?;
    let fluid = FluidSpec::new(0.01, 0.01, 0.1, ViscosityLaw::Constant { mu0: 1.0 })?;
    let medium = MediumSpec::uniform(g, PHI, 1.0)?;
    let psi = |x: f64, y: f64| 0.5 * (PI * x).sin() * (PI * y).sin();
    let velocity = |x: f64, y: f64| {
        [
            0.5 * PI * (PI * x).sin() * (PI * y).cos(),
            -0.5 * PI * (PI * x).cos() * (PI * y).sin(),
        ]
    };
    let exact = |x: f64, y: f64| 0.5 + 0.25 * (PI * x).cos() * (PI * y).cos();
    let grad = |x: f64, y: f64| {
        [
            -0.25 * PI * (PI * x).sin() * (PI * y).cos(),
            -0.25 * PI * (PI * x).cos() * (PI * y).sin(),
        ]
    };
    // total flux u v - Phi D(v) grad u
    let flux = |x: f64, y: f64| {
        let v = velocity(x, y);
        let d = dispersion_tensor(v, &fluid).scale(PHI).apply(grad(x, y));
        let u = exact(x, y);
        [u * v[0] - d[0], u * v[1] - d[1]]
    };
    let forcing = ScalarField::from_fn(g, |x, y| divergence_of(flux, x, y));
    let u_exact = ScalarField::from_fn(g, exact);
    let v = FluxField::from_stream_function(g, psi);
    let sources = SourceSpec::new(
        ScalarField::constant(g, SIGMA),
        ScalarField::constant(g, SIGMA),
        u_exact.clone(),
    )?;
    let problem = TransportProblem {
        medium: &medium,
        fluid: &fluid,
        sources: &sources,
        velocity: &v,
        dt: 1.0,
        k_trunc: None,
    };
    let step = advance_concentration_with(&u_exact, &problem, opts, Some(&forcing), None)?;
    Ok(errors(&step.u_new, &u_exact))
}

/// Errors on each grid and observed orders between consecutive grids.
pub fn mms_convergence_study(study: Study, grids: &[usize]) -> Result<MmsTable> {
    if grids.is_empty() {
        return Err(Error::Config("convergence study needs at least one grid".into()));
    }
    let mut rows: Vec<MmsRow> = Vec::with_capacity(grids.len());
    for &n in grids {
        let (l2_error, max_error) = match study {
            Study::Pressure => pressure_error(n, &PressureOptions::default())?,
            Study::Transport => transport_error(n, &TransportOptions::default())?,
        };
        let h = 1.0 / n as f64;
        let order = rows
            .last()
            .map(|prev| (prev.l2_error / l2_error).ln() / (prev.h / h).ln());
        rows.push(MmsRow {
            n,
            h,
            l2_error,
            max_error,
            order,
        });
    }
    Ok(MmsTable { study, rows })
}
