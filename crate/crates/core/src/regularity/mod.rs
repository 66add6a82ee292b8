//! Regularity diagnostics for computed pressure and concentration fields and
//! the regular/singular point classifier.

mod comparison;
mod harmonic;
mod local;

pub use comparison::{cutoff, frozen_coefficient_comparison, ComparisonOptions, ComparisonResult};
pub use harmonic::{
    default_ladder, fefferman_stein_ratio, fefferman_stein_ratio_with, maximal_function, maximal_function_with,
    sharp_function, sharp_function_with,
};
pub use local::{
    barrier_level, barrier_value, cylinder_oscillation, cylinder_stats, decay_exponent_fit, eta, eta_snapshot,
    level_set_fraction, local_gradient_energy, log_barrier_field, permeability_oscillation, BallField, DecayFit,
    OscillationStats,
};

use serde::{Deserialize, Serialize};

use crate::coefficients::{FluidSpec, MediumSpec, SourceSpec};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::region::{Ball, Cylinder, FieldHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Regular,
    Singular,
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Regular => "regular",
            Classification::Singular => "singular",
            Classification::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Bounded energy: smallest-radius value at most `theta1` times the median.
    pub theta1: f64,
    /// Coefficient oscillation at the smallest radius must not exceed this;
    /// `None` means `0.1 * eta(largest radius)`.
    pub theta2: Option<f64>,
    /// Minimum energy growth per halving of the radius for a singular verdict.
    pub theta3: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta1: 2.0,
            theta2: None,
            theta3: 1.5,
        }
    }
}

/// Verdict together with the thresholds actually applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub classification: Classification,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Classifies a point from its gradient-energy and `eta` series (pairs of
/// radius and value, any order).
///
/// Singular when the energy grows by at least `theta3` at every step towards
/// smaller radii; regular when the smallest-radius energy is at most
/// `theta1` times the median and `eta` at the smallest radius is at most
/// `theta2`; inconclusive otherwise, or with fewer than three radii.
pub fn classify_point(energy: &[(f64, f64)], eta: &[(f64, f64)], thresholds: &Thresholds) -> Verdict {
    let mut e = energy.to_vec();
    e.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut et = eta.to_vec();
    et.sort_by(|a, b| b.0.total_cmp(&a.0));
    let theta2 = thresholds
        .theta2
        .unwrap_or_else(|| 0.1 * et.first().map_or(0.0, |p| p.1));
    let verdict = |classification| Verdict {
        classification,
        theta1: thresholds.theta1,
        theta2,
        theta3: thresholds.theta3,
    };
    if e.len() < 3 || et.len() < 3 {
        return verdict(Classification::Inconclusive);
    }
    let growing = e
        .windows(2)
        .all(|w| w[0].1 > 0.0 && w[1].1 >= thresholds.theta3 * w[0].1);
    if growing {
        return verdict(Classification::Singular);
    }
    let last = e.last().unwrap().1;
    let mut values: Vec<f64> = e.iter().map(|p| p.1).collect();
    let bounded = last <= thresholds.theta1 * median(&mut values);
    let small_eta = et.last().unwrap().1 <= theta2;
    if bounded && small_eta {
        verdict(Classification::Regular)
    } else {
        verdict(Classification::Inconclusive)
    }
}

/// Space-time point: a cell and a snapshot index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub cell: (usize, usize),
    pub time_index: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSettings {
    /// Radii for the local series; empty selects the dyadic radii
    /// `h, 2h, 4h, ...` whose balls fit in the domain.
    pub ladder: Vec<f64>,
    /// Integrability exponent for `k(r)`.
    pub s: f64,
    /// Level-set exponent.
    pub s1: f64,
    /// Norm exponents for the Fefferman-Stein ratio of `|grad p|`.
    pub ell: Vec<f64>,
    pub thresholds: Thresholds,
    /// Cutoff radius as a fraction of the comparison radius.
    pub cutoff_fraction: f64,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        Self {
            ladder: Vec::new(),
            s: 3.0,
            s1: 1.0,
            ell: vec![2.0, 4.0],
            thresholds: Thresholds::default(),
            cutoff_fraction: 0.5,
        }
    }
}

/// Dyadic radii `h, 2h, 4h, ...` whose balls around `cell` fit in the domain.
pub fn fitting_ladder(grid: &Grid2D, cell: (usize, usize)) -> Vec<f64> {
    grid.covering_ladder()
        .into_iter()
        .filter(|&r| Ball::new(cell, r).scaled_fits(grid, 1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub point: PointSpec,
    pub gradient_energy_series: Vec<(f64, f64)>,
    pub osc_series: Vec<(f64, f64)>,
    pub alpha_fit: DecayFit,
    pub eta_series: Vec<(f64, f64)>,
    /// Radii with zero oscillation are omitted.
    pub level_set_fractions: Vec<(f64, f64)>,
    pub comparison_gaps: Vec<(f64, f64)>,
    /// `(r, k(r))`.
    pub barrier_levels: Vec<(f64, f64)>,
    /// `(ell, |g - mean g|_ell / |g#|_ell)` for `g = |grad p|` at the point's time.
    pub fefferman_stein: Vec<(f64, f64)>,
    pub verdict: Verdict,
}

/// Inputs for [`diagnose_point`].
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticInputs<'a> {
    pub u: &'a FieldHistory,
    pub p: &'a FieldHistory,
    pub medium: &'a MediumSpec,
    pub fluid: &'a FluidSpec,
    pub sources: &'a SourceSpec,
}

/// Every local indicator at `(cell, time_index)` and the resulting verdict.
pub fn diagnose_point(
    inputs: &DiagnosticInputs<'_>,
    cell: (usize, usize),
    time_index: usize,
    settings: &DiagnosticSettings,
) -> Result<RegularityReport> {
    let grid = *inputs
        .u
        .grid()
        .ok_or_else(|| Error::Degenerate("empty concentration history".into()))?;
    if inputs.p.times() != inputs.u.times() {
        return Err(Error::Config("pressure and concentration histories have different times".into()));
    }
    if cell.0 >= grid.nx() || cell.1 >= grid.ny() {
        return Err(Error::Domain(format!("point {cell:?} outside {}x{} grid", grid.nx(), grid.ny())));
    }
    let t0 = *inputs
        .u
        .times()
        .get(time_index)
        .ok_or_else(|| Error::Domain(format!("snapshot index {time_index} out of range")))?;
    let ladder = if settings.ladder.is_empty() {
        fitting_ladder(&grid, cell)
    } else {
        settings.ladder.clone()
    };
    if ladder.is_empty() {
        return Err(Error::Resolution {
            radius: grid.h(),
            reason: format!("no ladder radius fits around {cell:?}"),
        });
    }

    let mut gradient_energy_series = Vec::with_capacity(ladder.len());
    let mut eta_series = Vec::with_capacity(ladder.len());
    let mut level_set_fractions = Vec::new();
    let mut comparison_gaps = Vec::new();
    let mut barrier_levels = Vec::new();
    let u_now = &inputs.u.fields()[time_index];
    let p_now = &inputs.p.fields()[time_index];
    for &r in &ladder {
        let cyl = Cylinder::new(cell, t0, r);
        let window = cyl.snapshot_indices(inputs.p)?;
        let mut sub = FieldHistory::new();
        for k in window {
            sub.push(inputs.p.times()[k], inputs.p.fields()[k].clone())?;
        }
        gradient_energy_series.extend(local_gradient_energy(&sub, cell, &[r])?);
        eta_series.push((r, eta(inputs.u, &cyl, time_index, inputs.medium, inputs.fluid)?));
        let ball = Ball::new(cell, r);
        match level_set_fraction(u_now, &ball, settings.s1) {
            Ok(f) => level_set_fractions.push((r, f)),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
        barrier_levels.push((r, barrier_level(&inputs.sources.q_inject, &ball, settings.s)?));
        if r >= grid.h() {
            let cmp = frozen_coefficient_comparison(
                p_now,
                u_now,
                inputs.medium,
                inputs.fluid,
                &ball,
                settings.cutoff_fraction * r,
                &ComparisonOptions::default(),
            )?;
            comparison_gaps.push((r, cmp.gap));
        }
    }
    let osc_series = cylinder_oscillation(inputs.u, cell, t0, &ladder)?;
    let alpha_fit = decay_exponent_fit(&osc_series);

    let grad = crate::ops::gradient(p_now).magnitude();
    let sharp = sharp_function(&grad);
    let mut fefferman_stein = Vec::new();
    for &ell in &settings.ell {
        match fefferman_stein_ratio_with(&grad, ell, &sharp) {
            Ok(v) => fefferman_stein.push((ell, v)),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let verdict = classify_point(&gradient_energy_series, &eta_series, &settings.thresholds);
    Ok(RegularityReport {
        point: PointSpec {
            cell,
            time_index,
            time: t0,
        },
        gradient_energy_series,
        osc_series,
        alpha_fit,
        eta_series,
        level_set_fractions,
        comparison_gaps,
        barrier_levels,
        fefferman_stein,
        verdict,
    })
}
