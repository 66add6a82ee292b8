//! Discrete balls, parabolic cylinders and time-indexed field histories.
//!
//! A cell belongs to `B_r(x0)` when its centre lies within Euclidean distance
//! `r` of the centre of `x0`. Balls are clipped to the domain. A cylinder
//! `Q_r(x0, t0)` pairs the ball with the half-open time window
//! `(t0 - r^2/2, t0 + r^2/2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;

/// Relative slack on membership tests so that radii on the dyadic ladder
/// (exact multiples of `h`) include cells at exactly that distance.
const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: (usize, usize),
    pub radius: f64,
}

impl Ball {
    pub fn new(center: (usize, usize), radius: f64) -> Self {
        Self { center, radius }
    }

    /// Whether a cell offset `(di, dj)` (in cells) lies inside the ball.
    #[inline]
    pub fn contains_offset(&self, di: i64, dj: i64, h: f64) -> bool {
        let r_cells = self.radius / h;
        ((di * di + dj * dj) as f64) <= r_cells * r_cells * (1.0 + MEMBERSHIP_SLACK)
    }

    pub fn contains(&self, grid: &Grid2D, i: usize, j: usize) -> bool {
        let di = i as i64 - self.center.0 as i64;
        let dj = j as i64 - self.center.1 as i64;
        self.contains_offset(di, dj, grid.h())
    }

    fn check(&self, grid: &Grid2D) -> Result<()> {
        if self.center.0 >= grid.nx() || self.center.1 >= grid.ny() {
            return Err(Error::Domain(format!(
                "ball centre {:?} outside {}x{} grid",
                self.center,
                grid.nx(),
                grid.ny()
            )));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::Resolution {
                radius: self.radius,
                reason: "radius must be finite and nonnegative".into(),
            });
        }
        Ok(())
    }

    /// Member cell indices in row-major order, clipped to the grid.
    pub fn members(&self, grid: &Grid2D) -> Result<Vec<usize>> {
        self.check(grid)?;
        let reach = (self.radius / grid.h() * (1.0 + MEMBERSHIP_SLACK)).floor() as i64;
        let (ci, cj) = (self.center.0 as i64, self.center.1 as i64);
        let i_lo = (ci - reach).max(0);
        let i_hi = (ci + reach).min(grid.nx() as i64 - 1);
        let j_lo = (cj - reach).max(0);
        let j_hi = (cj + reach).min(grid.ny() as i64 - 1);
        let mut out = Vec::new();
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                if self.contains_offset(i - ci, j - cj, grid.h()) {
                    out.push(grid.index(i as usize, j as usize));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Resolution {
                radius: self.radius,
                reason: "ball contains no cell centres".into(),
            });
        }
        Ok(out)
    }

    /// Whether the continuum disc of radius `scale * r` lies inside the domain.
    pub fn scaled_fits(&self, grid: &Grid2D, scale: f64) -> bool {
        let [x, y] = grid.cell_center(self.center.0, self.center.1);
        let [x0, y0] = grid.origin();
        let [lx, ly] = grid.extent();
        let r = scale * self.radius;
        x - r >= x0 - 1e-12 && x + r <= x0 + lx + 1e-12 && y - r >= y0 - 1e-12 && y + r <= y0 + ly + 1e-12
    }
}

/// Snapshot sequence with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldHistory {
    times: Vec<f64>,
    fields: Vec<ScalarField>,
}

impl FieldHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(time: f64, field: ScalarField) -> Self {
        Self {
            times: vec![time],
            fields: vec![field],
        }
    }

    pub fn push(&mut self, time: f64, field: ScalarField) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(time > last) {
                return Err(Error::Field(format!(
                    "snapshot time {time} does not follow {last}"
                )));
            }
            if !field.grid().same_shape(self.fields[0].grid()) {
                return Err(Error::Field("snapshot grid differs from history grid".into()));
            }
        }
        self.times.push(time);
        self.fields.push(field);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> Option<&Grid2D> {
        self.fields.first().map(|f| f.grid())
    }

    pub fn last(&self) -> Option<(f64, &ScalarField)> {
        self.times.last().map(|&t| (t, self.fields.last().unwrap()))
    }

    /// Indices of snapshots with time in `(lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Vec<usize> {
        let slack = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
        self.times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > lo + slack && t <= hi + slack)
            .map(|(k, _)| k)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub ball: Ball,
    pub t0: f64,
}

impl Cylinder {
    pub fn new(center: (usize, usize), t0: f64, radius: f64) -> Self {
        Self {
            ball: Ball::new(center, radius),
            t0,
        }
    }

    pub fn radius(&self) -> f64 {
        self.ball.radius
    }

    /// `(t0 - r^2/2, t0 + r^2/2]`.
    pub fn time_window(&self) -> (f64, f64) {
        let half = 0.5 * self.ball.radius * self.ball.radius;
        (self.t0 - half, self.t0 + half)
    }

    /// Snapshot indices of `history` falling in the time window.
    pub fn snapshot_indices(&self, history: &FieldHistory) -> Result<Vec<usize>> {
        let (lo, hi) = self.time_window();
        let idx = history.window(lo, hi);
        if idx.is_empty() {
            return Err(Error::Degenerate(format!(
                "time window ({lo}, {hi}] contains no stored snapshot"
            )));
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderSample {
    pub cell: usize,
    pub time_index: usize,
    pub value: f64,
}

/// All `(cell, time)` samples of `history` inside `cylinder`, ordered by time
/// then row-major cell.
pub fn cylinder_restrict(history: &FieldHistory, cylinder: &Cylinder) -> Result<Vec<CylinderSample>> {
    let grid = *history
        .grid()
        .ok_or_else(|| Error::Degenerate("empty history".into()))?;
    let members = cylinder.ball.members(&grid)?;
    let snaps = cylinder.snapshot_indices(history)?;
    let mut out = Vec::with_capacity(members.len() * snaps.len());
    for &t in &snaps {
        let values = history.fields()[t].values();
        out.extend(members.iter().map(|&c| CylinderSample {
            cell: c,
            time_index: t,
            value: values[c],
        }));
    }
    Ok(out)
}
