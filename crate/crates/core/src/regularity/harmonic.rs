//! Discrete maximal and sharp functions over clipped balls.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::region::Ball;

/// Radius ladder used by the maximal and sharp functions: the single-cell
/// ball followed by the covering dyadic ladder.
pub fn default_ladder(grid: &Grid2D) -> Vec<f64> {
    let mut radii = vec![0.0];
    radii.extend(grid.covering_ladder());
    radii
}

/// Cell offsets of a ball of radius `r`, ordered so that clipping them to the
/// grid reproduces [`Ball::members`] order.
fn ball_offsets(grid: &Grid2D, r: f64) -> Vec<(i64, i64)> {
    let probe = Ball::new((0, 0), r);
    let reach = (r / grid.h() * (1.0 + 1e-9)).floor() as i64;
    let mut out = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            if probe.contains_offset(di, dj, grid.h()) {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Members of the clipped ball centred at `(i, j)`, written into `buf`.
fn clipped(grid: &Grid2D, offsets: &[(i64, i64)], i: usize, j: usize, buf: &mut Vec<usize>) {
    buf.clear();
    let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
    for &(di, dj) in offsets {
        let (a, b) = (i as i64 + di, j as i64 + dj);
        if a >= 0 && a < nx && b >= 0 && b < ny {
            buf.push(grid.index(a as usize, b as usize));
        }
    }
}

fn mean_abs(values: &[f64], members: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &c in members {
        sum += values[c].abs();
    }
    sum / members.len() as f64
}

/// `avg_B |f - avg_B f|`.
pub(crate) fn mean_oscillation(values: &[f64], members: &[usize]) -> f64 {
    let n = members.len() as f64;
    let mut sum = 0.0;
    for &c in members {
        sum += values[c];
    }
    let mean = sum / n;
    let mut dev = 0.0;
    for &c in members {
        dev += (values[c] - mean).abs();
    }
    dev / n
}

/// Maximal function over [`default_ladder`].
pub fn maximal_function(f: &ScalarField) -> ScalarField {
    maximal_function_with(f, &default_ladder(f.grid()))
}

/// `M f(x) = max_r avg_{B_r(x)} |f|` over the given radii.
pub fn maximal_function_with(f: &ScalarField, ladder: &[f64]) -> ScalarField {
    let g = *f.grid();
    let offsets: Vec<_> = ladder.iter().map(|&r| ball_offsets(&g, r)).collect();
    let values = f.values();
    let out: Vec<f64> = (0..g.cell_count())
        .into_par_iter()
        .map_init(Vec::new, |buf, c| {
            let (i, j) = g.coords(c);
            let mut best: f64 = values[c].abs();
            for off in &offsets {
                clipped(&g, off, i, j, buf);
                best = best.max(mean_abs(values, buf));
            }
            best
        })
        .collect();
    ScalarField::new(g, out).expect("averages of finite values are finite")
}

/// Sharp function over [`default_ladder`].
pub fn sharp_function(f: &ScalarField) -> ScalarField {
    sharp_function_with(f, &default_ladder(f.grid()))
}

/// `f#(x) = max { avg_B |f - f_B| : B = B_R(y), x in B }` over all centres
/// `y` and the given radii.
pub fn sharp_function_with(f: &ScalarField, ladder: &[f64]) -> ScalarField {
    let g = *f.grid();
    let values = f.values();
    let mut out = vec![0.0f64; g.cell_count()];
    for &r in ladder {
        let offsets = ball_offsets(&g, r);
        let osc: Vec<f64> = (0..g.cell_count())
            .into_par_iter()
            .map_init(Vec::new, |buf, c| {
                let (i, j) = g.coords(c);
                clipped(&g, &offsets, i, j, buf);
                mean_oscillation(values, buf)
            })
            .collect();
        let mut buf = Vec::new();
        for (c, &o) in osc.iter().enumerate() {
            if o == 0.0 {
                continue;
            }
            let (i, j) = g.coords(c);
            clipped(&g, &offsets, i, j, &mut buf);
            for &m in &buf {
                if o > out[m] {
                    out[m] = o;
                }
            }
        }
    }
    ScalarField::new(g, out).expect("oscillations of finite values are finite")
}

/// Empirical Fefferman-Stein constant `|f - mean f|_ell / |f#|_ell`.
pub fn fefferman_stein_ratio(f: &ScalarField, ell: f64) -> Result<f64> {
    fefferman_stein_ratio_with(f, ell, &sharp_function(f))
}

/// As [`fefferman_stein_ratio`] with a precomputed sharp function.
pub fn fefferman_stein_ratio_with(f: &ScalarField, ell: f64, sharp: &ScalarField) -> Result<f64> {
    if !(ell > 1.0 && ell.is_finite()) {
        return Err(Error::Config(format!("norm exponent must exceed 1, got {ell}")));
    }
    let denom = sharp.lp_norm(ell);
    if denom == 0.0 {
        return Err(Error::Degenerate(
            "sharp function vanishes identically (constant field)".into(),
        ));
    }
    let mean = f.mean();
    Ok(f.map(|x| x - mean).lp_norm(ell) / denom)
}
