//! Canonical source layouts.

use crate::coefficients::SourceSpec;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;

/// Quarter five-spot: an injector block in the lower-left corner and a
/// producer block in the upper-right corner.
///
/// Each block covers the cells whose centres lie within `well_size` of its
/// corner along both axes (at least one cell). Densities are `rate / block
/// area`, so the total injected volume rate is `rate` on every grid. The
/// injected concentration is `u_inject` inside the injector block.
pub fn five_spot(grid: Grid2D, rate: f64, well_size: f64, u_inject: f64) -> Result<SourceSpec> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("injection rate must be nonnegative, got {rate}")));
    }
    if !(well_size > 0.0) {
        return Err(Error::Config(format!("well size must be positive, got {well_size}")));
    }
    let cells = ((well_size / grid.h()).round() as usize).clamp(1, grid.nx().min(grid.ny()) / 2);
    let block_area = (cells * cells) as f64 * grid.cell_area();
    let density = rate / block_area;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut qi = ScalarField::zeros(grid);
    let mut qp = ScalarField::zeros(grid);
    let mut uh = ScalarField::zeros(grid);
    for j in 0..cells {
        for i in 0..cells {
            let inj = grid.index(i, j);
            qi.values_mut()[inj] = density;
            uh.values_mut()[inj] = u_inject;
            qp.values_mut()[grid.index(nx - 1 - i, ny - 1 - j)] = density;
        }
    }
    SourceSpec::new(qi, qp, uh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_spot_is_balanced_and_scales_with_grid() {
        for n in [16, 32, 64] {
            let g = Grid2D::unit_square(n).unwrap();
            let s = five_spot(g, 1.0, 1.0 / 16.0, 1.0).unwrap();
            assert!((s.q_inject.integral() - 1.0).abs() < 1e-12);
            assert_eq!(s.imbalance(), 0.0);
            let cells = s.q_inject.values().iter().filter(|&&q| q > 0.0).count();
            assert_eq!(cells, (n / 16) * (n / 16));
        }
    }

    #[test]
    fn five_spot_is_diagonally_symmetric() {
        let g = Grid2D::unit_square(8).unwrap();
        let s = five_spot(g, 2.0, 0.25, 1.0).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                assert_eq!(s.q_inject.at(i, j), s.q_inject.at(j, i));
                assert_eq!(s.q_produce.at(i, j), s.q_inject.at(7 - i, 7 - j));
            }
        }
    }
}
