//! Local indicators around a space-time point: gradient energy, cylinder
//! oscillation and its decay, level-set fractions, the logarithmic barrier and
//! the coefficient oscillation `eta(r)`.

use serde::{Deserialize, Serialize};

use crate::coefficients::{viscosity, FluidSpec, MediumSpec};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::ops::{gradient, mean_over};
use crate::region::{cylinder_restrict, Ball, Cylinder, FieldHistory};

fn check_fits(ball: &Ball, grid: &crate::grid::Grid2D) -> Result<()> {
    if !ball.scaled_fits(grid, 1.0) {
        return Err(Error::Resolution {
            radius: ball.radius,
            reason: format!("ball around {:?} leaves the domain", ball.center),
        });
    }
    Ok(())
}

/// `(rho, sup_t avg_{B_rho(x0)} |grad p|^2)` for every radius, the supremum
/// taken over all snapshots of `p_history`.
pub fn local_gradient_energy(p_history: &FieldHistory, x0: (usize, usize), ladder: &[f64]) -> Result<Vec<(f64, f64)>> {
    let grid = *p_history
        .grid()
        .ok_or_else(|| Error::Degenerate("gradient energy needs at least one snapshot".into()))?;
    let energies: Vec<Vec<f64>> = p_history
        .fields()
        .iter()
        .map(|p| gradient(p).magnitude_squared().into_values())
        .collect();
    ladder
        .iter()
        .map(|&rho| {
            let ball = Ball::new(x0, rho);
            check_fits(&ball, &grid)?;
            let members = ball.members(&grid)?;
            let sup = energies
                .iter()
                .map(|e| mean_over(e, &members))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((rho, sup))
        })
        .collect()
}

/// Extremes of the samples in a cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationStats {
    /// `M_r`.
    pub sup: f64,
    /// `m_r`.
    pub inf: f64,
}

impl OscillationStats {
    pub fn omega(&self) -> f64 {
        self.sup - self.inf
    }
}

pub fn cylinder_stats(history: &FieldHistory, cylinder: &Cylinder) -> Result<OscillationStats> {
    let samples = cylinder_restrict(history, cylinder)?;
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in &samples {
        sup = sup.max(s.value);
        inf = inf.min(s.value);
    }
    Ok(OscillationStats { sup, inf })
}

/// `(r, omega_r)` over the cylinders `Q_r(x0, t0)`.
pub fn cylinder_oscillation(
    u_history: &FieldHistory,
    x0: (usize, usize),
    t0: f64,
    ladder: &[f64],
) -> Result<Vec<(f64, f64)>> {
    ladder
        .iter()
        .map(|&r| Ok((r, cylinder_stats(u_history, &Cylinder::new(x0, t0, r))?.omega())))
        .collect()
}

/// Least-squares power law `omega_r ~ c r^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `None` when fewer than three points have positive radius and oscillation.
    pub alpha: Option<f64>,
    /// RMS residual of the log-log fit.
    pub residual: Option<f64>,
    pub points: usize,
}

impl DecayFit {
    pub fn is_conclusive(&self) -> bool {
        self.alpha.is_some()
    }
}

pub fn decay_exponent_fit(series: &[(f64, f64)]) -> DecayFit {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(r, w)| *r > 0.0 && *w > 0.0)
        .map(|(r, w)| (r.ln(), w.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return DecayFit {
            alpha: None,
            residual: None,
            points: n,
        };
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return DecayFit {
            alpha: None,
            residual: None,
            points: n,
        };
    }
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - alpha * p.0).powi(2)).sum();
    DecayFit {
        alpha: Some(alpha),
        residual: Some((rss / nf).sqrt()),
        points: n,
    }
}

/// Fraction of the cells of `ball` where `u > M - omega / 2^s1`, with `M` and
/// `omega` taken over the ball.
pub fn level_set_fraction(u: &ScalarField, ball: &Ball, s1: f64) -> Result<f64> {
    let members = ball.members(u.grid())?;
    let v = u.values();
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    for &c in &members {
        sup = sup.max(v[c]);
        inf = inf.min(v[c]);
    }
    let omega = sup - inf;
    if omega <= 0.0 {
        return Err(Error::Degenerate(format!(
            "zero oscillation on ball of radius {} around {:?}",
            ball.radius, ball.center
        )));
    }
    let threshold = sup - omega / 2f64.powf(s1);
    let above = members.iter().filter(|&&c| v[c] > threshold).count();
    Ok(above as f64 / members.len() as f64)
}

/// `k(r) = r^(2 - 2/s) sup_t |q_I|_{L^s(B_r)}` for a time-independent
/// injection density.
pub fn barrier_level(q_inject: &ScalarField, ball: &Ball, s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::Config(format!("integrability exponent must exceed 1, got {s}")));
    }
    let members = ball.members(q_inject.grid())?;
    let area = q_inject.grid().cell_area();
    let sum: f64 = members.iter().map(|&c| q_inject.values()[c].abs().powf(s)).sum();
    Ok(ball.radius.powf(2.0 - 2.0 / s) * (sum * area).powf(1.0 / s))
}

/// `ln[(omega + k) / (2^s1 (M - u) + k)]`.
pub fn barrier_value(u: f64, stats: OscillationStats, s1: f64, k_r: f64) -> f64 {
    ((stats.omega() + k_r) / (2f64.powf(s1) * (stats.sup - u) + k_r)).ln()
}

/// Values of a field on the cells of a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallField {
    pub cells: Vec<usize>,
    pub values: Vec<f64>,
}

/// Logarithmic barrier of `u` on `ball` for cylinder extremes `stats`.
pub fn log_barrier_field(u: &ScalarField, ball: &Ball, stats: OscillationStats, s1: f64, k_r: f64) -> Result<BallField> {
    if !(k_r > 0.0 && k_r.is_finite()) {
        return Err(Error::Config(format!("barrier level k(r) must be positive, got {k_r}")));
    }
    let cells = ball.members(u.grid())?;
    let values = cells
        .iter()
        .map(|&c| barrier_value(u.values()[c], stats, s1, k_r))
        .collect();
    Ok(BallField { cells, values })
}

/// `sup_{x in B_r} |mu(u(x0)) - mu(u(x))|` for one snapshot.
fn viscosity_deviation(u: &ScalarField, members: &[usize], u0: f64, fluid: &FluidSpec) -> f64 {
    let mu0 = viscosity(u0, fluid);
    members
        .iter()
        .map(|&c| (mu0 - viscosity(u.values()[c], fluid)).abs())
        .fold(0.0, f64::max)
}

/// Largest entrywise oscillation of the permeability over the cells.
pub fn permeability_oscillation(medium: &MediumSpec, members: &[usize]) -> f64 {
    let k = medium.permeability.values();
    let osc = |pick: fn(&crate::field::SymTensor2) -> f64| {
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for &c in members {
            hi = hi.max(pick(&k[c]));
            lo = lo.min(pick(&k[c]));
        }
        hi - lo
    };
    osc(|t| t.xx).max(osc(|t| t.xy)).max(osc(|t| t.yy))
}

/// `eta(r) = sup_{Q_r} |mu(u(z0)) - mu(u)| + (osc_{B_r} K)^2`, where `z0` is
/// the cylinder's centre cell at snapshot `time_index`.
pub fn eta(
    u_history: &FieldHistory,
    cylinder: &Cylinder,
    time_index: usize,
    medium: &MediumSpec,
    fluid: &FluidSpec,
) -> Result<f64> {
    let grid = *u_history
        .grid()
        .ok_or_else(|| Error::Degenerate("empty concentration history".into()))?;
    let u_z0 = u_history
        .fields()
        .get(time_index)
        .ok_or_else(|| Error::Domain(format!("snapshot index {time_index} out of range")))?
        .values()[grid.index(cylinder.ball.center.0, cylinder.ball.center.1)];
    let members = cylinder.ball.members(&grid)?;
    let mut dev: f64 = 0.0;
    for t in cylinder.snapshot_indices(u_history)? {
        dev = dev.max(viscosity_deviation(&u_history.fields()[t], &members, u_z0, fluid));
    }
    let k_osc = permeability_oscillation(medium, &members);
    Ok(dev + k_osc * k_osc)
}

/// `eta` on a single snapshot.
pub fn eta_snapshot(u: &ScalarField, ball: &Ball, medium: &MediumSpec, fluid: &FluidSpec) -> Result<f64> {
    let members = ball.members(u.grid())?;
    let u0 = u.at(ball.center.0, ball.center.1);
    let k_osc = permeability_oscillation(medium, &members);
    Ok(viscosity_deviation(u, &members, u0, fluid) + k_osc * k_osc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ViscosityLaw;
    use crate::field::{SymTensor2, SymTensor2Field};
    use crate::grid::Grid2D;

    fn steady(field: ScalarField) -> FieldHistory {
        let mut h = FieldHistory::new();
        for k in 0..4 {
            h.push(k as f64 * 0.01, field.clone()).unwrap();
        }
        h
    }

    #[test]
    fn gradient_energy_of_linear_and_zero_pressure() {
        let g = Grid2D::unit_square(32).unwrap();
        let ladder = g.dyadic_ladder(4);
        let lin = local_gradient_energy(&steady(ScalarField::from_fn(g, |x, _| x)), (16, 16), &ladder).unwrap();
        assert!(lin.iter().all(|(_, e)| (e - 1.0).abs() < 1e-12));
        let zero = local_gradient_energy(&steady(ScalarField::zeros(g)), (16, 16), &ladder).unwrap();
        assert!(zero.iter().all(|(_, e)| *e == 0.0));
        assert!(local_gradient_energy(&FieldHistory::new(), (1, 1), &ladder).is_err());
        assert!(matches!(
            local_gradient_energy(&steady(ScalarField::zeros(g)), (1, 1), &[0.5]),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn oscillation_of_linear_field_matches_member_extent() {
        let g = Grid2D::unit_square(32).unwrap();
        let u = ScalarField::from_fn(g, |x, _| x);
        let hist = steady(u.clone());
        let ladder = [g.h(), 2.5 * g.h(), 4.0 * g.h()];
        for (r, w) in cylinder_oscillation(&hist, (15, 15), 0.03, &ladder).unwrap() {
            let members = Ball::new((15, 15), r).members(&g).unwrap();
            let xs: Vec<f64> = members.iter().map(|&c| u.values()[c]).collect();
            let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!(w, span);
            assert!((w - 2.0 * (r / g.h()).floor() * g.h()).abs() < 1e-12);
        }
    }

    #[test]
    fn oscillation_is_monotone_and_symmetric() {
        let g = Grid2D::unit_square(24).unwrap();
        let u = ScalarField::from_fn(g, |x, y| 0.5 + 0.4 * (7.0 * x).sin() * (5.0 * y).cos());
        let hist = steady(u.clone());
        let flipped = steady(u.map(|v| 1.0 - v));
        let ladder = g.dyadic_ladder(4);
        let a = cylinder_oscillation(&hist, (12, 12), 0.02, &ladder).unwrap();
        let b = cylinder_oscillation(&flipped, (12, 12), 0.02, &ladder).unwrap();
        assert!(a.windows(2).all(|w| w[0].1 <= w[1].1));
        for (x, y) in a.iter().zip(&b) {
            assert!((x.1 - y.1).abs() < 1e-15);
        }
    }

    #[test]
    fn square_root_profile_oscillates_like_square_root() {
        let g = Grid2D::unit_square(64).unwrap();
        let [x0, y0] = g.cell_center(32, 32);
        let u = ScalarField::from_fn(g, |x, y| ((x - x0).powi(2) + (y - y0).powi(2)).sqrt().sqrt());
        let ladder = [3.0 * g.h(), 5.5 * g.h(), 10.2 * g.h()];
        for (r, w) in cylinder_oscillation(&steady(u), (32, 32), 0.0, &ladder).unwrap() {
            assert!((w / r.sqrt() - 1.0).abs() <= (g.h() / r).sqrt(), "r={r} w={w}");
        }
    }

    #[test]
    fn decay_fit_examples() {
        let series: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.4].iter().map(|&r: &f64| (r, r.sqrt())).collect();
        let fit = decay_exponent_fit(&series);
        assert!((fit.alpha.unwrap() - 0.5).abs() < 0.025);
        assert!(fit.residual.unwrap() < 1e-12);
        let zero: Vec<_> = series.iter().map(|(r, _)| (*r, 0.0)).collect();
        assert!(!decay_exponent_fit(&zero).is_conclusive());
        let flat: Vec<_> = series.iter().map(|(r, _)| (*r, 0.3)).collect();
        assert!(decay_exponent_fit(&flat).alpha.unwrap().abs() < 0.025);
    }

    #[test]
    fn level_set_examples() {
        let g = Grid2D::unit_square(16).unwrap();
        let ball = Ball::new((8, 8), 3.0 * g.h());
        assert!(matches!(
            level_set_fraction(&ScalarField::constant(g, 0.2), &ball, 1.0),
            Err(Error::Degenerate(_))
        ));

        let u = ScalarField::from_fn(g, |x, _| x);
        let members = ball.members(&g).unwrap();
        let (hi, lo) = members
            .iter()
            .fold((f64::MIN, f64::MAX), |(a, b), &c| (a.max(u.values()[c]), b.min(u.values()[c])));
        let expected = members.iter().filter(|&&c| u.values()[c] > hi - (hi - lo) / 2.0).count();
        let frac = level_set_fraction(&u, &ball, 1.0).unwrap();
        assert_eq!(frac, expected as f64 / members.len() as f64);

        let mut spike = ScalarField::zeros(g);
        spike.values_mut()[g.index(8, 9)] = 1.0;
        for s1 in [1.0, 2.0, 5.0] {
            assert_eq!(level_set_fraction(&spike, &ball, s1).unwrap(), 1.0 / members.len() as f64);
        }
    }

    #[test]
    fn level_set_fraction_is_affine_invariant() {
        let g = Grid2D::unit_square(16).unwrap();
        // dyadic values keep the affine map exact
        let u = ScalarField::from_fn(g, |x, y| ((x * 37.0 + y * 11.0) * 64.0).floor() / 64.0 % 3.0);
        let ball = Ball::new((7, 9), 5.0 * g.h());
        for s1 in [1.0, 2.0, 3.0] {
            let a = level_set_fraction(&u, &ball, s1).unwrap();
            let b = level_set_fraction(&u.map(|v| 2.0 * v + 0.25), &ball, s1).unwrap();
            assert_eq!(a, b);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn barrier_examples() {
        let stats = OscillationStats { sup: 0.75, inf: -0.25 };
        let v = barrier_value(0.25, stats, 3.0, 0.1);
        assert!((v - (1.1f64 / 4.1).ln()).abs() < 1e-15);
        assert!((barrier_value(0.75, stats, 3.0, 0.1) - 11f64.ln()).abs() < 1e-15);
        let flat = OscillationStats { sup: 0.4, inf: 0.4 };
        assert_eq!(barrier_value(0.4, flat, 2.0, 0.3), 0.0);

        let g = Grid2D::unit_square(8).unwrap();
        let ball = Ball::new((4, 4), 2.0 * g.h());
        assert!(log_barrier_field(&ScalarField::zeros(g), &ball, stats, 1.0, 0.0).is_err());
        let field = log_barrier_field(&ScalarField::constant(g, 0.75), &ball, stats, 1.0, 0.5).unwrap();
        assert_eq!(field.cells.len(), 13);
        assert!(field.values.iter().all(|&v| (v - 3f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn barrier_level_of_uniform_injection() {
        let g = Grid2D::unit_square(16).unwrap();
        let q = ScalarField::constant(g, 2.0);
        let ball = Ball::new((8, 8), 0.25);
        let n = ball.members(&g).unwrap().len() as f64;
        let k = barrier_level(&q, &ball, 3.0).unwrap();
        let expected = 0.25f64.powf(4.0 / 3.0) * (8.0 * n * g.cell_area()).powf(1.0 / 3.0);
        assert!((k - expected).abs() < 1e-14);
    }

    #[test]
    fn eta_vanishes_for_constant_data_and_sees_jumps() {
        let g = Grid2D::unit_square(16).unwrap();
        let fluid = FluidSpec::new(
            0.01,
            0.01,
            0.1,
            ViscosityLaw::QuarterPower {
                mu0: 1.0,
                mobility_ratio: 20.0,
            },
        )
        .unwrap();
        let medium = MediumSpec::uniform(g, 0.2, 1.0).unwrap();
        let hist = steady(ScalarField::constant(g, 0.4));
        let cyl = Cylinder::new((8, 8), 0.02, 0.2);
        assert_eq!(eta(&hist, &cyl, 2, &medium, &fluid).unwrap(), 0.0);

        let k = SymTensor2Field::from_fn(g, |i, _| SymTensor2::isotropic(if i < 8 { 1.0 } else { 1.5 })).unwrap();
        let jumpy = MediumSpec::new(medium.porosity.clone(), k).unwrap();
        assert!((eta(&hist, &cyl, 2, &jumpy, &fluid).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn eta_shrinks_with_radius_for_continuous_data() {
        let g = Grid2D::unit_square(32).unwrap();
        let fluid = FluidSpec::new(0.01, 0.01, 0.1, ViscosityLaw::QuarterPower { mu0: 1.0, mobility_ratio: 20.0 }).unwrap();
        let k = SymTensor2Field::from_fn(g, |i, j| SymTensor2::isotropic(1.0 + 0.02 * (i + j) as f64)).unwrap();
        let medium = MediumSpec::new(ScalarField::constant(g, 0.2), k).unwrap();
        let hist = steady(ScalarField::from_fn(g, |x, y| 0.5 * x * y));
        let etas: Vec<f64> = g
            .dyadic_ladder(4)
            .iter()
            .map(|&r| eta(&hist, &Cylinder::new((16, 16), 0.02, r), 2, &medium, &fluid).unwrap())
            .collect();
        assert!(etas.windows(2).all(|w| w[0] <= w[1]), "{etas:?}");
    }
}
