//! Coefficient laws: porosity, permeability, viscosity, sources and the
//! hydrodynamic dispersion tensor with its velocity truncation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Hypothesis, Result};
use crate::field::{ScalarField, SymTensor2, SymTensor2Field};

/// Porosity and absolute permeability of the medium.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumSpec {
    pub porosity: ScalarField,
    pub permeability: SymTensor2Field,
    /// Lower bound on porosity.
    pub lambda0: f64,
    /// Ellipticity constant of the permeability.
    pub c0: f64,
}

impl MediumSpec {
    /// Medium with bounds taken from the data itself.
    pub fn new(porosity: ScalarField, permeability: SymTensor2Field) -> Result<Self> {
        let lambda0 = porosity.min();
        let c0 = permeability.min_eigenvalue();
        Self::with_bounds(porosity, permeability, lambda0, c0)
    }

    pub fn with_bounds(
        porosity: ScalarField,
        permeability: SymTensor2Field,
        lambda0: f64,
        c0: f64,
    ) -> Result<Self> {
        if !porosity.grid().same_shape(permeability.grid()) {
            return Err(Error::Config("porosity and permeability grids differ".into()));
        }
        let medium = Self {
            porosity,
            permeability,
            lambda0,
            c0,
        };
        medium.validate()?;
        Ok(medium)
    }

    /// Uniform porosity and isotropic permeability.
    pub fn uniform(grid: crate::grid::Grid2D, porosity: f64, permeability: f64) -> Result<Self> {
        Self::new(
            ScalarField::constant(grid, porosity),
            SymTensor2Field::constant(grid, SymTensor2::isotropic(permeability)),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0) {
            return Err(Error::hypothesis(
                Hypothesis::Porosity,
                format!("requires a positive porosity bound lambda0, got {}", self.lambda0),
            ));
        }
        let phi_min = self.porosity.min();
        if phi_min < self.lambda0 {
            return Err(Error::hypothesis(
                Hypothesis::Porosity,
                format!("requires porosity >= lambda0 = {}, found {phi_min}", self.lambda0),
            ));
        }
        if !(self.c0 > 0.0) {
            return Err(Error::hypothesis(
                Hypothesis::Permeability,
                format!("requires a positive ellipticity constant c0, got {}", self.c0),
            ));
        }
        let k_min = self.permeability.min_eigenvalue();
        if k_min < self.c0 * (1.0 - 1e-12) {
            return Err(Error::hypothesis(
                Hypothesis::Permeability,
                format!("requires permeability eigenvalues >= c0 = {}, found {k_min}", self.c0),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ViscosityLaw {
    /// `mu(u) = mu0`.
    Constant { mu0: f64 },
    /// Quarter-power mixing rule `mu(u) = mu0 [(1 - u) + M^(1/4) u]^(-4)`.
    QuarterPower { mu0: f64, mobility_ratio: f64 },
}

impl ViscosityLaw {
    fn eval(self, u: f64) -> f64 {
        match self {
            ViscosityLaw::Constant { mu0 } => mu0,
            ViscosityLaw::QuarterPower { mu0, mobility_ratio } => {
                let mix = (1.0 - u) + mobility_ratio.powf(0.25) * u;
                mu0 / (mix * mix * mix * mix)
            }
        }
    }

    /// Smallest value over `[0, 1]`; both laws are monotone in `u`.
    pub fn minimum(self) -> f64 {
        self.eval(0.0).min(self.eval(1.0))
    }
}

/// Dispersion parameters and viscosity law of the fluid pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidSpec {
    /// Molecular diffusion.
    pub m: f64,
    /// Transverse dispersivity.
    pub a: f64,
    /// Longitudinal dispersivity.
    pub b: f64,
    pub viscosity: ViscosityLaw,
    /// Lower bound on viscosity.
    pub c1: f64,
}

impl FluidSpec {
    pub fn new(m: f64, a: f64, b: f64, viscosity: ViscosityLaw) -> Result<Self> {
        let spec = Self {
            m,
            a,
            b,
            viscosity,
            c1: viscosity.minimum(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::hypothesis(
                Hypothesis::Dispersion,
                format!("requires m > 0, got m = {}", self.m),
            ));
        }
        if !(self.a > 0.0) {
            return Err(Error::hypothesis(
                Hypothesis::Dispersion,
                format!("requires a > 0, got a = {}", self.a),
            ));
        }
        if !(self.b >= self.a) {
            return Err(Error::hypothesis(
                Hypothesis::Dispersion,
                format!("requires b >= a, got a = {}, b = {}", self.a, self.b),
            ));
        }
        let (mu0, ok_params) = match self.viscosity {
            ViscosityLaw::Constant { mu0 } => (mu0, true),
            ViscosityLaw::QuarterPower { mu0, mobility_ratio } => (mu0, mobility_ratio > 0.0),
        };
        if !(mu0 > 0.0) || !ok_params {
            return Err(Error::hypothesis(
                Hypothesis::Viscosity,
                "requires mu0 > 0 and a positive mobility ratio",
            ));
        }
        if !(self.c1 > 0.0) {
            return Err(Error::hypothesis(
                Hypothesis::Viscosity,
                format!("requires a positive lower bound c1, got {}", self.c1),
            ));
        }
        let lowest = self.viscosity.minimum();
        if lowest < self.c1 * (1.0 - 1e-12) {
            return Err(Error::hypothesis(
                Hypothesis::Viscosity,
                format!("requires mu(u) >= c1 = {} on [0, 1], minimum is {lowest}", self.c1),
            ));
        }
        Ok(())
    }
}

/// Viscosity at concentration `u`; `u` outside `[0, 1]` is clamped.
pub fn viscosity(u: f64, spec: &FluidSpec) -> f64 {
    let clamped = u.clamp(0.0, 1.0);
    if clamped != u {
        log::warn!("concentration {u} clamped to {clamped} for viscosity evaluation");
    }
    spec.viscosity.eval(clamped)
}

/// `D(v) = (m + a|v|) I + (b - a) v (x) v / |v|`, with `D(0) = m I`.
pub fn dispersion_tensor(v: [f64; 2], spec: &FluidSpec) -> SymTensor2 {
    let speed = v[0].hypot(v[1]);
    if speed == 0.0 {
        return SymTensor2::isotropic(spec.m);
    }
    let iso = spec.m + spec.a * speed;
    let c = (spec.b - spec.a) / speed;
    SymTensor2::new(iso + c * v[0] * v[0], c * v[0] * v[1], iso + c * v[1] * v[1])
}

/// Speed truncation `eps_k(s) = min(s, k)`.
#[inline]
pub fn truncate_speed(s: f64, k: u32) -> f64 {
    s.min(k as f64)
}

/// `D_k(v) = (a eps_k + m) I + (b - a) eps_k v (x) v / |v|^2`.
///
/// Identical to [`dispersion_tensor`] (same arithmetic) whenever `|v| <= k`.
pub fn truncated_dispersion(v: [f64; 2], k: u32, spec: &FluidSpec) -> SymTensor2 {
    assert!(k >= 1, "truncation level must be at least 1");
    let speed = v[0].hypot(v[1]);
    if speed <= k as f64 {
        return dispersion_tensor(v, spec);
    }
    let eps = truncate_speed(speed, k);
    let iso = spec.a * eps + spec.m;
    let c = (spec.b - spec.a) * eps / (speed * speed);
    SymTensor2::new(iso + c * v[0] * v[0], c * v[0] * v[1], iso + c * v[1] * v[1])
}

/// Injection/production densities and injected concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub q_inject: ScalarField,
    pub q_produce: ScalarField,
    pub u_hat: ScalarField,
}

impl SourceSpec {
    pub fn none(grid: crate::grid::Grid2D) -> Self {
        Self {
            q_inject: ScalarField::zeros(grid),
            q_produce: ScalarField::zeros(grid),
            u_hat: ScalarField::zeros(grid),
        }
    }

    /// Validates bounds and rescales production to balance injection.
    pub fn new(q_inject: ScalarField, q_produce: ScalarField, u_hat: ScalarField) -> Result<Self> {
        if q_inject.min() < 0.0 || q_produce.min() < 0.0 {
            return Err(Error::hypothesis(
                Hypothesis::Sources,
                "requires nonnegative injection and production densities",
            ));
        }
        if u_hat.min() < 0.0 || u_hat.max() > 1.0 {
            return Err(Error::hypothesis(
                Hypothesis::Sources,
                format!(
                    "requires injected concentration in [0, 1], found [{}, {}]",
                    u_hat.min(),
                    u_hat.max()
                ),
            ));
        }
        let (q_inject, q_produce) = project_compatible_sources(&q_inject, &q_produce)?;
        Ok(Self {
            q_inject,
            q_produce,
            u_hat,
        })
    }

    /// `q_I - q_P`.
    pub fn net(&self) -> ScalarField {
        self.q_inject.zip_map(&self.q_produce, |i, p| i - p)
    }

    /// Relative imbalance `|int(q_I - q_P)| / max(int q_I, int q_P)`.
    pub fn imbalance(&self) -> f64 {
        let qi = self.q_inject.integral();
        let qp = self.q_produce.integral();
        let scale = qi.max(qp);
        if scale == 0.0 {
            0.0
        } else {
            (qi - qp).abs() / scale
        }
    }
}

/// Rescales production so that `int q_I = int q_P`.
///
/// Scaling (rather than shifting) keeps `q_P >= 0`.
pub fn project_compatible_sources(
    q_inject: &ScalarField,
    q_produce: &ScalarField,
) -> Result<(ScalarField, ScalarField)> {
    if !q_inject.grid().same_shape(q_produce.grid()) {
        return Err(Error::Config("source fields live on different grids".into()));
    }
    let qi = q_inject.integral();
    let qp = q_produce.integral();
    match (qi > 0.0, qp > 0.0) {
        (false, false) => Ok((q_inject.clone(), q_produce.clone())),
        (true, true) => {
            if qi == qp {
                return Ok((q_inject.clone(), q_produce.clone()));
            }
            let factor = qi / qp;
            log::info!("production rescaled by {factor} to balance injection");
            Ok((q_inject.clone(), q_produce.map(|v| v * factor)))
        }
        _ => Err(Error::hypothesis(
            Hypothesis::Sources,
            format!("cannot balance sources: injection integral {qi}, production integral {qp}"),
        )),
    }
}
