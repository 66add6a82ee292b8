//! Time stepping by Picard iteration between the pressure solve and the
//! implicit transport step.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::coefficients::{FluidSpec, MediumSpec, SourceSpec, ViscosityLaw};
use crate::error::{Error, Hypothesis, Result};
use crate::field::{FluxField, ScalarField};
use crate::grid::Grid2D;
use crate::ops::gradient;
use crate::pressure::{solve_pressure, PressureOptions, PressureSolution};
use crate::region::FieldHistory;
use crate::transport::{
    advance_concentration_with, CrossDiffusion, EnergyReport, TransportOptions, TransportProblem,
    TransportStepReport,
};

/// Velocity truncation policy for the dispersion tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Untruncated tensor.
    None,
    /// `k = ceil(max cell |v|)`, recomputed from every velocity; never active.
    #[default]
    Auto,
    Fixed(u32),
}

impl Truncation {
    fn level(self, velocity: &FluxField) -> Option<u32> {
        match self {
            Truncation::None => None,
            Truncation::Fixed(k) => Some(k),
            Truncation::Auto => {
                let vmax = velocity.cell_velocities().magnitude().max();
                Some((vmax.ceil() as u32).max(1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    #[default]
    Sup,
    /// Discrete `L^2(Omega)` norm.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub norm: ResidualNorm,
    /// Fail instead of warning when the iteration cap is reached.
    pub strict: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            norm: ResidualNorm::Sup,
            strict: true,
        }
    }
}

/// Data fixed during one time step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub medium: &'a MediumSpec,
    pub fluid: &'a FluidSpec,
    pub sources: &'a SourceSpec,
    /// Concentration at the start of the step.
    pub u_old: &'a ScalarField,
    pub dt: f64,
    pub pressure: PressureOptions,
    pub transport: TransportOptions,
    pub truncation: Truncation,
}

/// Result of one application of the fixed-point map.
#[derive(Debug, Clone)]
pub struct PicardOutput {
    pub pressure: PressureSolution,
    pub transport: TransportStepReport,
    pub k_trunc: Option<u32>,
}

/// Iterates of one time step.
#[derive(Debug, Clone, Default)]
pub struct PicardState {
    pub u_iterates: Vec<ScalarField>,
    pub residuals: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub k_trunc: Option<u32>,
    pub converged: bool,
}

impl PicardState {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn summary(&self) -> PicardSummary {
        PicardSummary {
            iterations: self.iterations(),
            residuals: self.residuals.clone(),
            contraction_ratios: self.contraction_ratios.clone(),
            final_residual: self.residuals.last().copied().unwrap_or(0.0),
            k_trunc: self.k_trunc,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardSummary {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub final_residual: f64,
    pub k_trunc: Option<u32>,
    pub converged: bool,
}

fn residual(a: &ScalarField, b: &ScalarField, norm: ResidualNorm) -> f64 {
    match norm {
        ResidualNorm::Sup => a.sup_distance(b),
        ResidualNorm::L2 => a.l2_distance(b),
    }
}

fn check_concentration(u: &ScalarField) -> Result<()> {
    const SLACK: f64 = 1e-9;
    let (lo, hi) = (u.min(), u.max());
    if lo < -SLACK || hi > 1.0 + SLACK {
        return Err(Error::hypothesis(
            Hypothesis::InitialData,
            format!("concentration must lie in [0, 1], found range [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

fn transport_from(ctx: &StepContext<'_>, u_guess: &ScalarField, pressure: PressureSolution) -> Result<PicardOutput> {
    let k_trunc = ctx.truncation.level(&pressure.v);
    let problem = TransportProblem {
        medium: ctx.medium,
        fluid: ctx.fluid,
        sources: ctx.sources,
        velocity: &pressure.v,
        dt: ctx.dt,
        k_trunc,
    };
    let reference = (ctx.transport.cross_diffusion == CrossDiffusion::Lagged).then_some(u_guess);
    let transport = advance_concentration_with(ctx.u_old, &problem, &ctx.transport, None, reference)?;
    Ok(PicardOutput {
        pressure,
        transport,
        k_trunc,
    })
}

/// One application of the fixed-point map: pressure and velocity from
/// `u_guess`, then one transport step from `ctx.u_old` with that velocity.
pub fn picard_step(u_guess: &ScalarField, ctx: &StepContext<'_>) -> Result<PicardOutput> {
    check_concentration(u_guess)?;
    let pressure = solve_pressure(u_guess, ctx.medium, ctx.fluid, ctx.sources, &ctx.pressure)?;
    transport_from(ctx, u_guess, pressure)
}

/// Final map output and the iterate record of one time step.
#[derive(Debug, Clone)]
pub struct PicardResult {
    pub state: PicardState,
    pub output: PicardOutput,
}

/// Iterates the map from `start` (default `ctx.u_old`) until consecutive
/// iterates agree to `opts.tol` or the cap is reached.
pub fn picard_solve(ctx: &StepContext<'_>, opts: &PicardOptions, start: Option<&ScalarField>) -> Result<PicardResult> {
    iterate(ctx, opts, start, None)
}

fn iterate(
    ctx: &StepContext<'_>,
    opts: &PicardOptions,
    start: Option<&ScalarField>,
    frozen: Option<&PressureSolution>,
) -> Result<PicardResult> {
    if opts.max_iter == 0 {
        return Err(Error::Config("Picard iteration cap must be positive".into()));
    }
    let mut state = PicardState::default();
    let mut current = start.unwrap_or(ctx.u_old).clone();
    let mut output = None;
    for _ in 0..opts.max_iter {
        let out = match frozen {
            Some(p) => {
                check_concentration(&current)?;
                transport_from(ctx, &current, p.clone())?
            }
            None => picard_step(&current, ctx)?,
        };
        let r = residual(&out.transport.u_new, &current, opts.norm);
        if let Some(&prev) = state.residuals.last() {
            state.contraction_ratios.push(if prev > 0.0 { r / prev } else { 0.0 });
        }
        state.residuals.push(r);
        state.k_trunc = out.k_trunc;
        current = out.transport.u_new.clone();
        state.u_iterates.push(current.clone());
        output = Some(out);
        if r <= opts.tol {
            state.converged = true;
            break;
        }
    }
    debug!(
        "picard: {} iterations, final residual {:.3e}",
        state.iterations(),
        state.residuals.last().copied().unwrap_or(0.0)
    );
    Ok(PicardResult {
        state,
        output: output.expect("at least one iteration"),
    })
}

/// Time step selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Fixed(f64),
    /// `factor * h / max |v|` from the velocity at the start of the step,
    /// capped by `max_dt`.
    Cfl { factor: f64, max_dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSettings {
    pub t_final: f64,
    pub step: TimeStep,
    /// Record a snapshot every this many steps (the final state is always recorded).
    pub snapshot_every: usize,
}

/// A fully specified simulation.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub medium: MediumSpec,
    pub fluid: FluidSpec,
    pub sources: SourceSpec,
    pub u0: ScalarField,
    pub time: TimeSettings,
    pub pressure: PressureOptions,
    pub transport: TransportOptions,
    pub picard: PicardOptions,
    pub truncation: Truncation,
}

impl SimulationSetup {
    pub fn grid(&self) -> &Grid2D {
        self.u0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.fluid.validate()?;
        check_concentration(&self.u0)?;
        let g = self.grid();
        for (name, grid) in [
            ("porosity", self.medium.porosity.grid()),
            ("permeability", self.medium.permeability.grid()),
            ("sources", self.sources.q_inject.grid()),
        ] {
            if !grid.same_shape(g) {
                return Err(Error::Config(format!("{name} grid does not match the concentration grid")));
            }
        }
        let t = &self.time;
        if !(t.t_final > 0.0 && t.t_final.is_finite()) {
            return Err(Error::Config(format!("final time must be positive, got {}", t.t_final)));
        }
        if t.snapshot_every == 0 {
            return Err(Error::Config("snapshot cadence must be at least one step".into()));
        }
        match t.step {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                Err(Error::Config(format!("time step must be positive, got {dt}")))
            }
            TimeStep::Cfl { factor, max_dt } if !(factor > 0.0 && max_dt > 0.0) => Err(Error::Config(format!(
                "CFL factor and maximum step must be positive, got {factor} and {max_dt}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Monitors recorded after every time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub picard: PicardSummary,
    pub mass_before: f64,
    pub mass_after: f64,
    /// `dt * sum q_I u_hat h^2`.
    pub injected: f64,
    /// `dt * sum q_P u h^2`.
    pub produced: f64,
    pub balance_defect: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub pressure_mean: f64,
    /// `max |div v - (q_I - q_P)|`.
    pub pressure_residual: f64,
    /// Running energy functional up to this step.
    pub energy: EnergyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeBalance {
    pub injected: f64,
    pub produced: f64,
    pub mass_change: f64,
    /// `injected - produced - mass_change`.
    pub defect: f64,
    pub scale: f64,
}

impl CumulativeBalance {
    pub fn relative_defect(&self) -> f64 {
        if self.scale > 0.0 {
            self.defect.abs() / self.scale
        } else {
            self.defect.abs()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationHistory {
    pub u: FieldHistory,
    pub p: Vec<ScalarField>,
    pub v: Vec<FluxField>,
    pub steps: Vec<StepRecord>,
    pub initial_mass: f64,
    pub energy: EnergyReport,
}

impl SimulationHistory {
    pub fn times(&self) -> &[f64] {
        self.u.times()
    }

    pub fn final_u(&self) -> &ScalarField {
        self.u.last().expect("history always holds the initial state").1
    }

    pub fn cumulative_balance(&self) -> CumulativeBalance {
        let injected: f64 = self.steps.iter().map(|s| s.injected).sum();
        let produced: f64 = self.steps.iter().map(|s| s.produced).sum();
        let final_mass = self.steps.last().map_or(self.initial_mass, |s| s.mass_after);
        let mass_change = final_mass - self.initial_mass;
        CumulativeBalance {
            injected,
            produced,
            mass_change,
            defect: injected - produced - mass_change,
            scale: injected.abs().max(produced.abs()).max(final_mass.abs()).max(self.initial_mass.abs()),
        }
    }
}

/// Running form of the transport energy functional.
struct EnergyAccumulator {
    report: EnergyReport,
    last_time: f64,
}

impl EnergyAccumulator {
    fn new(time: f64, u: &ScalarField, phi: &ScalarField) -> Self {
        let mut acc = Self {
            report: EnergyReport {
                sup_mass: 0.0,
                dissipation: 0.0,
            },
            last_time: time,
        };
        acc.report.sup_mass = weighted_square(u, phi);
        acc
    }

    fn push(&mut self, time: f64, u: &ScalarField, v: &FluxField, phi: &ScalarField) {
        self.report.sup_mass = self.report.sup_mass.max(weighted_square(u, phi));
        let speeds = v.cell_velocities().magnitude();
        let grad = gradient(u).magnitude_squared();
        let local: f64 = speeds
            .values()
            .iter()
            .zip(grad.values())
            .map(|(s, g2)| (1.0 + s) * g2)
            .sum();
        self.report.dissipation += (time - self.last_time) * local * u.grid().cell_area();
        self.last_time = time;
    }
}

fn weighted_square(u: &ScalarField, phi: &ScalarField) -> f64 {
    phi.values().iter().zip(u.values()).map(|(p, u)| p * u * u).sum::<f64>() * u.grid().cell_area()
}

fn next_time(t: f64, dt: f64, t_final: f64) -> f64 {
    let t_next = t + dt;
    if t_next >= t_final * (1.0 - 1e-12) {
        t_final
    } else {
        t_next
    }
}

/// Runs the coupled system from `setup.u0` to `setup.time.t_final`.
pub fn run_simulation(setup: &SimulationSetup) -> Result<SimulationHistory> {
    setup.validate()?;
    let grid = *setup.grid();
    let area = grid.cell_area();
    let phi = &setup.medium.porosity;
    let constant_mu = matches!(setup.fluid.viscosity, ViscosityLaw::Constant { .. });

    let mut pressure = solve_pressure(&setup.u0, &setup.medium, &setup.fluid, &setup.sources, &setup.pressure)?;
    let mut history = SimulationHistory {
        u: FieldHistory::single(0.0, setup.u0.clone()),
        p: vec![pressure.p.clone()],
        v: vec![pressure.v.clone()],
        steps: Vec::new(),
        initial_mass: phi.values().iter().zip(setup.u0.values()).map(|(p, u)| p * u).sum::<f64>() * area,
        energy: EnergyReport {
            sup_mass: 0.0,
            dissipation: 0.0,
        },
    };
    let mut energy = EnergyAccumulator::new(0.0, &setup.u0, phi);
    let injection_rate: f64 = setup
        .sources
        .q_inject
        .values()
        .iter()
        .zip(setup.sources.u_hat.values())
        .map(|(q, u)| q * u)
        .sum::<f64>()
        * area;

    let t_final = setup.time.t_final;
    let mut u = setup.u0.clone();
    let mut t = 0.0;
    let mut step = 0usize;
    while t < t_final {
        let dt_nominal = match setup.time.step {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Cfl { factor, max_dt } => {
                let vmax = pressure.v.max_abs();
                if vmax > 0.0 {
                    (factor * grid.h() / vmax).min(max_dt)
                } else {
                    max_dt
                }
            }
        };
        let t_next = match setup.time.step {
            // multiples of a fixed step avoid accumulated drift in the clock
            TimeStep::Fixed(dt) => next_time((step as f64) * dt, dt, t_final),
            TimeStep::Cfl { .. } => next_time(t, dt_nominal, t_final),
        };
        let dt = t_next - t;
        let ctx = StepContext {
            medium: &setup.medium,
            fluid: &setup.fluid,
            sources: &setup.sources,
            u_old: &u,
            dt,
            pressure: setup.pressure,
            transport: setup.transport,
            truncation: setup.truncation,
        };
        let frozen = constant_mu.then_some(&pressure);
        let result = iterate(&ctx, &setup.picard, None, frozen)?;
        if !result.state.converged {
            let final_residual = result.state.residuals.last().copied().unwrap_or(f64::NAN);
            if setup.picard.strict {
                return Err(Error::NotConverged {
                    solver: "picard",
                    iterations: result.state.iterations(),
                    residual: final_residual,
                    history: result.state.residuals.clone(),
                });
            }
            warn!("step {step}: Picard iteration stopped at the cap with residual {final_residual:.3e}");
        }
        let PicardOutput {
            pressure: p_new,
            transport,
            ..
        } = result.output;
        pressure = p_new;
        step += 1;
        let produced = dt
            * setup
                .sources
                .q_produce
                .values()
                .iter()
                .zip(transport.u_new.values())
                .map(|(q, u)| q * u)
                .sum::<f64>()
            * area;
        energy.push(t_next, &transport.u_new, &pressure.v, phi);
        history.steps.push(StepRecord {
            step,
            time: t_next,
            dt,
            picard: result.state.summary(),
            mass_before: transport.mass_before,
            mass_after: transport.mass_after,
            injected: dt * injection_rate,
            produced,
            balance_defect: transport.balance_defect(),
            min_u: transport.min_u,
            max_u: transport.max_u,
            pressure_mean: pressure.p.mean(),
            pressure_residual: pressure.residual_norm,
            energy: energy.report,
        });
        u = transport.u_new;
        t = t_next;
        if step % setup.time.snapshot_every == 0 || t >= t_final {
            history.u.push(t, u.clone())?;
            history.p.push(pressure.p.clone());
            history.v.push(pressure.v.clone());
        }
    }
    history.energy = energy.report;
    Ok(history)
}

/// Final-state deviation of a fixed truncation level from the untruncated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub k: u32,
    pub sup_difference: f64,
    pub l2_difference: f64,
}

/// Runs `setup` once untruncated and once per level in `levels`.
pub fn truncation_study(setup: &SimulationSetup, levels: &[u32]) -> Result<Vec<TruncationRow>> {
    let mut reference = setup.clone();
    reference.truncation = Truncation::None;
    let base = run_simulation(&reference)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &k in levels {
        let mut s = setup.clone();
        s.truncation = Truncation::Fixed(k);
        let run = run_simulation(&s)?;
        rows.push(TruncationRow {
            k,
            sup_difference: run.final_u().sup_distance(base.final_u()),
            l2_difference: run.final_u().l2_distance(base.final_u()),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::five_spot;
    use crate::transport::{energy_monitor, EnergySample};

    fn setup(n: usize, law: ViscosityLaw, t_final: f64, step: TimeStep) -> SimulationSetup {
        let g = Grid2D::unit_square(n).unwrap();
        SimulationSetup {
            medium: MediumSpec::uniform(g, 0.2, 1.0).unwrap(),
            fluid: FluidSpec::new(1e-3, 1e-3, 1e-2, law).unwrap(),
            sources: five_spot(g, 1.0, 1.0 / 16.0, 1.0).unwrap(),
            u0: ScalarField::zeros(g),
            time: TimeSettings {
                t_final,
                step,
                snapshot_every: 1,
            },
            pressure: PressureOptions::default(),
            transport: TransportOptions::default(),
            picard: PicardOptions::default(),
            truncation: Truncation::Auto,
        }
    }

    fn quarter_power() -> ViscosityLaw {
        ViscosityLaw::QuarterPower {
            mu0: 1.0,
            mobility_ratio: 20.0,
        }
    }

    #[test]
    fn equilibrium_stays_constant() {
        let mut s = setup(8, quarter_power(), 0.05, TimeStep::Fixed(0.01));
        s.sources = SourceSpec::none(*s.grid());
        s.u0 = ScalarField::constant(*s.grid(), 0.3);
        let h = run_simulation(&s).unwrap();
        assert_eq!(h.steps.len(), 5);
        for (u, (p, v)) in h.u.fields().iter().zip(h.p.iter().zip(&h.v)) {
            assert!(u.values().iter().all(|&x| x == 0.3));
            assert_eq!(p.max_abs(), 0.0);
            assert_eq!(v.max_abs(), 0.0);
        }
        assert!(h.steps.iter().all(|s| s.picard.iterations == 1));
    }

    #[test]
    fn constant_viscosity_converges_in_two_iterations() {
        let s = setup(16, ViscosityLaw::Constant { mu0: 1.0 }, 0.05, TimeStep::Fixed(0.01));
        let h = run_simulation(&s).unwrap();
        for r in &h.steps {
            assert!(r.picard.iterations <= 2, "{:?}", r.picard);
            assert!(r.picard.converged);
        }
    }

    #[test]
    fn constant_viscosity_map_ignores_guess() {
        let s = setup(12, ViscosityLaw::Constant { mu0: 2.0 }, 0.1, TimeStep::Fixed(0.01));
        let u_old = ScalarField::zeros(*s.grid());
        let ctx = StepContext {
            medium: &s.medium,
            fluid: &s.fluid,
            sources: &s.sources,
            u_old: &u_old,
            dt: 0.01,
            pressure: s.pressure,
            transport: s.transport,
            truncation: s.truncation,
        };
        let first = picard_step(&u_old, &ctx).unwrap();
        let second = picard_step(&first.transport.u_new, &ctx).unwrap();
        assert!(second.transport.u_new.sup_distance(&first.transport.u_new) <= 10.0 * s.picard.tol);
    }

    #[test]
    fn fixed_point_is_reproduced_in_one_application() {
        let s = setup(12, quarter_power(), 0.1, TimeStep::Fixed(0.02));
        let u_old = ScalarField::zeros(*s.grid());
        let ctx = StepContext {
            medium: &s.medium,
            fluid: &s.fluid,
            sources: &s.sources,
            u_old: &u_old,
            dt: 0.02,
            pressure: s.pressure,
            transport: s.transport,
            truncation: s.truncation,
        };
        let solved = picard_solve(&ctx, &s.picard, None).unwrap();
        assert!(solved.state.converged);
        let again = picard_solve(&ctx, &s.picard, Some(&solved.output.transport.u_new)).unwrap();
        assert_eq!(again.state.iterations(), 1);
        assert!(again.state.residuals[0] <= s.picard.tol);
    }

    #[test]
    fn auto_truncation_is_inactive() {
        let s = setup(16, quarter_power(), 0.05, TimeStep::Fixed(0.01));
        let h = run_simulation(&s).unwrap();
        for (r, v) in h.steps.iter().zip(h.v.iter().skip(1)) {
            let k = r.picard.k_trunc.unwrap();
            assert!(k as f64 >= v.cell_velocities().magnitude().max().ceil());
        }
        let mut none = s.clone();
        none.truncation = Truncation::None;
        let h0 = run_simulation(&none).unwrap();
        assert_eq!(h.final_u(), h0.final_u());
    }

    #[test]
    fn small_truncation_changes_the_answer() {
        let mut s = setup(16, quarter_power(), 0.05, TimeStep::Fixed(0.01));
        s.fluid = FluidSpec::new(1e-3, 0.05, 0.5, quarter_power()).unwrap();
        let rows = truncation_study(&s, &[1]).unwrap();
        assert!(rows[0].sup_difference > 0.0);
    }

    #[test]
    fn running_energy_matches_monitor() {
        let s = setup(12, quarter_power(), 0.05, TimeStep::Fixed(0.01));
        let h = run_simulation(&s).unwrap();
        let samples: Vec<EnergySample<'_>> = h
            .times()
            .iter()
            .zip(h.u.fields().iter().zip(&h.v))
            .map(|(&time, (u, v))| EnergySample { time, u, v })
            .collect();
        let direct = energy_monitor(&samples, &s.medium).unwrap();
        assert!((direct.sup_mass - h.energy.sup_mass).abs() <= 1e-14 * direct.sup_mass.max(1.0));
        assert!((direct.dissipation - h.energy.dissipation).abs() <= 1e-12 * direct.dissipation.max(1.0));
    }

    #[test]
    fn fixed_steps_land_on_final_time() {
        let s = setup(8, quarter_power(), 0.1, TimeStep::Fixed(0.03));
        let h = run_simulation(&s).unwrap();
        let times = h.times();
        assert_eq!(*times.last().unwrap(), 0.1);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(h.steps.len(), 4);
    }

    #[test]
    fn lagged_cross_diffusion_still_converges() {
        let mut s = setup(12, quarter_power(), 0.04, TimeStep::Fixed(0.02));
        s.transport.cross_diffusion = CrossDiffusion::Lagged;
        s.fluid = FluidSpec::new(1e-3, 1e-3, 5e-2, quarter_power()).unwrap();
        let h = run_simulation(&s).unwrap();
        assert!(h.steps.iter().all(|r| r.picard.converged));
    }

    #[test]
    fn invalid_initial_data_names_hypothesis() {
        let mut s = setup(8, quarter_power(), 0.1, TimeStep::Fixed(0.01));
        s.u0 = ScalarField::constant(*s.grid(), 1.5);
        let err = run_simulation(&s).unwrap_err().to_string();
        assert!(err.contains("(H6)"), "{err}");
    }
}
