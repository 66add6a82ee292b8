//! Invariant monitors over a simulation history or a set of snapshots.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coefficients::{dispersion_tensor, truncated_dispersion, FluidSpec, SourceSpec};
use crate::coupling::{run_simulation, SimulationHistory, SimulationSetup, StepRecord, Truncation};
use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField, SymTensor2};
use crate::ops::divergence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    MaxPrinciple,
    MassBalance,
    ZeroMeanPressure,
    Conservation,
    DispersionBounds,
    SourceCompatibility,
}

impl Invariant {
    pub const ALL: [Invariant; 6] = [
        Invariant::MaxPrinciple,
        Invariant::MassBalance,
        Invariant::ZeroMeanPressure,
        Invariant::Conservation,
        Invariant::DispersionBounds,
        Invariant::SourceCompatibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::MaxPrinciple => "max_principle",
            Invariant::MassBalance => "mass_balance",
            Invariant::ZeroMeanPressure => "zero_mean_pressure",
            Invariant::Conservation => "conservation",
            Invariant::DispersionBounds => "dispersion_bounds",
            Invariant::SourceCompatibility => "source_compatibility",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Invariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Invariant::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown invariant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub enabled: Vec<Invariant>,
    /// Allowed excursion of the concentration outside `[0, 1]`.
    pub bound_slack: f64,
    /// Per-step relative mass balance tolerance.
    pub step_balance_tol: f64,
    /// Relative tolerance on the balance accumulated over the run.
    pub cumulative_balance_tol: f64,
    /// `|mean p| <= mean_tol * |Omega|`.
    pub mean_tol: f64,
    /// Cellwise `|div v - (q_I - q_P)|` limit; `None` uses ten times the
    /// pressure solver tolerance.
    pub conservation_tol: Option<f64>,
    pub dispersion_tol: f64,
    pub compatibility_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            enabled: Invariant::ALL.to_vec(),
            bound_slack: 1e-12,
            step_balance_tol: 1e-12,
            cumulative_balance_tol: 1e-10,
            mean_tol: 1e-10,
            conservation_tol: None,
            dispersion_tol: 1e-12,
            compatibility_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    /// Not enough data to evaluate.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub invariant: Invariant,
    pub status: Status,
    /// Largest violation measure found (same units as `limit`).
    pub worst: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Failed)
    }

    pub fn violations(&self) -> Vec<Invariant> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Failed)
            .map(|c| c.invariant)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                Status::Passed => "PASS",
                Status::Failed => "FAIL",
                Status::Skipped => "SKIP",
            };
            out.push_str(&format!(
                "{tag} {:<22} worst {:.3e} limit {:.3e}  {}\n",
                c.invariant.name(),
                c.worst,
                c.limit,
                c.detail
            ));
        }
        out
    }
}

/// Data the monitors inspect. Fields that are unavailable are left empty.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub u: Vec<ScalarField>,
    pub p: Vec<ScalarField>,
    pub v: Vec<FluxField>,
    pub steps: Vec<StepRecord>,
    pub initial_mass: Option<f64>,
    pub sources: Option<SourceSpec>,
    pub fluid: Option<FluidSpec>,
    pub truncation: Truncation,
    pub pressure_tol: Option<f64>,
    /// Per-snapshot cell tensors `D_k(v)`; computed from `v` when empty.
    pub tensors: Vec<Vec<SymTensor2>>,
}

impl Evidence {
    pub fn from_history(history: &SimulationHistory, setup: &SimulationSetup) -> Self {
        let mut e = Self {
            u: history.u.fields().to_vec(),
            p: history.p.clone(),
            v: history.v.clone(),
            steps: history.steps.clone(),
            initial_mass: Some(history.initial_mass),
            sources: Some(setup.sources.clone()),
            fluid: Some(setup.fluid),
            truncation: setup.truncation,
            pressure_tol: Some(setup.pressure.tol),
            tensors: Vec::new(),
        };
        e.fill_tensors();
        e
    }

    /// Evaluates the dispersion tensor on every stored velocity.
    pub fn fill_tensors(&mut self) {
        let Some(fluid) = self.fluid else { return };
        self.tensors = self
            .v
            .iter()
            .map(|v| {
                let cells = v.cell_velocities();
                let k = match self.truncation {
                    Truncation::None => None,
                    Truncation::Fixed(k) => Some(k),
                    Truncation::Auto => Some((cells.magnitude().max().ceil() as u32).max(1)),
                };
                cells
                    .values()
                    .iter()
                    .map(|&vc| match k {
                        Some(k) => truncated_dispersion(vc, k, &fluid),
                        None => dispersion_tensor(vc, &fluid),
                    })
                    .collect()
            })
            .collect();
    }

    /// Corrupts the data so that `target` must fail. Used to prove that each
    /// monitor can detect a violation.
    pub fn inject_fault(&mut self, target: Invariant) {
        match target {
            Invariant::MaxPrinciple => {
                if let Some(u) = self.u.last_mut() {
                    u.values_mut()[0] = 1.0 + 1e-6;
                }
                if let Some(s) = self.steps.last_mut() {
                    s.max_u = 1.0 + 1e-6;
                }
            }
            Invariant::MassBalance => {
                if let Some(s) = self.steps.last_mut() {
                    let bump = 1e-6 * s.mass_after.abs().max(1.0);
                    s.mass_after += bump;
                    s.balance_defect += bump;
                }
            }
            Invariant::ZeroMeanPressure => {
                if let Some(p) = self.p.last_mut() {
                    p.values_mut().iter_mut().for_each(|x| *x += 1e-6);
                }
            }
            Invariant::Conservation => {
                if let Some(v) = self.v.last_mut() {
                    let g = *v.grid();
                    let mut xf = v.x_faces().to_vec();
                    xf[g.x_face(1, 0)] += 1e-6;
                    *v = FluxField::new(g, xf, v.y_faces().to_vec()).expect("finite");
                }
            }
            Invariant::DispersionBounds => {
                if let Some(t) = self.tensors.last_mut() {
                    t.iter_mut().for_each(|d| *d = d.scale(0.5));
                }
            }
            Invariant::SourceCompatibility => {
                if let Some(s) = self.sources.as_mut() {
                    s.q_produce = s.q_produce.map(|q| q * 1.01);
                    if s.q_produce.max() == 0.0 {
                        s.q_produce.values_mut()[0] = 1.0;
                    }
                }
            }
        }
    }
}

fn outcome(invariant: Invariant, worst: f64, limit: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        invariant,
        status: if worst <= limit { Status::Passed } else { Status::Failed },
        worst,
        limit,
        detail,
    }
}

fn skipped(invariant: Invariant, why: &str) -> CheckOutcome {
    CheckOutcome {
        invariant,
        status: Status::Skipped,
        worst: 0.0,
        limit: 0.0,
        detail: why.to_string(),
    }
}

fn check_max_principle(e: &Evidence, o: &VerifyOptions) -> CheckOutcome {
    if e.u.is_empty() && e.steps.is_empty() {
        return skipped(Invariant::MaxPrinciple, "no concentration data");
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for u in &e.u {
        lo = lo.min(u.min());
        hi = hi.max(u.max());
    }
    for s in &e.steps {
        lo = lo.min(s.min_u);
        hi = hi.max(s.max_u);
    }
    let excursion = (-lo).max(hi - 1.0).max(0.0);
    outcome(
        Invariant::MaxPrinciple,
        excursion,
        o.bound_slack,
        format!("u in [{lo:.15e}, {hi:.15e}]"),
    )
}

fn check_mass_balance(e: &Evidence, o: &VerifyOptions) -> CheckOutcome {
    if e.steps.is_empty() {
        return skipped(Invariant::MassBalance, "no step records");
    }
    let mut worst: f64 = 0.0;
    for s in &e.steps {
        let scale = s
            .mass_before
            .abs()
            .max(s.mass_after.abs())
            .max(s.injected.abs())
            .max(s.produced.abs());
        if scale > 0.0 {
            worst = worst.max(s.balance_defect.abs() / scale);
        }
    }
    // compare both relative measures against their own tolerances
    let mut cumulative = 0.0;
    if let Some(m0) = e.initial_mass {
        let injected: f64 = e.steps.iter().map(|s| s.injected).sum();
        let produced: f64 = e.steps.iter().map(|s| s.produced).sum();
        let m1 = e.steps.last().map_or(m0, |s| s.mass_after);
        let scale = injected.abs().max(produced.abs()).max(m0.abs()).max(m1.abs());
        if scale > 0.0 {
            cumulative = (injected - produced - (m1 - m0)).abs() / scale;
        }
    }
    let ratio = (worst / o.step_balance_tol).max(cumulative / o.cumulative_balance_tol);
    let mut c = outcome(
        Invariant::MassBalance,
        worst.max(cumulative * o.step_balance_tol / o.cumulative_balance_tol),
        o.step_balance_tol,
        format!("worst step {worst:.3e} (limit {:.0e}), cumulative {cumulative:.3e} (limit {:.0e})", o.step_balance_tol, o.cumulative_balance_tol),
    );
    c.status = if ratio <= 1.0 { Status::Passed } else { Status::Failed };
    c
}

fn check_zero_mean(e: &Evidence, o: &VerifyOptions) -> CheckOutcome {
    if e.p.is_empty() {
        return skipped(Invariant::ZeroMeanPressure, "no pressure data");
    }
    let area = e.p[0].grid().area();
    let worst = e.p.iter().map(|p| p.mean().abs()).fold(0.0, f64::max);
    outcome(
        Invariant::ZeroMeanPressure,
        worst,
        o.mean_tol * area,
        format!("largest |mean p| over {} snapshots", e.p.len()),
    )
}

fn check_conservation(e: &Evidence, o: &VerifyOptions) -> CheckOutcome {
    let (Some(sources), false) = (e.sources.as_ref(), e.v.is_empty()) else {
        return skipped(Invariant::Conservation, "needs velocities and sources");
    };
    let Some(limit) = o.conservation_tol.or(e.pressure_tol.map(|t| 10.0 * t)) else {
        return skipped(Invariant::Conservation, "pressure tolerance unknown");
    };
    let net = sources.net();
    let mut worst = e.v.iter().map(|v| divergence(v).sup_distance(&net)).fold(0.0, f64::max);
    for s in &e.steps {
        worst = worst.max(s.pressure_residual);
    }
    outcome(
        Invariant::Conservation,
        worst,
        limit,
        "max cellwise |div v - (q_I - q_P)|".into(),
    )
}

fn check_dispersion(e: &Evidence, o: &VerifyOptions) -> CheckOutcome {
    let Some(fluid) = e.fluid else {
        return skipped(Invariant::DispersionBounds, "fluid parameters unknown");
    };
    if e.tensors.is_empty() || e.tensors.len() != e.v.len() {
        return skipped(Invariant::DispersionBounds, "no tensors evaluated");
    }
    let mut worst: f64 = 0.0;
    for (v, tensors) in e.v.iter().zip(&e.tensors) {
        let cells = v.cell_velocities();
        let k = match e.truncation {
            Truncation::None => f64::INFINITY,
            Truncation::Fixed(k) => k as f64,
            Truncation::Auto => (cells.magnitude().max().ceil()).max(1.0),
        };
        for (vc, d) in cells.values().iter().zip(tensors) {
            let s = vc[0].hypot(vc[1]).min(k);
            let lower = fluid.m + fluid.a * s;
            let upper = fluid.m + fluid.b * s;
            let [l0, l1] = d.eigenvalues();
            worst = worst.max((lower - l0) / lower).max((l1 - upper) / upper);
        }
    }
    outcome(
        Invariant::DispersionBounds,
        worst.max(0.0),
        o.dispersion_tol,
        "relative violation of (m + a|v|) <= eig D <= (m + b|v|)".into(),
    )
}

fn check_sources(e: &Evidence, o: &VerifyOptions) -> CheckOutcome {
    let Some(s) = e.sources.as_ref() else {
        return skipped(Invariant::SourceCompatibility, "no source data");
    };
    let mut worst = s.imbalance();
    let (lo, hi) = (s.u_hat.min(), s.u_hat.max());
    if lo < 0.0 || hi > 1.0 {
        worst = worst.max((-lo).max(hi - 1.0));
    }
    outcome(
        Invariant::SourceCompatibility,
        worst,
        o.compatibility_tol,
        format!("relative |int(q_I - q_P)|, injected concentration in [{lo}, {hi}]"),
    )
}

pub fn verify_evidence(e: &Evidence, o: &VerifyOptions) -> VerifyReport {
    let checks = Invariant::ALL
        .into_iter()
        .filter(|i| o.enabled.contains(i))
        .map(|i| match i {
            Invariant::MaxPrinciple => check_max_principle(e, o),
            Invariant::MassBalance => check_mass_balance(e, o),
            Invariant::ZeroMeanPressure => check_zero_mean(e, o),
            Invariant::Conservation => check_conservation(e, o),
            Invariant::DispersionBounds => check_dispersion(e, o),
            Invariant::SourceCompatibility => check_sources(e, o),
        })
        .collect();
    VerifyReport { checks }
}

pub fn verify_history(history: &SimulationHistory, setup: &SimulationSetup, o: &VerifyOptions) -> VerifyReport {
    verify_evidence(&Evidence::from_history(history, setup), o)
}

/// Runs the simulation and checks it, optionally corrupting one invariant's
/// data first.
pub fn verify_setup(setup: &SimulationSetup, o: &VerifyOptions, fault: Option<Invariant>) -> Result<VerifyReport> {
    let history = run_simulation(setup)?;
    let mut evidence = Evidence::from_history(&history, setup);
    if let Some(f) = fault {
        evidence.inject_fault(f);
    }
    Ok(verify_evidence(&evidence, o))
}
