//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use miscible_core::coefficients::{dispersion_tensor, truncated_dispersion};
use miscible_core::config::{load_config, SimulationConfig};
use miscible_core::coupling::{run_simulation, SimulationHistory, SimulationSetup};
use miscible_core::mms::{mms_convergence_study, Study};
use miscible_core::ops::divergence;
use miscible_core::pressure::{solve_pressure, PressureOptions};
use miscible_core::regularity::{
    cylinder_oscillation, decay_exponent_fit, default_ladder, diagnose_point, fitting_ladder, maximal_function,
    sharp_function, Classification, DiagnosticInputs, DiagnosticSettings,
};
use miscible_core::snapshot::SnapshotFile;
use miscible_core::transport::{advance_concentration, CrossDiffusion, TransportOptions, TransportProblem};
use miscible_core::{
    FieldHistory, FluidSpec, Grid2D, MediumSpec, ScalarField, SourceSpec, SymTensor2, SymTensor2Field, ViscosityLaw,
};

const SEED: u64 = 20_240_611;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn fixture() -> SimulationConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/five_spot.cfg");
    load_config(&path).expect("fixture config loads")
}

fn five_spot(n: usize) -> (SimulationSetup, SimulationHistory) {
    let mut config = fixture();
    config.set_resolution(n);
    let setup = config.setup().expect("fixture setup");
    let history = run_simulation(&setup).expect("five-spot run");
    (setup, history)
}

/// The 32x32 fixture run shared by several criteria.
fn five_spot_32() -> &'static (SimulationSetup, SimulationHistory) {
    static RUN: OnceLock<(SimulationSetup, SimulationHistory)> = OnceLock::new();
    RUN.get_or_init(|| five_spot(32))
}

struct RandomStep {
    min_u: f64,
    max_u: f64,
    balance: f64,
    pressure_mean: f64,
    area: f64,
    conservation: f64,
}

/// Admissible random data: bounded porosity and permeability, valid
/// dispersion and viscosity, compatible sources, `u_old` and `u_hat` in
/// `[0, 1]`, and a velocity from the pressure equation.
fn random_step(rng: &mut ChaCha8Rng) -> RandomStep {
    let n = rng.gen_range(5..=12);
    let g = Grid2D::unit_square(n).unwrap();
    let cells = g.cell_count();
    let unit = |rng: &mut ChaCha8Rng| match rng.gen_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen::<f64>(),
    };
    let porosity = ScalarField::new(g, (0..cells).map(|_| rng.gen_range(0.05..0.5)).collect()).unwrap();
    let perm = SymTensor2Field::new(
        g,
        (0..cells)
            .map(|_| {
                let xx = rng.gen_range(0.2..5.0);
                let yy = rng.gen_range(0.2..5.0);
                let xy = rng.gen_range(-0.5..0.5) * (xx * yy as f64).sqrt();
                SymTensor2::new(xx, xy, yy)
            })
            .collect(),
    )
    .unwrap();
    let medium = MediumSpec::new(porosity, perm).unwrap();
    let a = 10f64.powf(rng.gen_range(-3.0..0.0));
    let law = if rng.gen_bool(0.3) {
        ViscosityLaw::Constant { mu0: rng.gen_range(0.5..2.0) }
    } else {
        ViscosityLaw::QuarterPower {
            mu0: rng.gen_range(0.5..2.0),
            mobility_ratio: rng.gen_range(1.0..50.0),
        }
    };
    let fluid = FluidSpec::new(10f64.powf(rng.gen_range(-4.0..-1.0)), a, a * rng.gen_range(1.0..20.0), law).unwrap();
    let density = |rng: &mut ChaCha8Rng, p: f64| -> ScalarField {
        ScalarField::new(
            g,
            (0..cells)
                .map(|_| if rng.gen_bool(p) { rng.gen_range(0.0..20.0) } else { 0.0 })
                .collect(),
        )
        .unwrap()
    };
    let q_inject = density(rng, 0.2);
    let q_produce = density(rng, 0.2);
    let u_hat = ScalarField::new(g, (0..cells).map(|_| unit(rng)).collect()).unwrap();
    let sources = SourceSpec::new(q_inject, q_produce, u_hat).unwrap();
    let u_old = ScalarField::new(g, (0..cells).map(|_| unit(rng)).collect()).unwrap();
    let opts = PressureOptions::default();
    let pressure = solve_pressure(&u_old, &medium, &fluid, &sources, &opts).unwrap();
    let conservation = divergence(&pressure.v).sup_distance(&sources.net()) / opts.tol;
    let problem = TransportProblem {
        medium: &medium,
        fluid: &fluid,
        sources: &sources,
        velocity: &pressure.v,
        dt: 10f64.powf(rng.gen_range(-3.0..0.0)),
        k_trunc: if rng.gen_bool(0.5) { Some(rng.gen_range(1..5)) } else { None },
    };
    let transport = TransportOptions {
        cross_diffusion: [CrossDiffusion::Off, CrossDiffusion::Deferred, CrossDiffusion::Lagged][rng.gen_range(0..3)],
        ..Default::default()
    };
    let step = advance_concentration(&u_old, &problem, &transport).unwrap();
    RandomStep {
        min_u: step.u_new.min(),
        max_u: step.u_new.max(),
        balance: step.balance_defect().abs() / step.mass_scale(),
        pressure_mean: pressure.p.mean().abs(),
        area: g.area(),
        conservation,
    }
}

fn random_steps() -> &'static Vec<RandomStep> {
    static STEPS: OnceLock<Vec<RandomStep>> = OnceLock::new();
    STEPS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        (0..1000).map(|_| random_step(&mut rng)).collect()
    })
}

fn criterion_1() -> Outcome {
    let steps = random_steps();
    let lo = steps.iter().map(|s| s.min_u).fold(f64::INFINITY, f64::min);
    let hi = steps.iter().map(|s| s.max_u).fold(f64::NEG_INFINITY, f64::max);
    let (_, history) = five_spot_32();
    let run_lo = history.steps.iter().map(|s| s.min_u).fold(f64::INFINITY, f64::min);
    let run_hi = history.steps.iter().map(|s| s.max_u).fold(f64::NEG_INFINITY, f64::max);
    let ok = |l: f64, h: f64| l >= -1e-12 && h <= 1.0 + 1e-12;
    check(
        steps.len() == 1000 && history.steps.len() == 50 && ok(lo, hi) && ok(run_lo, run_hi),
        format!(
            "1000 random steps u in [{lo:.3e}, {hi:.9}]; five-spot 32x32 u in [{run_lo:.3e}, {run_hi:.9}]"
        ),
    )
}

fn criterion_2() -> Outcome {
    let worst_random = random_steps().iter().map(|s| s.balance).fold(0.0, f64::max);
    let (_, history) = five_spot_32();
    let worst_run = history
        .steps
        .iter()
        .map(|s| {
            let scale = s.mass_before.abs().max(s.mass_after.abs()).max(s.injected).max(s.produced);
            s.balance_defect.abs() / scale
        })
        .fold(0.0, f64::max);
    let cumulative = history.cumulative_balance().relative_defect();
    check(
        worst_random <= 1e-12 && worst_run <= 1e-12 && cumulative <= 1e-10,
        format!(
            "per-step relative defect {:.3e} (random), {:.3e} (five-spot); cumulative {cumulative:.3e}",
            worst_random, worst_run
        ),
    )
}

fn criterion_3() -> Outcome {
    let steps = random_steps();
    let mean_ratio = steps.iter().map(|s| s.pressure_mean / s.area).fold(0.0, f64::max);
    let cons = steps.iter().map(|s| s.conservation).fold(0.0, f64::max);
    let (setup, history) = five_spot_32();
    let area = setup.grid().area();
    let run_mean = history.p.iter().map(|p| p.mean().abs() / area).fold(0.0, f64::max);
    let net = setup.sources.net();
    let run_cons = history
        .v
        .iter()
        .map(|v| divergence(v).sup_distance(&net))
        .chain(history.steps.iter().map(|s| s.pressure_residual))
        .fold(0.0, f64::max)
        / setup.pressure.tol;
    check(
        mean_ratio <= 1e-10 && run_mean <= 1e-10 && cons <= 10.0 && run_cons <= 10.0,
        format!(
            "|mean p|/|Omega| <= {:.3e}; max |div v - q| / tol = {:.3e} over {} solves",
            mean_ratio.max(run_mean),
            cons.max(run_cons),
            steps.len() + history.v.len() + history.steps.len()
        ),
    )
}

/// Eigenvalues of a symmetric 2x2 matrix, larger last.
fn eig(t: SymTensor2) -> (f64, f64) {
    let mean = 0.5 * (t.xx + t.yy);
    let rad = (0.25 * (t.xx - t.yy).powi(2) + t.xy * t.xy).sqrt();
    (mean - rad, mean + rad)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst: f64 = 0.0;
    let mut exact_below = true;
    let mut exact_count = 0usize;
    for _ in 0..100_000 {
        let a = 10f64.powf(rng.gen_range(-4.0..1.0));
        let fluid = FluidSpec::new(
            10f64.powf(rng.gen_range(-6.0..1.0)),
            a,
            a * 10f64.powf(rng.gen_range(0.0..3.0)),
            ViscosityLaw::Constant { mu0: 1.0 },
        )
        .unwrap();
        let speed = 10f64.powf(rng.gen_range(-6.0..3.0));
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let v = [speed * theta.cos(), speed * theta.sin()];
        let k: u32 = rng.gen_range(1..200);
        let d = truncated_dispersion(v, k, &fluid);
        let s = v[0].hypot(v[1]).min(k as f64);
        let (lo, hi) = eig(d);
        let (t, l) = (fluid.m + fluid.a * s, fluid.m + fluid.b * s);
        worst = worst.max((t - lo) / t).max((hi - l) / l).max((lo - t).abs() / t).max((hi - l).abs() / l);
        if v[0].hypot(v[1]) <= k as f64 {
            exact_count += 1;
            exact_below &= d == dispersion_tensor(v, &fluid);
        }
    }
    check(
        worst <= 1e-12 && exact_below && exact_count > 0,
        format!("100000 samples, worst relative eigenvalue error {worst:.3e}; D_k == D on {exact_count} samples with |v| <= k"),
    )
}

fn criterion_5() -> Outcome {
    let grids = [16, 32, 64];
    let p = mms_convergence_study(Study::Pressure, &grids).unwrap();
    let t = mms_convergence_study(Study::Transport, &grids).unwrap();
    let orders = |table: &miscible_core::mms::MmsTable| table.rows.iter().filter_map(|r| r.order).collect::<Vec<_>>();
    let (po, to) = (orders(&p), orders(&t));
    let pass = po.len() == 2
        && to.len() == 2
        && po.iter().all(|o| (1.8..=2.2).contains(o))
        && to.iter().all(|o| (0.8..=1.5).contains(o));
    check(
        pass,
        format!("pressure orders {:.3}, {:.3}; transport orders {:.3}, {:.3}", po[0], po[1], to[0], to[1]),
    )
}

fn criterion_6() -> Outcome {
    let e32 = five_spot_32().1.energy.total();
    let e64 = five_spot(64).1.energy.total();
    let variation = (e64 - e32).abs() / e32.max(e64);
    check(
        variation <= 0.25,
        format!("energy {e32:.6} (32x32), {e64:.6} (64x64), variation {:.1}%", 100.0 * variation),
    )
}

/// Cells whose centres lie within `r` of the centre of cell `c`, in index order.
fn brute_ball(g: &Grid2D, c: usize, r: f64) -> Vec<usize> {
    let (i, j) = g.coords(c);
    let [x, y] = g.cell_center(i, j);
    (0..g.cell_count())
        .filter(|&m| {
            let (a, b) = g.coords(m);
            let [xm, ym] = g.cell_center(a, b);
            (xm - x).powi(2) + (ym - y).powi(2) <= r * r * (1.0 + 1e-9)
        })
        .collect()
}

fn brute_maximal(f: &ScalarField, ladder: &[f64]) -> Vec<f64> {
    let g = *f.grid();
    let v = f.values();
    (0..g.cell_count())
        .map(|c| {
            let mut best = v[c].abs();
            for &r in ladder {
                let ball = brute_ball(&g, c, r);
                let mut sum = 0.0;
                for &m in &ball {
                    sum += v[m].abs();
                }
                best = best.max(sum / ball.len() as f64);
            }
            best
        })
        .collect()
}

fn brute_sharp(f: &ScalarField, ladder: &[f64]) -> Vec<f64> {
    let g = *f.grid();
    let v = f.values();
    let mut out = vec![0.0f64; g.cell_count()];
    for &r in ladder {
        for y in 0..g.cell_count() {
            let ball = brute_ball(&g, y, r);
            let mut sum = 0.0;
            for &m in &ball {
                sum += v[m];
            }
            let mean = sum / ball.len() as f64;
            let mut dev = 0.0;
            for &m in &ball {
                dev += (v[m] - mean).abs();
            }
            let osc = dev / ball.len() as f64;
            for &x in &ball {
                out[x] = out[x].max(osc);
            }
        }
    }
    out
}

fn random_field(rng: &mut ChaCha8Rng, g: Grid2D, kind: usize) -> ScalarField {
    let values = (0..g.cell_count())
        .map(|_| match kind % 4 {
            0 => rng.gen::<f64>(),
            1 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-3..4)),
            2 => rng.gen_range(-3..4) as f64,
            _ => {
                if rng.gen_bool(0.05) {
                    rng.gen_range(10.0..100.0)
                } else {
                    0.0
                }
            }
        })
        .collect();
    ScalarField::new(g, values).unwrap()
}

fn criterion_7() -> Outcome {
    let g = Grid2D::unit_square(16).unwrap();
    let ladder = default_ladder(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let fields = 24;
    let mut mismatches = 0usize;
    for k in 0..fields {
        let f = random_field(&mut rng, g, k);
        if maximal_function(&f).values() != brute_maximal(&f, &ladder).as_slice() {
            mismatches += 1;
        }
        if sharp_function(&f).values() != brute_sharp(&f, &ladder).as_slice() {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("{fields} random 16x16 fields, {} radii, {mismatches} mismatching transforms", ladder.len()),
    )
}

/// `u = rho^alpha (1 + sin(theta) / 4) + (t0 - t) / 5` about the centre of
/// cell `(32, 32)` on a 64x64 grid, sampled every 0.005 up to `t0 = 0.5`.
fn holder_history(alpha: f64) -> (FieldHistory, (usize, usize)) {
    let g = Grid2D::unit_square(64).unwrap();
    let x0 = (32, 32);
    let [cx, cy] = g.cell_center(x0.0, x0.1);
    let mut history = FieldHistory::new();
    for step in 0..=100 {
        let t = 0.005 * step as f64;
        let u = ScalarField::from_fn(g, |x, y| {
            let (dx, dy) = (x - cx, y - cy);
            let rho = dx.hypot(dy);
            let sin = if rho > 0.0 { dy / rho } else { 0.0 };
            rho.powf(alpha) * (1.0 + 0.25 * sin) + 0.2 * (0.5 - t)
        });
        history.push(t, u).unwrap();
    }
    (history, x0)
}

fn criterion_8() -> Outcome {
    let mut fitted = Vec::new();
    let mut pass = true;
    for alpha in [0.25, 0.5, 0.75] {
        let (history, x0) = holder_history(alpha);
        let g = *history.grid().unwrap();
        let ladder = fitting_ladder(&g, x0);
        let series = cylinder_oscillation(&history, x0, 0.5, &ladder).unwrap();
        let fit = decay_exponent_fit(&series);
        let a = fit.alpha.unwrap_or(f64::NAN);
        pass &= (a - alpha).abs() <= 0.05;
        fitted.push(format!("{alpha} -> {a:.4}"));
    }
    check(pass, format!("fitted exponents {}", fitted.join(", ")))
}

struct Triple {
    u: FieldHistory,
    p: FieldHistory,
    medium: MediumSpec,
    fluid: FluidSpec,
    sources: SourceSpec,
    cell: (usize, usize),
}

impl Triple {
    fn classify(&self) -> Classification {
        let inputs = DiagnosticInputs {
            u: &self.u,
            p: &self.p,
            medium: &self.medium,
            fluid: &self.fluid,
            sources: &self.sources,
        };
        let last = self.u.len() - 1;
        let r = diagnose_point(&inputs, self.cell, last, &DiagnosticSettings::default()).unwrap();
        r.verdict.classification
    }
}

fn triple(g: Grid2D, medium: MediumSpec, u: impl Fn(f64, f64, f64) -> f64, p: impl Fn(f64, f64) -> f64) -> Triple {
    let fluid = FluidSpec::new(
        0.01,
        0.05,
        0.5,
        ViscosityLaw::QuarterPower {
            mu0: 1.0,
            mobility_ratio: 20.0,
        },
    )
    .unwrap();
    let (mut uh, mut ph) = (FieldHistory::new(), FieldHistory::new());
    for step in 0..=10 {
        let t = 0.01 * step as f64;
        uh.push(t, ScalarField::from_fn(g, |x, y| u(x, y, t))).unwrap();
        ph.push(t, ScalarField::from_fn(g, &p)).unwrap();
    }
    Triple {
        u: uh,
        p: ph,
        medium,
        fluid,
        sources: SourceSpec::none(g),
        cell: (g.nx() / 2, g.ny() / 2),
    }
}

fn criterion_9() -> Outcome {
    let g = Grid2D::unit_square(64).unwrap();
    let uniform = MediumSpec::uniform(g, 0.2, 1.0).unwrap();
    let smooth = triple(
        g,
        uniform.clone(),
        |x, y, t| 0.5 + 0.2 * (x - 0.5) + 0.1 * (y - 0.5) + 0.1 * t,
        |x, y| x * x - y * y + 2.0 * x,
    );
    // |grad p| ~ rho^(-0.6) about the centre of cell (32, 32)
    let c = 32.5 / 64.0;
    let blowup = triple(
        g,
        uniform,
        |_, _, _| 0.5,
        move |x, y| ((x - c).powi(2) + (y - c).powi(2)).powf(0.2) / 0.4,
    );
    let jump = SymTensor2Field::from_fn(g, |i, _| SymTensor2::isotropic(if i < 32 { 1.0 } else { 10.0 })).unwrap();
    let layered = MediumSpec::new(ScalarField::constant(g, 0.2), jump).unwrap();
    let discontinuous = triple(
        g,
        layered,
        |_, _, _| 0.5,
        |x, _| if x < 0.5 { 10.0 * (x - 0.5) } else { x - 0.5 },
    );
    let verdicts = [smooth.classify(), blowup.classify(), discontinuous.classify()];
    check(
        verdicts[0] == Classification::Regular
            && verdicts[1] == Classification::Singular
            && verdicts[2] != Classification::Regular,
        format!(
            "smooth: {}, gradient blowup: {}, discontinuous K: {}",
            verdicts[0], verdicts[1], verdicts[2]
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut config = fixture();
    config.set_resolution(16);
    config.t_final = 0.1;
    config.viscosity = ViscosityLaw::Constant { mu0: 1.0 };
    let history = run_simulation(&config.setup().unwrap()).unwrap();
    let constant_max = history.steps.iter().map(|s| s.picard.iterations).max().unwrap_or(usize::MAX);
    let constant_ok = history.steps.iter().all(|s| s.picard.converged) && constant_max <= 2;

    let (_, run) = five_spot_32();
    let all_converged = run.steps.iter().all(|s| s.picard.converged);
    let finals: Vec<f64> = run
        .steps
        .iter()
        .filter_map(|s| s.picard.contraction_ratios.last().copied())
        .collect();
    let worst_final = finals.iter().copied().fold(0.0, f64::max);
    let max_iter = run.steps.iter().map(|s| s.picard.iterations).max().unwrap_or(0);
    check(
        constant_ok && all_converged && finals.len() == run.steps.len() && worst_final < 1.0,
        format!(
            "constant viscosity: at most {constant_max} iterations; M = 20: all {} steps converged, at most {max_iter} iterations, largest final contraction ratio {worst_final:.3}",
            run.steps.len()
        ),
    )
}

fn rendered(history: &SimulationHistory) -> Vec<String> {
    let mut out = Vec::new();
    for (k, &t) in history.times().iter().enumerate() {
        out.push(SnapshotFile::from_scalar("u", t, &history.u.fields()[k]).render());
        out.push(SnapshotFile::from_scalar("p", t, &history.p[k]).render());
        out.extend(SnapshotFile::from_flux("v", t, &history.v[k]).iter().map(SnapshotFile::render));
    }
    out
}

fn criterion_11() -> Outcome {
    let mut config = fixture();
    config.set_resolution(16);
    config.t_final = 0.2;
    let a = rendered(&run_simulation(&config.setup().unwrap()).unwrap());
    let b = rendered(&run_simulation(&config.setup().unwrap()).unwrap());
    let identical = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    check(
        a.len() == b.len() && identical == a.len(),
        format!("seed {}: {identical} of {} snapshot files bit-identical", config.seed, a.len()),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "maximum principle", criterion_1, Duration::from_secs(120)),
        (2, "mass balance", criterion_2, Duration::from_secs(60)),
        (3, "zero-mean pressure and conservation", criterion_3, Duration::MAX),
        (4, "dispersion spectral bounds", criterion_4, Duration::MAX),
        (5, "manufactured-solution orders", criterion_5, Duration::from_secs(300)),
        (6, "energy boundedness", criterion_6, Duration::MAX),
        (7, "maximal/sharp oracle equivalence", criterion_7, Duration::from_secs(60)),
        (8, "decay-exponent recovery", criterion_8, Duration::MAX),
        (9, "classifier sanity", criterion_9, Duration::MAX),
        (10, "Picard fixed-point behaviour", criterion_10, Duration::MAX),
        (11, "determinism", criterion_11, Duration::MAX),
    ];
    let results: Vec<(Outcome, Duration)> = std::thread::scope(|scope| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(_, _, run, _)| {
                scope.spawn(move || {
                    let start = Instant::now();
                    let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
                        let msg = e
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_default();
                        check(false, format!("panicked: {msg}"))
                    });
                    (outcome, start.elapsed())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for ((id, name, _, budget), (outcome, elapsed)) in criteria.iter().zip(results) {
        let in_time = elapsed <= *budget;
        let passed = outcome.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget_note = if in_time { String::new() } else { format!(" (over the {}s budget)", budget.as_secs()) };
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s{budget_note}]",
            if passed { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
