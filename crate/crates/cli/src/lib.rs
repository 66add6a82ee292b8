//! Command-line entry points: `run`, `verify`, `mms` and `diagnose`.
//!
//! Exit codes: 0 success, 1 invariant violation or solver failure, 2 usage
//! or input error.

pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use miscible_core::config::{load_config, parse_list, PointSelector, SimulationConfig};
use miscible_core::coupling::{run_simulation, SimulationHistory};
use miscible_core::mms::{mms_convergence_study, Study};
use miscible_core::regularity::{diagnose_point, DiagnosticInputs, RegularityReport};
use miscible_core::verify::{verify_evidence, Evidence, Invariant, VerifyOptions};
use miscible_core::{Error, FieldHistory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "miscible", version, about = "Miscible displacement in porous media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation and write snapshots and monitors.
    Run(RunArgs),
    /// Check the invariant suite on a fresh run or on a snapshot directory.
    Verify(VerifyArgs),
    /// Manufactured-solution convergence study.
    Mms(MmsArgs),
    /// Local regularity diagnostics at selected space-time points.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct Overrides {
    /// Cells per side, keeping the physical extent.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Final time.
    #[arg(long, value_name = "T")]
    tfinal: Option<f64>,
    /// Fail when a Picard solve does not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Directory written by `run`; without it the configured run is executed.
    #[arg(value_name = "SNAPSHOT_DIR")]
    snapshots: Option<PathBuf>,
    #[arg(long, value_name = "FILE", required_unless_present = "snapshots")]
    config: Option<PathBuf>,
    /// Restrict to these invariants (repeatable).
    #[arg(long = "check", value_name = "NAME")]
    checks: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_name = "NAME", hide = true)]
    inject_fault: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    Pressure,
    Transport,
    Both,
}

#[derive(Debug, Args)]
struct MmsArgs {
    #[arg(long, value_enum, default_value = "both")]
    study: StudyArg,
    /// Comma-separated list of cells per side.
    #[arg(long, value_name = "N,N,...", default_value = "16,32,64")]
    grid: String,
    /// Write the tables as JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// `i,j,last` or `i,j,<snapshot index>` (repeatable).
    #[arg(long = "point", value_name = "I,J,T")]
    points: Vec<String>,
    /// Comma-separated radii.
    #[arg(long, value_name = "R,R,...")]
    ladder: Option<String>,
    /// Directory for `diagnose.json`.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

/// Failure of a command, tagged by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Violation(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Violation(_) => EXIT_VIOLATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Violation(m) => m,
        }
    }
}

/// Errors raised while reading inputs are usage errors.
fn input(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Errors raised while computing: solver breakdowns and bound violations
/// are invariant failures, anything else is a bad request.
fn compute(e: Error) -> Failure {
    match e {
        Error::NotConverged { .. } | Error::Hypothesis { .. } => Failure::Violation(e.to_string()),
        other => Failure::Usage(other.to_string()),
    }
}

fn load(path: &Path, o: &Overrides) -> Result<SimulationConfig, Failure> {
    let mut config = load_config(path).map_err(input)?;
    if let Some(n) = o.grid {
        if n == 0 {
            return Err(Failure::Usage("--grid must be positive".into()));
        }
        config.set_resolution(n);
    }
    if let Some(t) = o.tfinal {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Usage(format!("--tfinal must be positive, got {t}")));
        }
        config.t_final = t;
    }
    if o.strict {
        config.set_strict(true);
    }
    Ok(config)
}

fn simulate(config: &SimulationConfig) -> Result<(miscible_core::coupling::SimulationSetup, SimulationHistory), Failure> {
    let setup = config.setup().map_err(input)?;
    let history = run_simulation(&setup).map_err(compute)?;
    Ok((setup, history))
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let config = load(&a.config, &a.overrides)?;
    let (_, history) = simulate(&config)?;
    let written = output::write_run(&a.out, &history, config.seed).map_err(input)?;
    let balance = history.cumulative_balance();
    println!(
        "{} steps, {} snapshots, {} files in {}",
        history.steps.len(),
        history.times().len(),
        written.len(),
        a.out.display()
    );
    println!(
        "final u in [{:.6e}, {:.6e}], relative balance defect {:.3e}, energy {:.6e}",
        history.final_u().min(),
        history.final_u().max(),
        balance.relative_defect(),
        history.energy.total()
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let mut opts = VerifyOptions::default();
    if !a.checks.is_empty() {
        opts.enabled = a
            .checks
            .iter()
            .map(|s| s.parse::<Invariant>())
            .collect::<miscible_core::Result<_>>()
            .map_err(input)?;
    }
    let fault = a
        .inject_fault
        .as_deref()
        .map(str::parse::<Invariant>)
        .transpose()
        .map_err(input)?;
    let config = a.config.as_deref().map(|c| load(c, &a.overrides)).transpose()?;
    let mut evidence = match (&a.snapshots, &config) {
        (Some(dir), cfg) => {
            let mut e = output::read_run(dir).map_err(input)?;
            if let Some(cfg) = cfg {
                let setup = cfg.setup().map_err(input)?;
                e.sources = Some(setup.sources);
                e.fluid = Some(setup.fluid);
                e.truncation = setup.truncation;
                e.pressure_tol = Some(setup.pressure.tol);
                e.fill_tensors();
            }
            e
        }
        (None, Some(cfg)) => {
            let (setup, history) = simulate(cfg)?;
            Evidence::from_history(&history, &setup)
        }
        (None, None) => return Err(Failure::Usage("verify needs --config or a snapshot directory".into())),
    };
    if let Some(f) = fault {
        evidence.inject_fault(f);
    }
    let report = verify_evidence(&evidence, &opts);
    print!("{}", report.render());
    let violations = report.violations();
    if violations.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = violations.iter().map(|v| v.name()).collect();
        Err(Failure::Violation(format!("violated invariants: {}", names.join(", "))))
    }
}

fn cmd_mms(a: MmsArgs) -> Result<(), Failure> {
    let grids: Vec<usize> = parse_list(&a.grid)
        .filter(|g| g.iter().all(|&n| n >= 2.0 && n.fract() == 0.0))
        .ok_or_else(|| Failure::Usage(format!("--grid '{}' is not a list of integers >= 2", a.grid)))?
        .into_iter()
        .map(|n| n as usize)
        .collect();
    let studies: &[Study] = match a.study {
        StudyArg::Pressure => &[Study::Pressure],
        StudyArg::Transport => &[Study::Transport],
        StudyArg::Both => &[Study::Pressure, Study::Transport],
    };
    let mut tables = Vec::new();
    for &s in studies {
        let t = mms_convergence_study(s, &grids).map_err(compute)?;
        print!("{}", t.render());
        tables.push(t);
    }
    if let Some(path) = a.out {
        std::fs::write(&path, serde_json::to_string_pretty(&tables).map_err(|e| input(e.into()))?)
            .map_err(|e| input(e.into()))?;
    }
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<(), Failure> {
    let mut config = load(&a.config, &a.overrides)?;
    if let Some(l) = &a.ladder {
        config.diagnostics.ladder =
            parse_list(l).ok_or_else(|| Failure::Usage(format!("--ladder '{l}' is not a list of radii")))?;
    }
    let mut points: Vec<PointSelector> = a
        .points
        .iter()
        .map(|p| p.parse())
        .collect::<miscible_core::Result<_>>()
        .map_err(input)?;
    if points.is_empty() {
        points = config.points.clone();
    }
    let grid = config.grid().map_err(input)?;
    if points.is_empty() {
        points.push(format!("{},{},last", grid.nx() / 2, grid.ny() / 2).parse().map_err(input)?);
    }
    let (setup, history) = simulate(&config)?;
    let mut p_history = FieldHistory::new();
    for (&t, p) in history.times().iter().zip(&history.p) {
        p_history.push(t, p.clone()).map_err(compute)?;
    }
    let inputs = DiagnosticInputs {
        u: &history.u,
        p: &p_history,
        medium: &setup.medium,
        fluid: &setup.fluid,
        sources: &setup.sources,
    };
    let mut reports: Vec<RegularityReport> = Vec::with_capacity(points.len());
    for point in &points {
        let k = point.time_index(history.times().len()).map_err(input)?;
        let report = diagnose_point(&inputs, point.cell, k, &config.diagnostics).map_err(compute)?;
        println!(
            "point ({}, {}) at t = {}: {}",
            point.cell.0, point.cell.1, report.point.time, report.verdict.classification
        );
        reports.push(report);
    }
    std::fs::create_dir_all(&a.out).map_err(|e| input(e.into()))?;
    let path = a.out.join("diagnose.json");
    std::fs::write(&path, serde_json::to_string_pretty(&reports).map_err(|e| input(e.into()))?)
        .map_err(|e| input(e.into()))?;
    println!("report written to {}", path.display());
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn execute_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Mms(a) => cmd_mms(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
