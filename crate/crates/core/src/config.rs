//! Flat `key = value` configuration files.
//!
//! Lines starting with `#` and blank lines are ignored. Every key is optional
//! except `grid.nx` and `sources.pattern`; unknown keys are rejected. Field
//! inputs take either a number (uniform field) or `file:<path>` naming a cell
//! snapshot, resolved relative to the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coefficients::{FluidSpec, MediumSpec, SourceSpec, ViscosityLaw};
use crate::coupling::{PicardOptions, ResidualNorm, SimulationSetup, TimeSettings, TimeStep, Truncation};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SymTensor2, SymTensor2Field};
use crate::grid::Grid2D;
use crate::pressure::PressureOptions;
use crate::regularity::{DiagnosticSettings, Thresholds};
use crate::scenario::five_spot;
use crate::snapshot::read_snapshot;
use crate::transport::{CrossDiffusion, LinearSolver, TransportOptions};

/// A uniform value or a cell snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldInput {
    Uniform(f64),
    File(PathBuf),
}

impl FieldInput {
    fn load(&self, grid: Grid2D) -> Result<ScalarField> {
        match self {
            FieldInput::Uniform(v) => {
                if !v.is_finite() {
                    return Err(Error::Config(format!("field value {v} is not finite")));
                }
                Ok(ScalarField::constant(grid, *v))
            }
            FieldInput::File(path) => {
                let f = read_snapshot(path)?.to_scalar()?;
                if !f.grid().same_shape(&grid) {
                    return Err(Error::Snapshot {
                        path: path.clone(),
                        message: format!(
                            "grid {}x{} (h = {}) does not match the configured {}x{} (h = {})",
                            f.grid().nx(),
                            f.grid().ny(),
                            f.grid().h(),
                            grid.nx(),
                            grid.ny(),
                            grid.h()
                        ),
                    });
                }
                Ok(f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PermeabilityInput {
    Isotropic(FieldInput),
    Tensor { xx: FieldInput, xy: FieldInput, yy: FieldInput },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourcePattern {
    FiveSpot { rate: f64, well_size: f64, u_hat: f64 },
    None,
    Custom { q_inject: FieldInput, q_produce: FieldInput, u_hat: FieldInput },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSelector {
    Index(usize),
    Last,
}

/// A diagnostic query point `i,j,time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointSelector {
    pub cell: (usize, usize),
    pub time: TimeSelector,
}

impl FromStr for PointSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("point '{s}' must look like 'i,j,last' or 'i,j,<snapshot index>'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let i = parts[0].parse().map_err(|_| bad())?;
        let j = parts[1].parse().map_err(|_| bad())?;
        let time = match parts[2] {
            "last" => TimeSelector::Last,
            t => TimeSelector::Index(t.parse().map_err(|_| bad())?),
        };
        Ok(Self { cell: (i, j), time })
    }
}

impl PointSelector {
    pub fn time_index(&self, snapshots: usize) -> Result<usize> {
        match self.time {
            TimeSelector::Last => snapshots
                .checked_sub(1)
                .ok_or_else(|| Error::Degenerate("no snapshots recorded".into())),
            TimeSelector::Index(k) if k < snapshots => Ok(k),
            TimeSelector::Index(k) => Err(Error::Domain(format!(
                "snapshot index {k} out of range ({snapshots} recorded)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub porosity: FieldInput,
    pub permeability: PermeabilityInput,
    pub lambda0: Option<f64>,
    pub c0: Option<f64>,
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub viscosity: ViscosityLaw,
    pub c1: Option<f64>,
    pub sources: SourcePattern,
    pub u0: FieldInput,
    pub t_final: f64,
    pub step: TimeStep,
    pub snapshot_every: usize,
    pub pressure: PressureOptions,
    pub transport: TransportOptions,
    pub picard: PicardOptions,
    pub truncation: Truncation,
    pub diagnostics: DiagnosticSettings,
    pub points: Vec<PointSelector>,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.nx, self.ny, self.h, self.origin)
    }

    /// Replaces the resolution, keeping the physical extent.
    pub fn set_resolution(&mut self, n: usize) {
        let width = self.h * self.nx as f64;
        let height = self.h * self.ny as f64;
        self.h = width / n as f64;
        self.nx = n;
        self.ny = ((height / self.h).round() as usize).max(1);
    }

    pub fn set_strict(&mut self, strict: bool) {
        self.picard.strict = strict;
    }

    /// Builds and validates the fields of the run.
    pub fn setup(&self) -> Result<SimulationSetup> {
        let grid = self.grid()?;
        let porosity = self.porosity.load(grid)?;
        let permeability = match &self.permeability {
            PermeabilityInput::Isotropic(k) => {
                let k = k.load(grid)?;
                SymTensor2Field::new(grid, k.values().iter().map(|&v| SymTensor2::isotropic(v)).collect())?
            }
            PermeabilityInput::Tensor { xx, xy, yy } => {
                SymTensor2Field::from_components(&xx.load(grid)?, &xy.load(grid)?, &yy.load(grid)?)?
            }
        };
        let lambda0 = self.lambda0.unwrap_or_else(|| porosity.min());
        let c0 = self.c0.unwrap_or_else(|| permeability.min_eigenvalue());
        let medium = MediumSpec::with_bounds(porosity, permeability, lambda0, c0)?;
        let mut fluid = FluidSpec::new(self.m, self.a, self.b, self.viscosity)?;
        if let Some(c1) = self.c1 {
            fluid.c1 = c1;
            fluid.validate()?;
        }
        let sources = match &self.sources {
            SourcePattern::FiveSpot { rate, well_size, u_hat } => five_spot(grid, *rate, *well_size, *u_hat)?,
            SourcePattern::None => SourceSpec::none(grid),
            SourcePattern::Custom { q_inject, q_produce, u_hat } => {
                SourceSpec::new(q_inject.load(grid)?, q_produce.load(grid)?, u_hat.load(grid)?)?
            }
        };
        let setup = SimulationSetup {
            medium,
            fluid,
            sources,
            u0: self.u0.load(grid)?,
            time: TimeSettings {
                t_final: self.t_final,
                step: self.step,
                snapshot_every: self.snapshot_every,
            },
            pressure: self.pressure,
            transport: self.transport,
            picard: self.picard,
            truncation: self.truncation,
        };
        setup.validate()?;
        Ok(setup)
    }
}

/// Parsed key-value pairs with usage tracking.
struct Entries {
    map: BTreeMap<String, (usize, String)>,
    base: PathBuf,
}

impl Entries {
    fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if let Some((first, _)) = map.insert(key.clone(), (n + 1, value)) {
                return Err(Error::Config(format!("line {}: key '{key}' already set on line {first}", n + 1)));
            }
        }
        Ok(Self {
            map,
            base: base.to_path_buf(),
        })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse '{v}' for {key}"))),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn field(&mut self, key: &str, default: f64) -> Result<FieldInput> {
        match self.take(key) {
            None => Ok(FieldInput::Uniform(default)),
            Some((line, v)) => parse_field(&v, &self.base)
                .ok_or_else(|| Error::Config(format!("line {line}: '{v}' for {key} is neither a number nor file:<path>"))),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(&v)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("line {line}: '{v}' for {key} is not a comma-separated list"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Config(format!("line {line}: unknown key '{key}'"))),
        }
    }
}

fn parse_field(v: &str, base: &Path) -> Option<FieldInput> {
    if let Some(path) = v.strip_prefix("file:") {
        return Some(FieldInput::File(base.join(path.trim())));
    }
    v.parse().ok().map(FieldInput::Uniform)
}

/// Comma-separated numbers; empty means an empty list.
pub fn parse_list(v: &str) -> Option<Vec<f64>> {
    if v.trim().is_empty() {
        return Some(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

fn keyword<T>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("{key} must be one of {}, got '{value}'", names.join(", ")))
        })
}

/// Parses configuration text; relative snapshot paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<SimulationConfig> {
    let mut e = Entries::parse(text, base)?;

    let nx: usize = e.required("grid.nx")?;
    let ny: usize = e.or("grid.ny", nx)?;
    let h: f64 = e.or("grid.h", 1.0 / nx.max(1) as f64)?;
    let origin = [e.or("grid.origin_x", 0.0)?, e.or("grid.origin_y", 0.0)?];

    let porosity = e.field("medium.porosity", 0.2)?;
    let tensor_keys = ["medium.permeability.xx", "medium.permeability.xy", "medium.permeability.yy"];
    let permeability = if tensor_keys.iter().any(|k| e.map.contains_key(*k)) {
        if e.map.contains_key("medium.permeability") {
            return Err(Error::Config(
                "give either medium.permeability or its .xx/.xy/.yy components, not both".into(),
            ));
        }
        PermeabilityInput::Tensor {
            xx: e.field(tensor_keys[0], 1.0)?,
            xy: e.field(tensor_keys[1], 0.0)?,
            yy: e.field(tensor_keys[2], 1.0)?,
        }
    } else {
        PermeabilityInput::Isotropic(e.field("medium.permeability", 1.0)?)
    };
    let lambda0 = e.parsed("medium.lambda0")?;
    let c0 = e.parsed("medium.c0")?;

    let m = e.or("fluid.m", 0.01)?;
    let a = e.or("fluid.a", 0.05)?;
    let b = e.or("fluid.b", 0.5)?;
    let mu0 = e.or("fluid.mu0", 1.0)?;
    let law: String = e.or("fluid.viscosity", "quarter_power".to_string())?;
    let mobility_ratio = e.or("fluid.mobility_ratio", 20.0)?;
    let viscosity = match keyword("fluid.viscosity", &law, &[("quarter_power", 0), ("constant", 1)])? {
        0 => ViscosityLaw::QuarterPower { mu0, mobility_ratio },
        _ => ViscosityLaw::Constant { mu0 },
    };
    let c1 = e.parsed("fluid.c1")?;

    let pattern: String = e.required("sources.pattern")?;
    let sources = match keyword("sources.pattern", &pattern, &[("five_spot", 0), ("none", 1), ("custom", 2)])? {
        0 => SourcePattern::FiveSpot {
            rate: e.or("sources.rate", 1.0)?,
            well_size: e.or("sources.well_size", 0.0625)?,
            u_hat: e.or("sources.u_hat", 1.0)?,
        },
        1 => SourcePattern::None,
        _ => {
            for k in ["sources.q_inject", "sources.q_produce"] {
                if !e.map.contains_key(k) {
                    return Err(Error::Config(format!("custom sources need '{k}'")));
                }
            }
            SourcePattern::Custom {
                q_inject: e.field("sources.q_inject", 0.0)?,
                q_produce: e.field("sources.q_produce", 0.0)?,
                u_hat: e.field("sources.u_hat", 1.0)?,
            }
        }
    };
    let u0 = e.field("initial.u", 0.0)?;

    let t_final = e.or("time.t_final", 0.5)?;
    let dt: String = e.or("time.dt", "0.01".to_string())?;
    let cfl_factor = e.or("time.cfl_factor", 1.0)?;
    let max_dt = e.or("time.max_dt", 0.05)?;
    let step = if dt == "cfl" {
        TimeStep::Cfl {
            factor: cfl_factor,
            max_dt,
        }
    } else {
        TimeStep::Fixed(
            dt.parse()
                .map_err(|_| Error::Config(format!("time.dt must be a number or 'cfl', got '{dt}'")))?,
        )
    };
    let snapshot_every = e.or("time.snapshot_every", 5)?;

    let pressure = PressureOptions {
        tol: e.or("solver.pressure_tol", 1e-10)?,
        max_iter: e.or("solver.pressure_max_iter", 20_000)?,
    };
    let linear: String = e.or("solver.transport_linear", "direct".to_string())?;
    let cross: String = e.or("solver.cross_diffusion", "deferred".to_string())?;
    let transport = TransportOptions {
        tol: e.or("solver.transport_tol", 1e-12)?,
        max_iter: e.or("solver.transport_max_iter", 20_000)?,
        solver: keyword(
            "solver.transport_linear",
            &linear,
            &[("direct", LinearSolver::Direct), ("bicgstab", LinearSolver::Bicgstab)],
        )?,
        cross_diffusion: keyword(
            "solver.cross_diffusion",
            &cross,
            &[
                ("off", CrossDiffusion::Off),
                ("deferred", CrossDiffusion::Deferred),
                ("lagged", CrossDiffusion::Lagged),
            ],
        )?,
    };
    let norm: String = e.or("solver.picard_norm", "sup".to_string())?;
    let strict = e.or("strict", true)?;
    let picard = PicardOptions {
        tol: e.or("solver.picard_tol", 1e-8)?,
        max_iter: e.or("solver.picard_max_iter", 50)?,
        norm: keyword("solver.picard_norm", &norm, &[("sup", ResidualNorm::Sup), ("l2", ResidualNorm::L2)])?,
        strict,
    };
    let k: String = e.or("solver.k_trunc", "auto".to_string())?;
    let truncation = match k.as_str() {
        "auto" => Truncation::Auto,
        "none" => Truncation::None,
        v => Truncation::Fixed(v.parse().map_err(|_| {
            Error::Config(format!("solver.k_trunc must be auto, none or a positive integer, got '{v}'"))
        })?),
    };
    if truncation == Truncation::Fixed(0) {
        return Err(Error::Config("solver.k_trunc must be at least 1".into()));
    }

    let defaults = DiagnosticSettings::default();
    let theta2: String = e.or("diagnostics.theta2", "auto".to_string())?;
    let diagnostics = DiagnosticSettings {
        ladder: e.list("diagnostics.ladder")?.unwrap_or_default(),
        s: e.or("diagnostics.s", defaults.s)?,
        s1: e.or("diagnostics.s1", defaults.s1)?,
        ell: e.list("diagnostics.ell")?.unwrap_or(defaults.ell),
        thresholds: Thresholds {
            theta1: e.or("diagnostics.theta1", defaults.thresholds.theta1)?,
            theta2: if theta2 == "auto" {
                None
            } else {
                Some(theta2.parse().map_err(|_| {
                    Error::Config(format!("diagnostics.theta2 must be a number or 'auto', got '{theta2}'"))
                })?)
            },
            theta3: e.or("diagnostics.theta3", defaults.thresholds.theta3)?,
        },
        cutoff_fraction: e.or("diagnostics.cutoff_fraction", defaults.cutoff_fraction)?,
    };
    let points = match e.take("diagnostics.points") {
        None => Vec::new(),
        Some((_, v)) => v
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<PointSelector>>>()?,
    };
    let seed = e.or("seed", 0u64)?;
    e.finish()?;

    if diagnostics.s <= 1.0 {
        return Err(Error::Config(format!("diagnostics.s must exceed 1, got {}", diagnostics.s)));
    }
    if !(0.0..=1.0).contains(&diagnostics.cutoff_fraction) {
        return Err(Error::Config("diagnostics.cutoff_fraction must lie in [0, 1]".into()));
    }
    Ok(SimulationConfig {
        nx,
        ny,
        h,
        origin,
        porosity,
        permeability,
        lambda0,
        c0,
        m,
        a,
        b,
        viscosity,
        c1,
        sources,
        u0,
        t_final,
        step,
        snapshot_every,
        pressure,
        transport,
        picard,
        truncation,
        diagnostics,
        points,
        seed,
    })
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let config = parse_config(&text, base)?;
    config.setup()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SimulationConfig> {
        let c = parse_config(text, Path::new("."))?;
        c.setup()?;
        Ok(c)
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse("grid.nx = 16\nsources.pattern = five_spot\n").unwrap();
        assert_eq!((c.nx, c.ny), (16, 16));
        assert_eq!(c.h, 1.0 / 16.0);
        assert_eq!(c.picard.tol, 1e-8);
        assert_eq!(c.picard.max_iter, 50);
        assert!(c.picard.strict);
        assert_eq!(c.truncation, Truncation::Auto);
        assert_eq!(c.step, TimeStep::Fixed(0.01));
        let s = c.setup().unwrap();
        assert!((s.sources.q_inject.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dispersivity_order_names_hypothesis() {
        let err = parse("grid.nx = 8\nsources.pattern = none\nfluid.a = 2\nfluid.b = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("(H4)") && err.contains("b >= a"), "{err}");
    }

    #[test]
    fn other_hypotheses_are_named() {
        let cases = [
            ("medium.porosity = 0", "(H1)"),
            ("medium.permeability = -1", "(H2)"),
            ("sources.pattern = five_spot\nsources.u_hat = 1.5", "(H3)"),
            ("fluid.m = 0", "(H4)"),
            ("fluid.mu0 = 0", "(H5)"),
            ("initial.u = 1.2", "(H6)"),
        ];
        for (extra, tag) in cases {
            let pattern = if extra.contains("sources.pattern") { "" } else { "sources.pattern = none\n" };
            let err = parse(&format!("grid.nx = 8\n{pattern}{extra}\n")).unwrap_err().to_string();
            assert!(err.contains(tag), "{extra}: {err}");
        }
    }

    #[test]
    fn structural_errors() {
        assert!(parse("sources.pattern = none").unwrap_err().to_string().contains("grid.nx"));
        assert!(parse("grid.nx = 8").unwrap_err().to_string().contains("sources.pattern"));
        assert!(parse("grid.nx = 8\nsources.pattern = none\nbogus = 1")
            .unwrap_err()
            .to_string()
            .contains("unknown key 'bogus'"));
        assert!(parse("grid.nx = 8\ngrid.nx = 9\nsources.pattern = none").is_err());
        assert!(parse("grid.nx = 8\nsources.pattern = nowhere").is_err());
        assert!(parse("grid.nx = eight\nsources.pattern = none").is_err());
        assert!(parse("grid.nx = 8\nsources.pattern = none\nsolver.k_trunc = 0").is_err());
    }

    #[test]
    fn points_and_lists() {
        let c = parse(
            "grid.nx = 8\nsources.pattern = none\ndiagnostics.points = 4,4,last; 2,3,1\ndiagnostics.ladder = 0.125, 0.25\nsolver.k_trunc = 3\ntime.dt = cfl\n",
        )
        .unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.points[0].time, TimeSelector::Last);
        assert_eq!(c.points[1].cell, (2, 3));
        assert_eq!(c.diagnostics.ladder, vec![0.125, 0.25]);
        assert_eq!(c.truncation, Truncation::Fixed(3));
        assert!(matches!(c.step, TimeStep::Cfl { .. }));
        assert_eq!(c.points[0].time_index(4).unwrap(), 3);
        assert!(c.points[1].time_index(1).is_err());
    }

    #[test]
    fn resolution_override_keeps_extent() {
        let mut c = parse("grid.nx = 8\ngrid.ny = 4\ngrid.h = 0.5\nsources.pattern = none\n").unwrap();
        c.set_resolution(16);
        assert_eq!((c.nx, c.ny, c.h), (16, 8, 0.25));
    }

    #[test]
    fn snapshot_inputs_are_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::unit_square(4).unwrap();
        let phi = ScalarField::from_fn(g, |x, _| 0.1 + 0.2 * x);
        crate::snapshot::write_snapshot(
            &crate::snapshot::SnapshotFile::from_scalar("phi", 0.0, &phi),
            &dir.path().join("phi.snap"),
        )
        .unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "grid.nx = 4\nsources.pattern = none\nmedium.porosity = file:phi.snap\n").unwrap();
        let c = load_config(&cfg).unwrap();
        assert_eq!(c.setup().unwrap().medium.porosity, phi);
        std::fs::write(&cfg, "grid.nx = 5\nsources.pattern = none\nmedium.porosity = file:phi.snap\n").unwrap();
        assert!(load_config(&cfg).is_err());
    }
}
