//! Run directories: per-snapshot field files plus a JSON monitor log.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use miscible_core::coupling::{CumulativeBalance, SimulationHistory, StepRecord};
use miscible_core::snapshot::{read_snapshot, write_snapshot, SnapshotFile};
use miscible_core::transport::EnergyReport;
use miscible_core::verify::Evidence;
use miscible_core::{Error, FluxField, Result, ScalarField};

pub const MONITORS: &str = "monitors.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    pub seed: u64,
    pub times: Vec<f64>,
    pub initial_mass: f64,
    pub energy: EnergyReport,
    pub cumulative_balance: CumulativeBalance,
    pub steps: Vec<StepRecord>,
}

fn snapshot_name(field: &str, index: usize) -> String {
    format!("{field}_{index:04}.snap")
}

/// Writes every recorded snapshot of `u`, `p` and `v` and the monitor log.
pub fn write_run(dir: &Path, history: &SimulationHistory, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let times = history.times();
    for (k, &t) in times.iter().enumerate() {
        let mut files = vec![
            SnapshotFile::from_scalar("u", t, &history.u.fields()[k]),
            SnapshotFile::from_scalar("p", t, &history.p[k]),
        ];
        files.extend(SnapshotFile::from_flux("v", t, &history.v[k]));
        for snap in files {
            let path = dir.join(snapshot_name(&snap.field, k));
            write_snapshot(&snap, &path)?;
            written.push(path);
        }
    }
    let monitors = Monitors {
        seed,
        times: times.to_vec(),
        initial_mass: history.initial_mass,
        energy: history.energy,
        cumulative_balance: history.cumulative_balance(),
        steps: history.steps.clone(),
    };
    let path = dir.join(MONITORS);
    std::fs::write(&path, serde_json::to_string_pretty(&monitors)?)?;
    written.push(path);
    log::info!("wrote {} files to {}", written.len(), dir.display());
    Ok(written)
}

fn numbered(dir: &Path, field: &str) -> Result<Vec<PathBuf>> {
    let prefix = format!("{field}_");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| {
                n.strip_prefix(&prefix)
                    .and_then(|rest| rest.strip_suffix(".snap"))
                    .is_some_and(|idx| !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()))
            })
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn scalars(dir: &Path, field: &str) -> Result<Vec<ScalarField>> {
    numbered(dir, field)?
        .iter()
        .map(|p| read_snapshot(p)?.to_scalar())
        .collect()
}

/// Loads whatever a run directory holds into verification evidence.
pub fn read_run(dir: &Path) -> Result<Evidence> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let u = scalars(dir, "u")?;
    let p = scalars(dir, "p")?;
    let vx = numbered(dir, "v_x")?;
    let vy = numbered(dir, "v_y")?;
    if vx.len() != vy.len() {
        return Err(Error::Config(format!(
            "{}: {} x-face but {} y-face velocity snapshots",
            dir.display(),
            vx.len(),
            vy.len()
        )));
    }
    let v = vx
        .iter()
        .zip(&vy)
        .map(|(x, y)| SnapshotFile::to_flux(&read_snapshot(x)?, &read_snapshot(y)?))
        .collect::<Result<Vec<FluxField>>>()?;
    if u.is_empty() && p.is_empty() && v.is_empty() {
        return Err(Error::Config(format!("no snapshots found in {}", dir.display())));
    }
    let mut evidence = Evidence {
        u,
        p,
        v,
        ..Default::default()
    };
    let monitors = dir.join(MONITORS);
    if monitors.exists() {
        let m: Monitors = serde_json::from_str(&std::fs::read_to_string(&monitors)?)?;
        evidence.steps = m.steps;
        evidence.initial_mass = Some(m.initial_mass);
    }
    Ok(evidence)
}
