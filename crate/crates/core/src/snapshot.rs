//! Text snapshot files.
//!
//! ```text
//! # miscible snapshot v1
//! field = u
//! layout = cells
//! nx = 2
//! ny = 2
//! h = 0.5
//! origin = 0 0
//! time = 0
//! checksum = sha256:...
//! ---
//! 1e0
//! ...
//! ```
//!
//! Values are row-major, one per line, in shortest round-trip exponent
//! notation. The checksum is the SHA-256 of the value block.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{FluxField, ScalarField};
use crate::grid::Grid2D;

const MAGIC: &str = "# miscible snapshot v1";

/// Which grid entities the values live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Cells,
    XFaces,
    YFaces,
}

impl Layout {
    fn name(self) -> &'static str {
        match self {
            Layout::Cells => "cells",
            Layout::XFaces => "x_faces",
            Layout::YFaces => "y_faces",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "cells" => Some(Layout::Cells),
            "x_faces" => Some(Layout::XFaces),
            "y_faces" => Some(Layout::YFaces),
            _ => None,
        }
    }

    fn count(self, grid: &Grid2D) -> usize {
        match self {
            Layout::Cells => grid.cell_count(),
            Layout::XFaces => grid.x_face_count(),
            Layout::YFaces => grid.y_face_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub field: String,
    pub layout: Layout,
    pub grid: Grid2D,
    pub time: f64,
    pub values: Vec<f64>,
}

impl SnapshotFile {
    pub fn from_scalar(name: &str, time: f64, f: &ScalarField) -> Self {
        Self {
            field: name.to_string(),
            layout: Layout::Cells,
            grid: *f.grid(),
            time,
            values: f.values().to_vec(),
        }
    }

    /// The two face components of a flux field.
    pub fn from_flux(name: &str, time: f64, v: &FluxField) -> [Self; 2] {
        let make = |suffix: &str, layout, values: &[f64]| Self {
            field: format!("{name}_{suffix}"),
            layout,
            grid: *v.grid(),
            time,
            values: values.to_vec(),
        };
        [
            make("x", Layout::XFaces, v.x_faces()),
            make("y", Layout::YFaces, v.y_faces()),
        ]
    }

    pub fn to_scalar(&self) -> Result<ScalarField> {
        if self.layout != Layout::Cells {
            return Err(Error::Config(format!("snapshot '{}' does not hold cell values", self.field)));
        }
        ScalarField::new(self.grid, self.values.clone())
    }

    /// Rebuilds a flux field from its x- and y-face snapshots.
    pub fn to_flux(x: &SnapshotFile, y: &SnapshotFile) -> Result<FluxField> {
        if x.layout != Layout::XFaces || y.layout != Layout::YFaces || !x.grid.same_shape(&y.grid) {
            return Err(Error::Config("flux snapshots must be matching x- and y-face files".into()));
        }
        FluxField::new(x.grid, x.values.clone(), y.values.clone())
    }

    /// Serialised bytes.
    pub fn render(&self) -> String {
        let mut body = String::with_capacity(self.values.len() * 24);
        for v in &self.values {
            writeln!(body, "{v:e}").expect("writing to a string");
        }
        let g = &self.grid;
        let [ox, oy] = g.origin();
        format!(
            "{MAGIC}\nfield = {}\nlayout = {}\nnx = {}\nny = {}\nh = {:e}\norigin = {:e} {:e}\ntime = {:e}\nchecksum = sha256:{}\n---\n{body}",
            self.field,
            self.layout.name(),
            g.nx(),
            g.ny(),
            g.h(),
            ox,
            oy,
            self.time,
            digest(&body),
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |message: String| Error::Snapshot {
            path: path.to_path_buf(),
            message,
        };
        let (head, body) = text
            .split_once("\n---\n")
            .ok_or_else(|| err("missing header separator".into()))?;
        let mut lines = head.lines();
        if lines.next() != Some(MAGIC) {
            return Err(err("not a snapshot file".into()));
        }
        let mut field = None;
        let mut layout = None;
        let (mut nx, mut ny, mut h, mut origin, mut time, mut checksum) = (None, None, None, None, None, None);
        for line in lines {
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| err(format!("malformed header line '{line}'")))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}' for {key}")));
            let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad integer '{s}' for {key}")));
            match key {
                "field" => field = Some(value.to_string()),
                "layout" => layout = Some(Layout::parse(value).ok_or_else(|| err(format!("unknown layout '{value}'")))?),
                "nx" => nx = Some(int(value)?),
                "ny" => ny = Some(int(value)?),
                "h" => h = Some(num(value)?),
                "origin" => {
                    let (a, b) = value
                        .split_once(' ')
                        .ok_or_else(|| err("origin needs two coordinates".into()))?;
                    origin = Some([num(a)?, num(b)?]);
                }
                "time" => time = Some(num(value)?),
                "checksum" => checksum = Some(value.to_string()),
                _ => return Err(err(format!("unknown header key '{key}'"))),
            }
        }
        let missing = |k: &str| err(format!("header lacks '{k}'"));
        let grid = Grid2D::new(
            nx.ok_or_else(|| missing("nx"))?,
            ny.ok_or_else(|| missing("ny"))?,
            h.ok_or_else(|| missing("h"))?,
            origin.ok_or_else(|| missing("origin"))?,
        )?;
        let layout = layout.ok_or_else(|| missing("layout"))?;
        let expected = checksum.ok_or_else(|| missing("checksum"))?;
        let actual = format!("sha256:{}", digest(body));
        if expected != actual {
            return Err(err(format!("checksum mismatch: header {expected}, content {actual}")));
        }
        let values = body
            .lines()
            .map(|l| l.parse::<f64>().map_err(|_| err(format!("bad value '{l}'"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != layout.count(&grid) {
            return Err(err(format!(
                "expected {} values, found {}",
                layout.count(&grid),
                values.len()
            )));
        }
        Ok(Self {
            field: field.ok_or_else(|| missing("field"))?,
            layout,
            grid,
            time: time.ok_or_else(|| missing("time"))?,
            values,
        })
    }
}

fn digest(body: &str) -> String {
    Sha256::digest(body.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").expect("writing to a string");
            s
        })
}

pub fn write_snapshot(snapshot: &SnapshotFile, path: &Path) -> Result<()> {
    std::fs::write(path, snapshot.render())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Snapshot {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    SnapshotFile::parse(&text, path)
}
