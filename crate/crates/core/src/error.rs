use std::fmt;
use std::path::PathBuf;

/// Modelling hypotheses that a configuration must satisfy before a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Porosity bounded below by a positive constant.
    Porosity,
    /// Permeability uniformly elliptic.
    Permeability,
    /// Nonnegative, compatible sources with injected concentration in [0, 1].
    Sources,
    /// Dispersion parameters `m > 0`, `b >= a > 0`.
    Dispersion,
    /// Viscosity bounded below by a positive constant.
    Viscosity,
    /// Initial concentration in [0, 1].
    InitialData,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::Porosity => "H1",
            Hypothesis::Permeability => "H2",
            Hypothesis::Sources => "H3",
            Hypothesis::Dispersion => "H4",
            Hypothesis::Viscosity => "H5",
            Hypothesis::InitialData => "H6",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid field: {0}")]
    Field(String),

    #[error("{hypothesis} {message}")]
    Hypothesis {
        hypothesis: Hypothesis,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("radius {radius} is below grid resolution: {reason}")]
    Resolution { radius: f64, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("region does not fit in the domain: {0}")]
    Domain(String),

    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn hypothesis(hypothesis: Hypothesis, message: impl Into<String>) -> Self {
        Error::Hypothesis {
            hypothesis,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
