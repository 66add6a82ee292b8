//! Finite-volume simulation of single-phase miscible displacement in a porous
//! medium, with regularity diagnostics for the computed pressure and
//! concentration.

pub mod coefficients;
pub mod config;
pub mod coupling;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod mms;
pub mod ops;
pub mod pressure;
pub mod region;
pub mod regularity;
pub mod scenario;
pub mod snapshot;
pub mod transport;
pub mod verify;

pub use coefficients::{FluidSpec, MediumSpec, SourceSpec, ViscosityLaw};
pub use error::{Error, Hypothesis, Result};
pub use field::{FluxField, ScalarField, SymTensor2, SymTensor2Field, VectorField};
pub use grid::Grid2D;
pub use region::{Ball, Cylinder, FieldHistory};
