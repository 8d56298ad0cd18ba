//! Reference datasets: exact advection, a Burgers finite-difference solver and
//! synthetic presence rasters.

mod advection;
mod burgers;
mod presence;

pub use advection::{advection_exact, advection_snapshots, AdvectionSpec};
pub use burgers::{burgers_solve, BurgersSpec, Integrator};
pub use presence::{synth_presence, PresenceSpec};

use thiserror::Error;

use crate::data::DataError;
use crate::grid::GridError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestdataError {
    #[error("bump leaves the domain by time {t}; boundary would be active")]
    BoundaryActive { t: f64 },
    #[error("solution became unstable at t = {t}")]
    Unstable { t: f64 },
    #[error("invalid dataset parameters: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Data(#[from] DataError),
}
