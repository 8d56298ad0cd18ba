//! Flow-field inference from gridded density snapshots: a DMD surrogate
//! interpolates the data in time and transportation problems on the fine
//! time grid turn consecutive frames into flows.

pub mod data;
pub mod dmd;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod pipeline;
pub mod testdata;
pub mod transport;

pub use data::{DataError, DensityRaster, SnapshotSet};
pub use dmd::{fit, DmdError, DmdModel, DmdOptions, InterpolationReport, ModeScaling};
pub use grid::{GraphTopology, GridError, GridSpec};
pub use io::IoError;
pub use linalg::RankPolicy;
pub use lp::{LpStatus, NetworkOptions};
pub use pipeline::{
    run_coupling, CouplingConfig, CouplingRun, FlowField, PipelineError, Reservoir, StepRecord,
};
pub use transport::{
    BalanceRule, CostKind, ProblemKind, SolveOptions, TransportError, TransportLayout,
    TransportPlan,
};
