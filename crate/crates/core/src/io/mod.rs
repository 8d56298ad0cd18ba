//! File formats: snapshot rasters, fitted models, plan and flow tables, and
//! run manifests.
//!
//! A raster set is a `key = value` manifest plus a payload file holding one
//! frame per record in row-major node order, either as decimal text with 17
//! significant digits (one frame per line) or as little-endian `f64`. The
//! model file is binary and reproduces a fitted model bit for bit. Tables
//! are whitespace-delimited text with a `#` header line.

mod export;
mod manifest;
mod model;
mod raster;

pub use export::{
    read_plan_table, write_arrows, write_plan_table, write_velocity, RunMetrics, ARROW_HEADER, PLAN_HEADER,
    VELOCITY_HEADER,
};
pub use manifest::{CommandEcho, RunManifest};
pub use model::{read_model, read_model_from, write_model, write_model_to, MODEL_MAGIC};
pub use raster::{
    read_rasters, read_rasters_with_meta, write_rasters, Encoding, RasterMeta, RASTER_FORMAT,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    #[error("malformed manifest, line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("manifest lacks key '{0}'")]
    MissingKey(&'static str),
    #[error("count mismatch in {what}: expected {expected}, found {found}")]
    CountMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in frame {frame} at node {node}")]
    NonFinite { frame: usize, node: usize },
    #[error("cannot parse value '{token}' in frame {frame}")]
    BadValue { frame: usize, token: String },
    #[error("not a model file: {0}")]
    BadModel(String),
    #[error("snapshot set has no grid")]
    NoGrid,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("run manifest: {0}")]
    Toml(String),
}

impl IoError {
    /// Stable numeric code per error kind, used as the CLI exit status.
    pub fn code(&self) -> i32 {
        match self {
            IoError::File { .. } | IoError::Stream(_) => 10,
            IoError::Manifest { .. } | IoError::MissingKey(_) => 11,
            IoError::CountMismatch { .. } => 12,
            IoError::NonFinite { .. } | IoError::BadValue { .. } => 13,
            IoError::BadModel(_) => 14,
            IoError::NoGrid | IoError::Data(_) => 15,
            IoError::Toml(_) => 16,
        }
    }
}

pub(crate) fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}
