//! Density rasters and uniformly spaced snapshot sequences.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::GridSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("snapshot set needs at least {needed} frames, got {found}")]
    TooFewFrames { needed: usize, found: usize },
    #[error("time spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("non-finite value at state {state}, frame {frame}")]
    NonFinite { state: usize, frame: usize },
    #[error("grid has {grid} nodes but snapshots have {states} states")]
    GridMismatch { grid: usize, states: usize },
    #[error("frame index {index} out of range ({frames} frames)")]
    FrameOutOfRange { index: usize, frames: usize },
}

/// One snapshot: a mass value per grid cell at a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRaster {
    pub grid: GridSpec,
    pub time: f64,
    pub values: Vec<f64>,
}

impl DensityRaster {
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.node_index(row, col)]
    }
}

/// Columns `y(t0), y(t0 + dt), ...` of a uniformly sampled state sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    data: DMatrix<f64>,
    t0: f64,
    dt: f64,
    grid: Option<GridSpec>,
}

impl SnapshotSet {
    pub fn new(
        data: DMatrix<f64>,
        t0: f64,
        dt: f64,
        grid: Option<GridSpec>,
    ) -> Result<Self, DataError> {
        if data.ncols() < 2 {
            return Err(DataError::TooFewFrames {
                needed: 2,
                found: data.ncols(),
            });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DataError::BadSpacing(dt));
        }
        if !t0.is_finite() {
            return Err(DataError::BadSpacing(t0));
        }
        for frame in 0..data.ncols() {
            for state in 0..data.nrows() {
                if !data[(state, frame)].is_finite() {
                    return Err(DataError::NonFinite { state, frame });
                }
            }
        }
        if let Some(g) = &grid {
            if g.node_count() != data.nrows() {
                return Err(DataError::GridMismatch {
                    grid: g.node_count(),
                    states: data.nrows(),
                });
            }
        }
        Ok(SnapshotSet { data, t0, dt, grid })
    }

    /// Builds a set from rasters sharing one grid, spaced by `dt`.
    pub fn from_rasters(rasters: &[DensityRaster], dt: f64) -> Result<Self, DataError> {
        let first = rasters.first().ok_or(DataError::TooFewFrames {
            needed: 2,
            found: 0,
        })?;
        let n = first.grid.node_count();
        let mut data = DMatrix::zeros(n, rasters.len());
        for (j, r) in rasters.iter().enumerate() {
            if r.values.len() != n {
                return Err(DataError::GridMismatch {
                    grid: n,
                    states: r.values.len(),
                });
            }
            data.set_column(j, &DVector::from_column_slice(&r.values));
        }
        Self::new(data, first.time, dt, Some(first.grid))
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Result<Self, DataError> {
        if grid.node_count() != self.data.nrows() {
            return Err(DataError::GridMismatch {
                grid: grid.node_count(),
                states: self.data.nrows(),
            });
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn n_frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_states(&self) -> usize {
        self.data.nrows()
    }

    pub fn time(&self, frame: usize) -> f64 {
        self.t0 + frame as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_frames() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_frames()).map(|j| self.time(j)).collect()
    }

    pub fn frame(&self, j: usize) -> DVector<f64> {
        self.data.column(j).clone_owned()
    }

    pub fn frame_slice(&self, j: usize) -> &[f64] {
        let n = self.n_states();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    pub fn raster(&self, j: usize) -> Option<DensityRaster> {
        let grid = self.grid?;
        Some(DensityRaster {
            grid,
            time: self.time(j),
            values: self.frame_slice(j).to_vec(),
        })
    }

    /// Every `step`-th frame starting from the first.
    pub fn subsample(&self, step: usize) -> Result<Self, DataError> {
        let step = step.max(1);
        let cols: Vec<usize> = (0..self.n_frames()).step_by(step).collect();
        let data = self.data.select_columns(cols.iter());
        Self::new(data, self.t0, self.dt * step as f64, self.grid)
    }

    /// Frames `start..start + count`.
    pub fn window(&self, start: usize, count: usize) -> Result<Self, DataError> {
        if start + count > self.n_frames() {
            return Err(DataError::FrameOutOfRange {
                index: start + count,
                frames: self.n_frames(),
            });
        }
        let data = self.data.columns(start, count).clone_owned();
        Self::new(data, self.time(start), self.dt, self.grid)
    }

    pub fn total_mass(&self, j: usize) -> f64 {
        self.frame_slice(j).iter().sum()
    }
}
