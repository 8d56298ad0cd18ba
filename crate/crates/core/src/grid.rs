//! Grid-aligned graph whose nodes are cell centers.
//!
//! Nodes are numbered row-major: left to right inside a row, rows from top
//! to bottom. Node `j` sits at `row = j / n_cols`, `col = j % n_cols`. Cell
//! centers are placed at `origin + (col * cell_width, row * cell_height)`, so
//! the second coordinate grows with the row index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must have at least one row and one column, got {n_rows}x{n_cols}")]
    EmptyGrid { n_rows: usize, n_cols: usize },
    #[error("cell dimensions must be positive and finite, got {width}x{height}")]
    BadCellSize { width: f64, height: f64 },
    #[error("movement count needs at least a 2x2 grid, got {n_rows}x{n_cols}")]
    TooSmallForMovementCount { n_rows: usize, n_cols: usize },
}

/// Shape and geometry of a structured rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cell_width: f64,
    pub cell_height: f64,
    /// Center of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        cell_width: f64,
        cell_height: f64,
        origin: [f64; 2],
    ) -> Result<Self, GridError> {
        let spec = GridSpec {
            n_rows,
            n_cols,
            cell_width,
            cell_height,
            origin,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit square cells with cell (0,0) centered at the origin.
    pub fn unit(n_rows: usize, n_cols: usize) -> Result<Self, GridError> {
        Self::new(n_rows, n_cols, 1.0, 1.0, [0.0, 0.0])
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(GridError::EmptyGrid {
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.cell_width) || !ok(self.cell_height) {
            return Err(GridError::BadCellSize {
                width: self.cell_width,
                height: self.cell_height,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n_rows * self.n_cols
    }

    #[inline]
    pub fn node_index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        row * self.n_cols + col
    }

    #[inline]
    pub fn row_col(&self, node: usize) -> (usize, usize) {
        (node / self.n_cols, node % self.n_cols)
    }

    #[inline]
    pub fn center(&self, node: usize) -> [f64; 2] {
        let (row, col) = self.row_col(node);
        [
            self.origin[0] + col as f64 * self.cell_width,
            self.origin[1] + row as f64 * self.cell_height,
        ]
    }

    /// Smallest cell side, the length entering the CFL bound.
    pub fn min_spacing(&self) -> f64 {
        self.cell_width.min(self.cell_height)
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_width * self.cell_height
    }

    /// Relationship between two nodes of the 8-neighborhood graph.
    pub fn adjacency(&self, j: usize, k: usize) -> Adjacency {
        let (rj, cj) = self.row_col(j);
        let (rk, ck) = self.row_col(k);
        let dr = rj.abs_diff(rk);
        let dc = cj.abs_diff(ck);
        match (dr, dc) {
            (0, 0) => Adjacency::Same,
            (0, 1) => Adjacency::Horizontal,
            (1, 0) => Adjacency::Vertical,
            (1, 1) => Adjacency::Diagonal,
            _ => Adjacency::Distant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    Same,
    Horizontal,
    Vertical,
    Diagonal,
    Distant,
}

/// Flattened neighbor lists `s_j` (self plus up to eight grid neighbors).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    spec: GridSpec,
    neighbors: Vec<u32>,
    offsets: Vec<usize>,
}

impl GraphTopology {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn node_count(&self) -> usize {
        self.spec.node_count()
    }

    /// Sorted neighbor list of node `j`, including `j` itself.
    pub fn neighbors_of(&self, j: usize) -> &[u32] {
        &self.neighbors[self.offsets[j]..self.offsets[j + 1]]
    }

    /// The concatenation `s` of all neighbor lists.
    pub fn flattened(&self) -> &[u32] {
        &self.neighbors
    }

    /// Prefix sums locating each neighbor list inside [`Self::flattened`].
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Length of the flattened list, i.e. the number of local variables.
    pub fn movement_len(&self) -> usize {
        self.neighbors.len()
    }

    /// Position of the pair `(j, k)` in the flattened list.
    pub fn position(&self, j: usize, k: usize) -> Option<usize> {
        let list = self.neighbors_of(j);
        list.binary_search(&(k as u32))
            .ok()
            .map(|p| self.offsets[j] + p)
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        self.position(j, k).is_some()
    }
}

pub fn build_topology(spec: GridSpec) -> GraphTopology {
    let n = spec.node_count();
    let mut neighbors = Vec::with_capacity(9 * n);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for j in 0..n {
        let (row, col) = spec.row_col(j);
        let r0 = row.saturating_sub(1);
        let r1 = (row + 1).min(spec.n_rows - 1);
        let c0 = col.saturating_sub(1);
        let c1 = (col + 1).min(spec.n_cols - 1);
        // Row-major iteration already yields ascending node indices.
        for r in r0..=r1 {
            for c in c0..=c1 {
                neighbors.push(spec.node_index(r, c) as u32);
            }
        }
        offsets.push(neighbors.len());
    }
    GraphTopology {
        spec,
        neighbors,
        offsets,
    }
}

/// Closed-form count of one-step movements (corners, boundary, interior).
pub fn movement_count(spec: &GridSpec) -> Result<usize, GridError> {
    if spec.n_rows < 2 || spec.n_cols < 2 {
        return Err(GridError::TooSmallForMovementCount {
            n_rows: spec.n_rows,
            n_cols: spec.n_cols,
        });
    }
    let n = spec.node_count();
    let edge = spec.n_rows + spec.n_cols - 4;
    Ok(16 + 12 * edge + 9 * (n - 4 - 2 * edge))
}
