use nalgebra::DMatrix;

use super::TestdataError;
use crate::data::{DensityRaster, SnapshotSet};
use crate::grid::GridSpec;

/// Linear advection of a paraboloid bump on `[-2, 2]^2`, sampled at cell
/// centers of an `n x n` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvectionSpec {
    pub n: usize,
    pub velocity: [f64; 2],
    pub horizon: f64,
}

pub const HALF_WIDTH: f64 = 2.0;
const BUMP_HEIGHT: f64 = 0.5;

impl AdvectionSpec {
    pub fn new(n: usize) -> Self {
        AdvectionSpec {
            n,
            velocity: [0.5, 0.5],
            horizon: 2.0,
        }
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * HALF_WIDTH / self.n as f64
    }

    pub fn grid(&self) -> Result<GridSpec, TestdataError> {
        let h = self.cell_size();
        let o = -HALF_WIDTH + 0.5 * h;
        Ok(GridSpec::new(self.n, self.n, h, h, [o, o])?)
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    pub fn initial(x: [f64; 2]) -> f64 {
        (BUMP_HEIGHT - x[0] * x[0] - x[1] * x[1]).max(0.0)
    }

    pub fn exact(&self, x: [f64; 2], t: f64) -> f64 {
        Self::initial([x[0] - self.velocity[0] * t, x[1] - self.velocity[1] * t])
    }

    /// Whether the support stays inside the domain at time `t`.
    pub fn boundary_inactive(&self, t: f64) -> bool {
        let r = BUMP_HEIGHT.sqrt();
        self.velocity
            .iter()
            .all(|v| (v * t).abs() + r <= HALF_WIDTH)
    }
}

pub fn advection_exact(spec: &AdvectionSpec, t: f64) -> Result<DensityRaster, TestdataError> {
    if !spec.boundary_inactive(t) {
        return Err(TestdataError::BoundaryActive { t });
    }
    let grid = spec.grid()?;
    let values = (0..grid.node_count())
        .map(|j| spec.exact(grid.center(j), t))
        .collect();
    Ok(DensityRaster {
        grid,
        time: t,
        values,
    })
}

/// Frames at `t0 + i * dt` for `i = 0..count`.
pub fn advection_snapshots(
    spec: &AdvectionSpec,
    t0: f64,
    dt: f64,
    count: usize,
) -> Result<SnapshotSet, TestdataError> {
    let grid = spec.grid()?;
    let mut data = DMatrix::zeros(grid.node_count(), count);
    for i in 0..count {
        let r = advection_exact(spec, t0 + i as f64 * dt)?;
        for (j, v) in r.values.iter().enumerate() {
            data[(j, i)] = *v;
        }
    }
    Ok(SnapshotSet::new(data, t0, dt, Some(grid))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_peak_and_final_center() {
        // With an odd cell count a center sits exactly at the origin.
        let spec = AdvectionSpec::new(41);
        let r = advection_exact(&spec, 0.0).unwrap();
        let mid = spec.grid().unwrap().node_index(20, 20);
        assert_eq!(r.values[mid], 0.5);
        assert_eq!(spec.exact([1.0, 1.0], 2.0), 0.5);
        let r2 = advection_exact(&spec, 2.0).unwrap();
        let (best, _) = r2
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let c = spec.grid().unwrap().center(best);
        assert!((c[0] - 1.0).abs() < 0.1 && (c[1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn mass_is_nearly_constant() {
        let spec = AdvectionSpec::new(80);
        let m0 = advection_exact(&spec, 0.0).unwrap().total_mass();
        for t in [0.3, 1.0, 1.7, 2.0] {
            let m = advection_exact(&spec, t).unwrap().total_mass();
            assert!((m - m0).abs() / m0 < 5e-3);
        }
        let h = spec.cell_size();
        let integral = std::f64::consts::PI * 0.5 * 0.5 / 2.0;
        assert!((m0 * h * h - integral).abs() / integral < 5e-3);
    }

    #[test]
    fn horizon_check() {
        let spec = AdvectionSpec::new(20);
        assert!(advection_exact(&spec, 2.0).is_ok());
        assert_eq!(
            advection_exact(&spec, 2.8),
            Err(TestdataError::BoundaryActive { t: 2.8 })
        );
    }

    #[test]
    fn snapshots_are_nonnegative() {
        let s = advection_snapshots(&AdvectionSpec::new(20), 0.0, 0.1, 21).unwrap();
        assert_eq!(s.n_frames(), 21);
        assert!(s.data().iter().all(|&v| v >= 0.0));
    }
}
