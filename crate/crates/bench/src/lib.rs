//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use flowdmd::pipeline::build_layout;
use flowdmd::testdata::{advection_snapshots, AdvectionSpec};
use flowdmd::transport::{assemble_global, assemble_local, TransportProblem, DEFAULT_GLOBAL_BUDGET};
use flowdmd::{fit, CostKind, DmdOptions, ProblemKind, SnapshotSet, TransportLayout};

/// Advection snapshots on an `n x n` grid, spaced half a cell in time.
pub fn advection(n: usize) -> SnapshotSet {
    let spec = AdvectionSpec::new(n);
    let dt = 0.5 * spec.cell_size();
    let count = (spec.horizon / dt).round() as usize + 1;
    advection_snapshots(&spec, 0.0, dt, count).expect("advection snapshots")
}

/// DMD-reconstructed fine frames of [`advection`] at twice the rate.
pub fn fine_frames(n: usize, rank: usize) -> SnapshotSet {
    let snaps = advection(n);
    let model = fit(&snaps, &DmdOptions::with_rank(rank)).expect("fit");
    let dt = 0.5 * snaps.dt();
    model
        .interpolate_series(snaps.t0(), snaps.t_end(), dt)
        .expect("interpolation")
        .0
}

pub fn layout(frames: &SnapshotSet, mode: ProblemKind) -> Arc<TransportLayout> {
    let cost = match mode {
        ProblemKind::Local => CostKind::Euclidean,
        ProblemKind::Global => CostKind::Penalized { epsilon: 0.1 },
    };
    build_layout(*frames.grid().expect("grid"), mode, cost, DEFAULT_GLOBAL_BUDGET).expect("layout")
}

/// Step `j -> j + 1` of the frames, balanced, as a transport problem.
pub fn step_problem(frames: &SnapshotSet, layout: &Arc<TransportLayout>, j: usize) -> TransportProblem {
    let (s, d, _) = flowdmd::transport::balance_mass(frames.frame_slice(j), frames.frame_slice(j + 1));
    match layout.kind() {
        ProblemKind::Local => assemble_local(layout, &s, &d),
        ProblemKind::Global => assemble_global(layout, &s, &d),
    }
    .expect("assemble")
}
