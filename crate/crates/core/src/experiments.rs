//! End-to-end experiments on the reference datasets: advection error and
//! timing tables, Burgers reconstruction errors and presence validation.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::SnapshotSet;
use crate::dmd::{fit, DmdError, DmdModel, DmdOptions};
use crate::grid::GridSpec;
use crate::linalg::RankPolicy;
use crate::pipeline::{
    build_layout, error_dmd_reference, error_matrices, plans_to_flowfield, presence_validation_windows,
    select_dt, solve_sequence, PipelineError, Reservoir, StepRecord,
};
use crate::testdata::{
    advection_exact, advection_snapshots, burgers_solve, synth_presence, AdvectionSpec,
    BurgersSpec, PresenceSpec, TestdataError,
};
use crate::transport::{BalanceRule, CostKind, ProblemKind, DEFAULT_GLOBAL_BUDGET};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error(transparent)]
    Testdata(#[from] TestdataError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

impl From<crate::transport::TransportError> for ExperimentError {
    fn from(e: crate::transport::TransportError) -> Self {
        ExperimentError::Pipeline(e.into())
    }
}

/// Settings of the advection comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvectionSetup {
    pub rank: usize,
    pub horizon: f64,
    /// Raw snapshot spacing as a multiple of the cell size.
    pub data_step: f64,
    /// Smallest refinement of the raw spacing.
    pub min_refinement: usize,
    pub global_cost: CostKind,
    pub local_cost: CostKind,
    pub balance: BalanceRule,
    pub reservoir: Reservoir,
    pub workers: usize,
    pub run_global: bool,
}

impl Default for AdvectionSetup {
    fn default() -> Self {
        AdvectionSetup {
            rank: 20,
            horizon: 2.0,
            data_step: 0.5,
            min_refinement: 2,
            global_cost: CostKind::Penalized { epsilon: 0.1 },
            local_cost: CostKind::Euclidean,
            balance: BalanceRule::Uniform,
            reservoir: Reservoir::Auto,
            workers: 0,
            run_global: true,
        }
    }
}

/// One grid size of the advection comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionRow {
    pub n: usize,
    pub dx: f64,
    pub dt_data: f64,
    pub dt_fine: f64,
    pub snapshots: usize,
    pub steps: usize,
    pub rank: usize,
    pub e_global: Option<f64>,
    pub e_local: f64,
    pub time_global_exact: Option<Duration>,
    pub time_global_dmd: Option<Duration>,
    pub time_local_exact: Duration,
    pub time_local_dmd: Duration,
    /// Steps whose local plan needed the reservoir, exact then DMD data.
    pub reservoir_steps: (usize, usize),
    pub unrouted_mass: (f64, f64),
    pub clamped_mass: f64,
    /// Mass-weighted mean velocity of the local DMD plans over the bump.
    pub velocity: [f64; 2],
    pub max_speed: f64,
    pub max_residual: f64,
    pub max_bookkeeping_gap: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn reservoir_stats(steps: &[StepRecord]) -> (usize, f64) {
    let used: Vec<_> = steps.iter().filter(|s| s.plan.used_reservoir()).collect();
    (used.len(), used.iter().map(|s| s.plan.unrouted_mass()).sum())
}

fn plan_refs(steps: &[StepRecord]) -> Vec<&crate::transport::TransportPlan> {
    steps.iter().map(|s| &s.plan).collect()
}

/// Solves exact and DMD-reconstructed transport sequences for one grid size.
pub fn advection_row(n: usize, setup: &AdvectionSetup) -> Result<AdvectionRow, ExperimentError> {
    let spec = AdvectionSpec {
        horizon: setup.horizon,
        ..AdvectionSpec::new(n)
    };
    let grid = spec.grid()?;
    let dx = spec.cell_size();
    let dt_data = setup.data_step * dx;
    let count = (setup.horizon / dt_data).round() as usize + 1;
    let snaps = advection_snapshots(&spec, 0.0, dt_data, count)?;
    let rank = setup.rank.min(count - 1);
    let model = fit(&snaps, &DmdOptions::with_rank(rank))?;
    let (dt_fine, kappa) = select_dt(spec.speed(), &grid, dt_data, setup.min_refinement);
    let (dmd_frames, report) = model.interpolate_series(snaps.t0(), snaps.t_end(), dt_fine)?;
    let fine = kappa * (count - 1) + 1;
    let mut exact = DMatrix::zeros(grid.node_count(), fine);
    for i in 0..fine {
        let r = advection_exact(&spec, i as f64 * dt_fine)?;
        exact.set_column(i, &nalgebra::DVector::from_vec(r.values));
    }
    let exact_frames = SnapshotSet::new(exact, 0.0, dt_fine, Some(grid))?;

    let local = build_layout(grid, ProblemKind::Local, setup.local_cost, DEFAULT_GLOBAL_BUDGET)?;
    let (le, t_le) = timed(|| {
        solve_sequence(&exact_frames, &local, setup.balance, setup.reservoir, setup.workers)
    });
    let le = le?;
    let (ld, t_ld) = timed(|| {
        solve_sequence(&dmd_frames, &local, setup.balance, setup.reservoir, setup.workers)
    });
    let ld = ld?;
    let e_local = error_matrices(&plan_refs(&le), &plan_refs(&ld))?;

    let mut all: Vec<&StepRecord> = le.iter().chain(&ld).collect();
    let (mut e_global, mut t_ge, mut t_gd) = (None, None, None);
    let global_steps;
    if setup.run_global {
        let global = build_layout(grid, ProblemKind::Global, setup.global_cost, DEFAULT_GLOBAL_BUDGET)?;
        let (ge, t) = timed(|| {
            solve_sequence(&exact_frames, &global, setup.balance, Reservoir::Off, setup.workers)
        });
        let ge = ge?;
        t_ge = Some(t);
        let (gd, t) = timed(|| {
            solve_sequence(&dmd_frames, &global, setup.balance, Reservoir::Off, setup.workers)
        });
        let gd = gd?;
        t_gd = Some(t);
        e_global = Some(error_matrices(&plan_refs(&ge), &plan_refs(&gd))?);
        global_steps = (ge, gd);
        all.extend(global_steps.0.iter().chain(&global_steps.1));
    }

    let field = plans_to_flowfield(&ld, &grid, 1, dt_fine)?;
    let velocity = support_velocity(&field, 1e-3);
    let (re, ue) = reservoir_stats(&le);
    let (rd, ud) = reservoir_stats(&ld);
    Ok(AdvectionRow {
        n,
        dx,
        dt_data,
        dt_fine,
        snapshots: count,
        steps: fine - 1,
        rank: model.rank(),
        e_global,
        e_local,
        time_global_exact: t_ge,
        time_global_dmd: t_gd,
        time_local_exact: t_le,
        time_local_dmd: t_ld,
        reservoir_steps: (re, rd),
        unrouted_mass: (ue, ud),
        clamped_mass: report.clamped_mass,
        velocity,
        max_speed: field.max_speed(),
        max_residual: all.iter().map(|s| s.plan.residual).fold(0.0, f64::max),
        max_bookkeeping_gap: all.iter().map(|s| s.bookkeeping_gap()).fold(0.0, f64::max),
    })
}

/// Mass-weighted mean velocity over nodes carrying at least `threshold`
/// times the largest node mass of their window.
pub fn support_velocity(field: &crate::pipeline::FlowField, threshold: f64) -> [f64; 2] {
    let mut acc = [0.0; 2];
    let mut weight = 0.0;
    for w in &field.windows {
        let peak = w.mass.iter().cloned().fold(0.0, f64::max);
        for (v, &m) in w.velocity.iter().zip(&w.mass) {
            if m > 0.0 && m >= threshold * peak {
                acc[0] += m * v[0];
                acc[1] += m * v[1];
                weight += m;
            }
        }
    }
    if weight > 0.0 {
        [acc[0] / weight, acc[1] / weight]
    } else {
        [0.0; 2]
    }
}

pub fn advection_table(ns: &[usize], setup: &AdvectionSetup) -> Result<Vec<AdvectionRow>, ExperimentError> {
    ns.iter().map(|&n| advection_row(n, setup)).collect()
}

/// Published `(N, E^G, E^L)` of the advection comparison.
pub const REFERENCE_TABLE1: [(usize, f64, f64); 3] =
    [(20, 0.185, 0.030), (30, 0.159, 0.028), (40, 0.122, 0.020)];

/// Published value for grid size `n`, if any.
pub fn reference_errors(n: usize) -> Option<(f64, f64)> {
    REFERENCE_TABLE1
        .iter()
        .find(|r| r.0 == n)
        .map(|r| (r.1, r.2))
}

/// Error table: `N, dx, dt, E^G, E^L` with published values alongside.
pub struct ErrorTable<'a>(pub &'a [AdvectionRow]);

impl fmt::Display for ErrorTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "N", "dx", "Dt", "dt", "E^G", "E^L", "ref E^G", "ref E^L"
        )?;
        for r in self.0 {
            let eg = r.e_global.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into());
            let (rg, rl) = reference_errors(r.n)
                .map(|(g, l)| (format!("{g:.3}"), format!("{l:.3}")))
                .unwrap_or_else(|| ("-".into(), "-".into()));
            writeln!(
                f,
                "{:>4} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8.4} {:>8} {:>8}",
                r.n, r.dx, r.dt_data, r.dt_fine, eg, r.e_local, rg, rl
            )?;
        }
        Ok(())
    }
}

/// Timing table: total solve time per formulation and data source.
pub struct TimingTable<'a>(pub &'a [AdvectionRow]);

impl fmt::Display for TimingTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4} {:>14} {:>14} {:>14} {:>14}",
            "N", "global exact", "global DMD", "local exact", "local DMD"
        )?;
        let show = |d: Option<Duration>| {
            d.map(|d| format!("{:.3} s", d.as_secs_f64()))
                .unwrap_or_else(|| "-".into())
        };
        for r in self.0 {
            writeln!(
                f,
                "{:>4} {:>14} {:>14} {:>14} {:>14}",
                r.n,
                show(r.time_global_exact),
                show(r.time_global_dmd),
                show(Some(r.time_local_exact)),
                show(Some(r.time_local_dmd))
            )?;
        }
        Ok(())
    }
}

/// Burgers reconstruction study.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersStudy {
    pub reference_dt: f64,
    pub times: Vec<f64>,
    pub spacings: Vec<f64>,
    pub rank: usize,
    /// `E^DMD` per dataset spacing.
    pub errors: Vec<f64>,
    /// `E^DMD(t)` on the reference times, per dataset spacing.
    pub series: Vec<Vec<f64>>,
    /// Singular values of the finest dataset's input matrix.
    pub spectrum: Vec<f64>,
    /// `E^DMD` of the finest dataset for ranks `1..=ranks.len()`.
    pub rank_errors: Vec<f64>,
}

pub const BURGERS_SPACINGS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

pub fn burgers_study(
    spec: &BurgersSpec,
    spacings: &[f64],
    reference_dt: f64,
    rank: usize,
    max_rank: usize,
) -> Result<BurgersStudy, ExperimentError> {
    let reference = burgers_solve(spec, reference_dt)?;
    let times = reference.times();
    let mut errors = Vec::new();
    let mut series = Vec::new();
    let mut finest: Option<SnapshotSet> = None;
    for &dt in spacings {
        let step = (dt / reference_dt).round() as usize;
        let data = reference.subsample(step.max(1))?;
        let model = fit(&data, &DmdOptions::with_rank(rank))?;
        let e = error_dmd_reference(reference.data(), &model.evaluate_many(&times))?;
        errors.push(e.total);
        series.push(e.series);
        if finest.as_ref().map_or(true, |f| f.n_frames() < data.n_frames()) {
            finest = Some(data);
        }
    }
    let finest = finest.ok_or(PipelineError::EmptyReference("no dataset spacings"))?;
    let mut spectrum = Vec::new();
    let mut rank_errors = Vec::new();
    for r in 1..=max_rank.min(finest.n_frames() - 1) {
        let model = fit(&finest, &DmdOptions::with_rank(r))?;
        rank_errors.push(error_dmd_reference(reference.data(), &model.evaluate_many(&times))?.total);
        spectrum = model.diagnostics.spectrum;
    }
    Ok(BurgersStudy {
        reference_dt,
        times,
        spacings: spacings.to_vec(),
        rank,
        errors,
        series,
        spectrum,
        rank_errors,
    })
}

impl BurgersStudy {
    /// Pairs `(error at a training time, mean error at the adjacent
    /// midpoints)` for dataset `i`, when its midpoints lie on the
    /// reference grid.
    pub fn dip_pairs(&self, i: usize) -> Option<Vec<(f64, f64)>> {
        let step = (self.spacings[i] / self.reference_dt).round() as usize;
        if step < 2 || step % 2 != 0 {
            return None;
        }
        let s = &self.series[i];
        let h = step / 2;
        let pairs = (0..s.len())
            .step_by(step)
            .filter_map(|j| {
                let left = j.checked_sub(h).map(|k| s[k]);
                let right = s.get(j + h).copied();
                let m = match (left, right) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => return None,
                };
                Some((s[j], m))
            })
            .collect();
        Some(pairs)
    }

    /// Median error at the training times of dataset `i` and median of the
    /// adjacent midpoint errors.
    pub fn snapshot_dip(&self, i: usize) -> Option<(f64, f64)> {
        let pairs = self.dip_pairs(i)?;
        let at = pairs.iter().map(|p| p.0).collect();
        let mid = pairs.iter().map(|p| p.1).collect();
        Some((median(at), median(mid)))
    }

    /// Number of rank steps where the error grows.
    pub fn rank_inversions(&self) -> usize {
        self.rank_errors.windows(2).filter(|w| w[1] > w[0]).count()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl fmt::Display for BurgersStudy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rank {}; reference spacing {}", self.rank, self.reference_dt)?;
        writeln!(f, "{:>8} {:>6} {:>12} {:>12} {:>12}", "Dt", "width", "E^DMD", "at data", "midpoints")?;
        for (i, (&dt, &e)) in self.spacings.iter().zip(&self.errors).enumerate() {
            let width = (1.0 / dt).round() as usize + 1;
            let (a, m) = self
                .snapshot_dip(i)
                .map(|(a, m)| (format!("{a:.3e}"), format!("{m:.3e}")))
                .unwrap_or_else(|| ("-".into(), "-".into()));
            writeln!(f, "{dt:>8} {width:>6} {e:>12.4e} {a:>12} {m:>12}")?;
        }
        writeln!(f, "{:>4} {:>12} {:>12}", "r", "sigma_r", "E^DMD")?;
        for (r, e) in self.rank_errors.iter().enumerate() {
            let s = self.spectrum.get(r).copied().unwrap_or(f64::NAN);
            writeln!(f, "{:>4} {s:>12.4e} {e:>12.4e}", r + 1)?;
        }
        Ok(())
    }
}

/// Half-data reconstruction error of synthetic presence rasters, one model
/// per day.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceCheck {
    pub days: usize,
    pub noise: f64,
    pub rank: usize,
    pub error: f64,
}

pub fn presence_check(
    grid: &GridSpec,
    days: usize,
    seed: u64,
    spec: &PresenceSpec,
    rank: RankPolicy,
) -> Result<PresenceCheck, ExperimentError> {
    let data = synth_presence(grid, days, seed, spec)?;
    let (error, models) = presence_validation_windows(
        &data,
        spec.frames_per_day,
        &DmdOptions {
            rank,
            ..Default::default()
        },
    )?;
    Ok(PresenceCheck {
        days,
        noise: spec.noise,
        rank: models.iter().map(DmdModel::rank).max().unwrap_or(0),
        error,
    })
}
