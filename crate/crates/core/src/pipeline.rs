//! DMD interpolation coupled with per-step transport solves.
//!
//! Raw snapshots spaced `dt_data` apart are fitted once, the model is
//! evaluated on a finer grid with step `dt_fine = dt_data / kappa` chosen so
//! that mass moves at most one cell per step, and one transportation problem
//! is solved per fine step.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SnapshotSet};
use crate::dmd::{fit, DmdError, DmdModel, DmdOptions, InterpolationReport, ModeScaling};
use crate::grid::{build_topology, Adjacency, GridSpec};
use crate::linalg::RankPolicy;
use crate::transport::{
    assemble_global, assemble_local, balance_mass_with, BalanceRule, CostKind, Flow, LighterSide,
    ProblemKind, SolveOptions, TransportError, TransportLayout, TransportPlan,
    DEFAULT_GLOBAL_BUDGET,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("transport step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: TransportError,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("snapshots carry no grid")]
    NoGrid,
    #[error("mass bookkeeping off by {gap} at step {step}")]
    Bookkeeping { step: usize, gap: f64 },
    #[error("step {step} moves mass from node {from} to non-adjacent node {to}")]
    Cfl { step: usize, from: u32, to: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty reference: {0}")]
    EmptyReference(&'static str),
    #[error("worker pool: {0}")]
    Workers(String),
}

/// Handling of local problems that have no feasible plan.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Reservoir {
    /// Infeasibility is an error.
    #[default]
    Off,
    /// Fall back to the reservoir with
    /// [`TransportLayout::default_reservoir_penalty`].
    Auto,
    /// Fall back to the reservoir with this per-unit penalty.
    Penalty(f64),
}

impl Reservoir {
    pub fn penalty(&self, layout: &TransportLayout) -> Option<f64> {
        match *self {
            Reservoir::Off => None,
            Reservoir::Auto => Some(layout.default_reservoir_penalty()),
            Reservoir::Penalty(p) => Some(p),
        }
    }
}

impl fmt::Display for Reservoir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reservoir::Off => f.write_str("off"),
            Reservoir::Auto => f.write_str("auto"),
            Reservoir::Penalty(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for Reservoir {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Reservoir::Off),
            "auto" => Ok(Reservoir::Auto),
            _ => match s.parse::<f64>() {
                Ok(p) if p > 0.0 && p.is_finite() => Ok(Reservoir::Penalty(p)),
                _ => Err(format!("expected off, auto or a positive penalty, got {s:?}")),
            },
        }
    }
}

impl Serialize for Reservoir {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Reservoir {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    /// Bound on the speed of mass, in grid length units per time unit.
    pub v_max: f64,
    /// Spacing of the raw snapshots; `None` takes it from the snapshots.
    pub dt_data: Option<f64>,
    pub rank: RankPolicy,
    pub scaling: ModeScaling,
    pub cost: CostKind,
    pub mode: ProblemKind,
    pub balance: BalanceRule,
    pub reservoir: Reservoir,
    /// Fine steps merged into one reporting window.
    pub aggregation_window: usize,
    /// Smallest accepted refinement factor.
    pub min_refinement: usize,
    /// Solver threads; 0 lets the thread pool decide.
    pub workers: usize,
    /// Cap on global problem variables.
    pub global_budget: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            v_max: 1.0,
            dt_data: None,
            rank: RankPolicy::default(),
            scaling: ModeScaling::default(),
            cost: CostKind::Euclidean,
            mode: ProblemKind::Local,
            balance: BalanceRule::Uniform,
            reservoir: Reservoir::Off,
            aggregation_window: 1,
            min_refinement: 1,
            workers: 0,
            global_budget: DEFAULT_GLOBAL_BUDGET,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return Err(PipelineError::Config(format!("v_max = {}", self.v_max)));
        }
        if let Some(dt) = self.dt_data {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(PipelineError::Config(format!("dt_data = {dt}")));
            }
        }
        if self.aggregation_window == 0 {
            return Err(PipelineError::Config("aggregation window 0".into()));
        }
        if let Reservoir::Penalty(p) = self.reservoir {
            if !(p > 0.0) || !p.is_finite() {
                return Err(PipelineError::Config(format!("reservoir penalty {p}")));
            }
        }
        self.cost.validate()?;
        Ok(())
    }

    pub fn dmd_options(&self) -> DmdOptions {
        DmdOptions {
            rank: self.rank,
            scaling: self.scaling,
        }
    }
}

/// Refinement `(dt_fine, kappa)` with `kappa` the smallest integer that is at
/// least `min_refinement` and keeps `v_max * dt_fine` within the shorter cell
/// side.
pub fn select_dt(v_max: f64, grid: &GridSpec, dt_data: f64, min_refinement: usize) -> (f64, usize) {
    let dx = grid.min_spacing();
    let ratio = v_max * dt_data / dx;
    // Ratios that are integers up to rounding stay at that integer.
    let kappa = ((ratio * (1.0 - 1e-12)).ceil() as usize).max(min_refinement).max(1);
    (dt_data / kappa as f64, kappa)
}

/// One solved step with its mass bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    /// Time of the supply frame.
    pub t: f64,
    /// Totals before balancing.
    pub supply_total: f64,
    pub demand_total: f64,
    pub injected: f64,
    pub lighter: LighterSide,
    pub plan: TransportPlan,
}

impl StepRecord {
    /// Difference between the raw imbalance and the injected mass.
    pub fn bookkeeping_gap(&self) -> f64 {
        ((self.supply_total - self.demand_total).abs() - self.injected).abs()
    }
}

#[derive(Debug, Clone)]
pub struct CouplingRun {
    pub dt_fine: f64,
    pub kappa: usize,
    pub model: DmdModel,
    pub report: InterpolationReport,
    pub frames: SnapshotSet,
    pub layout: Arc<TransportLayout>,
    pub steps: Vec<StepRecord>,
}

impl CouplingRun {
    pub fn plans(&self) -> Vec<&TransportPlan> {
        self.steps.iter().map(|s| &s.plan).collect()
    }

    pub fn flow_field(&self, window: usize) -> Result<FlowField, PipelineError> {
        plans_to_flowfield(&self.steps, self.layout.grid(), window, self.dt_fine)
    }
}

pub fn build_layout(
    grid: GridSpec,
    mode: ProblemKind,
    cost: CostKind,
    budget: usize,
) -> Result<Arc<TransportLayout>, PipelineError> {
    let layout = match mode {
        ProblemKind::Global => TransportLayout::global(grid, cost, budget)?,
        ProblemKind::Local => TransportLayout::local(Arc::new(build_topology(grid)), cost)?,
    };
    Ok(Arc::new(layout))
}

/// Solves one transportation problem per consecutive frame pair, in time
/// order.
pub fn solve_sequence(
    frames: &SnapshotSet,
    layout: &Arc<TransportLayout>,
    balance: BalanceRule,
    reservoir: Reservoir,
    workers: usize,
) -> Result<Vec<StepRecord>, PipelineError> {
    if frames.n_states() != layout.node_count() {
        return Err(PipelineError::Shape(format!(
            "{} states per frame for {} nodes",
            frames.n_states(),
            layout.node_count()
        )));
    }
    let options = SolveOptions {
        reservoir: reservoir.penalty(layout),
        ..Default::default()
    };
    let steps = frames.n_frames() - 1;
    let solve = |i: usize| -> Result<StepRecord, PipelineError> {
        let t = frames.time(i);
        let (s, d, report) = balance_mass_with(frames.frame_slice(i), frames.frame_slice(i + 1), balance);
        let wrap = |source| PipelineError::Step { step: i, t, source };
        let problem = match layout.kind() {
            ProblemKind::Global => assemble_global(layout, &s, &d),
            ProblemKind::Local => assemble_local(layout, &s, &d),
        }
        .map_err(wrap)?;
        let plan = crate::transport::solve_transport(&problem, &options).map_err(wrap)?;
        let record = StepRecord {
            index: i,
            t,
            supply_total: report.supply_total,
            demand_total: report.demand_total,
            injected: report.injected,
            lighter: report.side,
            plan,
        };
        let gap = record.bookkeeping_gap();
        if gap > 1e-9 * record.supply_total.max(record.demand_total).max(1.0) {
            return Err(PipelineError::Bookkeeping { step: i, gap });
        }
        if layout.kind() == ProblemKind::Local {
            let grid = layout.grid();
            for f in &record.plan.flows {
                if grid.adjacency(f.from as usize, f.to as usize) == Adjacency::Distant {
                    return Err(PipelineError::Cfl {
                        step: i,
                        from: f.from,
                        to: f.to,
                    });
                }
            }
        }
        Ok(record)
    };
    let run = || (0..steps).into_par_iter().map(solve).collect::<Result<Vec<_>, _>>();
    if workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::Workers(e.to_string()))?
            .install(run)
    }
}

/// Fits DMD to the raw snapshots, reconstructs the fine frames and solves
/// one transport problem per fine step.
pub fn run_coupling(
    snapshots: &SnapshotSet,
    config: &CouplingConfig,
) -> Result<CouplingRun, PipelineError> {
    config.validate()?;
    snapshots.grid().ok_or(PipelineError::NoGrid)?;
    if let Some(dt) = config.dt_data {
        if (dt - snapshots.dt()).abs() > 1e-9 * dt {
            return Err(PipelineError::Config(format!(
                "dt_data = {dt} but snapshots are {} apart",
                snapshots.dt()
            )));
        }
    }
    let model = fit(snapshots, &config.dmd_options())?;
    couple_model(model, config)
}

/// Coupling from an already fitted model over its fitted time span. The raw
/// spacing is the model's fitting step.
pub fn couple_model(model: DmdModel, config: &CouplingConfig) -> Result<CouplingRun, PipelineError> {
    config.validate()?;
    let grid = model.grid.ok_or(PipelineError::NoGrid)?;
    let (dt_fine, kappa) = select_dt(config.v_max, &grid, model.dt_fit, config.min_refinement);
    let (frames, report) = model.interpolate_series(model.t0, model.t_end, dt_fine)?;
    log::info!(
        "coupling: kappa = {kappa}, dt_fine = {dt_fine}, {} steps, rank {}",
        frames.n_frames() - 1,
        model.rank()
    );
    let layout = build_layout(grid, config.mode, config.cost, config.global_budget)?;
    let steps = solve_sequence(&frames, &layout, config.balance, config.reservoir, config.workers)?;
    Ok(CouplingRun {
        dt_fine,
        kappa,
        model,
        report,
        frames,
        layout,
        steps,
    })
}

/// Aggregated movement between two nodes over a reporting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrow {
    pub from: u32,
    pub to: u32,
    pub mass: f64,
    /// 1 for the heaviest arrow of the window.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowWindow {
    pub first_step: usize,
    pub steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Non-self-loop movements sorted by `(from, to)`.
    pub arrows: Vec<Arrow>,
    /// Per-node velocity estimate, averaged over the steps in which the node
    /// carries mass.
    pub velocity: Vec<[f64; 2]>,
    /// Per-node supply averaged over the window.
    pub mass: Vec<f64>,
}

impl FlowWindow {
    /// Arrows in the top `fraction` by mass, at least one when any exist.
    pub fn significant(&self, fraction: f64) -> Vec<&Arrow> {
        let keep = significant_count(self.arrows.len(), fraction);
        self.arrows.iter().filter(|a| a.rank <= keep).collect()
    }
}

pub const DEFAULT_SIGNIFICANT_FRACTION: f64 = 0.05;

pub fn significant_count(arrows: usize, fraction: f64) -> usize {
    if arrows == 0 {
        0
    } else {
        ((arrows as f64 * fraction).ceil() as usize).clamp(1, arrows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub dt_fine: f64,
    pub window: usize,
    pub windows: Vec<FlowWindow>,
}

impl FlowField {
    /// Mass-weighted mean velocity over all windows and nodes.
    pub fn mean_velocity(&self) -> [f64; 2] {
        let mut acc = [0.0; 2];
        let mut weight = 0.0;
        for w in &self.windows {
            for (v, m) in w.velocity.iter().zip(&w.mass) {
                acc[0] += m * v[0];
                acc[1] += m * v[1];
                weight += m;
            }
        }
        if weight > 0.0 {
            [acc[0] / weight, acc[1] / weight]
        } else {
            [0.0; 2]
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.windows
            .iter()
            .flat_map(|w| w.velocity.iter())
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }
}

/// Merges consecutive steps into windows of `window` steps (the last one may
/// be shorter), summing movements and averaging node velocities
/// `v_j = sum_k x_jk (xi_k - xi_j) / (m_j dt)`.
pub fn plans_to_flowfield(
    steps: &[StepRecord],
    grid: &GridSpec,
    window: usize,
    dt_fine: f64,
) -> Result<FlowField, PipelineError> {
    if window == 0 {
        return Err(PipelineError::Config("aggregation window 0".into()));
    }
    let n = grid.node_count();
    let centers: Vec<[f64; 2]> = (0..n).map(|j| grid.center(j)).collect();
    let mut windows = Vec::new();
    for (w, chunk) in steps.chunks(window).enumerate() {
        let mut arrows: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
        let mut vel_sum = vec![[0.0; 2]; n];
        let mut active = vec![0usize; n];
        let mut mass = vec![0.0; n];
        for step in chunk {
            let plan = &step.plan;
            let mut supply = vec![0.0; n];
            let mut disp = vec![[0.0; 2]; n];
            for f in &plan.flows {
                let (j, k) = (f.from as usize, f.to as usize);
                supply[j] += f.mass;
                if j != k {
                    *arrows.entry((f.from, f.to)).or_insert(0.0) += f.mass;
                    disp[j][0] += f.mass * (centers[k][0] - centers[j][0]);
                    disp[j][1] += f.mass * (centers[k][1] - centers[j][1]);
                }
            }
            for &(j, m) in &plan.absorbed {
                supply[j as usize] += m;
            }
            for j in 0..n {
                mass[j] += supply[j] / chunk.len() as f64;
                if supply[j] > 0.0 {
                    active[j] += 1;
                    vel_sum[j][0] += disp[j][0] / (supply[j] * dt_fine);
                    vel_sum[j][1] += disp[j][1] / (supply[j] * dt_fine);
                }
            }
        }
        let velocity = vel_sum
            .iter()
            .zip(&active)
            .map(|(v, &c)| {
                if c == 0 {
                    [0.0; 2]
                } else {
                    [v[0] / c as f64, v[1] / c as f64]
                }
            })
            .collect();
        let mut arrows: Vec<Arrow> = arrows
            .into_iter()
            .map(|((from, to), mass)| Arrow {
                from,
                to,
                mass,
                rank: 0,
            })
            .collect();
        let mut order: Vec<usize> = (0..arrows.len()).collect();
        order.sort_by(|&a, &b| arrows[b].mass.total_cmp(&arrows[a].mass).then(a.cmp(&b)));
        for (r, &i) in order.iter().enumerate() {
            arrows[i].rank = r + 1;
        }
        let first = chunk.first().map(|s| s.index).unwrap_or(w * window);
        let t_start = chunk.first().map(|s| s.t).unwrap_or(0.0);
        windows.push(FlowWindow {
            first_step: first,
            steps: chunk.len(),
            t_start,
            t_end: t_start + chunk.len() as f64 * dt_fine,
            arrows,
            velocity,
            mass,
        });
    }
    Ok(FlowField {
        dt_fine,
        window,
        windows,
    })
}

/// `||X_E - X_D||_F / ||X_E||_F` with each plan as one column in variable
/// order. Reservoir exchanges are not variables and are left out.
pub fn error_matrices(
    exact: &[&TransportPlan],
    dmd: &[&TransportPlan],
) -> Result<f64, PipelineError> {
    if exact.len() != dmd.len() {
        return Err(PipelineError::Shape(format!(
            "{} reference plans and {} DMD plans",
            exact.len(),
            dmd.len()
        )));
    }
    if exact.iter().zip(dmd).any(|(a, b)| a.kind != b.kind) {
        return Err(PipelineError::Shape("plans of different kinds".into()));
    }
    let a: Vec<&[Flow]> = exact.iter().map(|p| p.flows.as_slice()).collect();
    let b: Vec<&[Flow]> = dmd.iter().map(|p| p.flows.as_slice()).collect();
    error_flow_lists(&a, &b)
}

/// Same metric on flow lists sorted by `(from, to)`, one list per step.
pub fn error_flow_lists(exact: &[&[Flow]], dmd: &[&[Flow]]) -> Result<f64, PipelineError> {
    if exact.len() != dmd.len() {
        return Err(PipelineError::Shape(format!(
            "{} reference steps and {} DMD steps",
            exact.len(),
            dmd.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (fa, fb) in exact.iter().zip(dmd) {
        let (mut i, mut j) = (0, 0);
        while i < fa.len() || j < fb.len() {
            let ka = fa.get(i).map(|f| (f.from, f.to));
            let kb = fb.get(j).map(|f| (f.from, f.to));
            let (x, y) = match (ka, kb) {
                (Some(p), Some(q)) if p == q => {
                    i += 1;
                    j += 1;
                    (fa[i - 1].mass, fb[j - 1].mass)
                }
                (Some(p), Some(q)) if p < q => {
                    i += 1;
                    (fa[i - 1].mass, 0.0)
                }
                (Some(_), None) => {
                    i += 1;
                    (fa[i - 1].mass, 0.0)
                }
                _ => {
                    j += 1;
                    (0.0, fb[j - 1].mass)
                }
            };
            num += (x - y) * (x - y);
            den += x * x;
        }
    }
    if den == 0.0 {
        return Err(PipelineError::EmptyReference("reference plans carry no mass"));
    }
    Ok((num / den).sqrt())
}

/// `||P_data - P_dmd||_F / ||P_data||_F`.
pub fn error_presence(data: &DMatrix<f64>, dmd: &DMatrix<f64>) -> Result<f64, PipelineError> {
    if data.shape() != dmd.shape() {
        return Err(PipelineError::Shape(format!(
            "{:?} against {:?}",
            data.shape(),
            dmd.shape()
        )));
    }
    let den = data.norm();
    if den == 0.0 {
        return Err(PipelineError::EmptyReference("presence matrix is zero"));
    }
    Ok((data - dmd).norm() / den)
}

/// Fits on every other frame and compares the reconstruction with all
/// frames. Returns the error and the fitted model.
pub fn presence_validation(
    snapshots: &SnapshotSet,
    options: &DmdOptions,
) -> Result<(f64, DmdModel), PipelineError> {
    let (e, mut models) = presence_validation_windows(snapshots, snapshots.n_frames(), options)?;
    Ok((e, models.remove(0)))
}

/// Same as [`presence_validation`] with one model per window of
/// `window_frames` frames (a day of presence data, say). The error is taken
/// over the concatenated reconstruction; a short trailing window joins the
/// one before it.
pub fn presence_validation_windows(
    snapshots: &SnapshotSet,
    window_frames: usize,
    options: &DmdOptions,
) -> Result<(f64, Vec<DmdModel>), PipelineError> {
    let n = snapshots.n_frames();
    if window_frames < 3 {
        return Err(PipelineError::Config(format!(
            "window of {window_frames} frames leaves fewer than two fit frames"
        )));
    }
    let mut recon = DMatrix::zeros(snapshots.n_states(), n);
    let mut models = Vec::new();
    let mut start = 0;
    while start < n {
        let mut count = window_frames.min(n - start);
        if n - start - count < 3 {
            count = n - start;
        }
        let window = snapshots.window(start, count)?;
        let model = fit(&window.subsample(2)?, options)?;
        let values = model.evaluate_many(&window.times());
        recon.columns_mut(start, count).copy_from(&values);
        models.push(model);
        start += count;
    }
    let e = error_presence(snapshots.data(), &recon)?;
    Ok((e, models))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceError {
    /// Relative Frobenius error over all frames.
    pub total: f64,
    /// Relative 2-norm error per frame.
    pub series: Vec<f64>,
}

pub fn error_dmd_reference(
    reference: &DMatrix<f64>,
    dmd: &DMatrix<f64>,
) -> Result<ReferenceError, PipelineError> {
    if reference.shape() != dmd.shape() {
        return Err(PipelineError::Shape(format!(
            "{:?} against {:?}",
            reference.shape(),
            dmd.shape()
        )));
    }
    let den = reference.norm();
    if den == 0.0 {
        return Err(PipelineError::EmptyReference("reference solution is zero"));
    }
    let mut series = Vec::with_capacity(reference.ncols());
    for j in 0..reference.ncols() {
        let r = reference.column(j);
        let d = r.norm();
        if d == 0.0 {
            return Err(PipelineError::EmptyReference("reference frame is zero"));
        }
        series.push((r - dmd.column(j)).norm() / d);
    }
    Ok(ReferenceError {
        total: (reference - dmd).norm() / den,
        series,
    })
}
