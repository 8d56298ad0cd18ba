//! Transportation problems between two density rasters.
//!
//! A [`TransportLayout`] fixes the variables (all node pairs for the global
//! problem, self plus one-hop neighbors for the local one) and their costs.
//! It is built once per grid and shared by every step of a run; a
//! [`TransportProblem`] adds the marginals of one step.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Adjacency, GraphTopology, GridSpec};
use crate::lp::{solve_network, LpError, LpStatus, NetworkInput, NetworkOptions, SlackFlow, Start};

/// Largest global variable count assembled without an explicit override.
pub const DEFAULT_GLOBAL_BUDGET: usize = 16_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("expected {expected} nodes, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("negative {what} {value} at node {node}")]
    Negative {
        what: &'static str,
        node: usize,
        value: f64,
    },
    #[error("marginals are not balanced: supply {supply}, demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error(
        "global problem needs {variables} variables, over the budget of {budget}; \
         use the local formulation"
    )]
    OverBudget { variables: usize, budget: usize },
    #[error("anisotropic cost is only defined between adjacent cells; use it with the local problem")]
    AnisotropicGlobal,
    #[error("invalid cost: {0}")]
    BadCost(String),
    #[error("layout is {found:?}, expected {expected:?}")]
    WrongKind {
        expected: ProblemKind,
        found: ProblemKind,
    },
    #[error(
        "infeasible: {shortfall} mass cannot be routed; supply rows {supply_rows:?}, \
         demand rows {demand_rows:?}"
    )]
    Infeasible {
        supply_rows: Vec<usize>,
        demand_rows: Vec<usize>,
        shortfall: f64,
    },
    #[error("solver stopped after {0} iterations")]
    IterationLimit(usize),
    #[error("optimality certificate failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    Euclidean,
    Penalized { epsilon: f64 },
    Anisotropic { lx: f64, ly: f64 },
}

impl CostKind {
    /// Parses `euclidean`, `penalized:EPS` or `anisotropic:LX,LY`.
    pub fn parse(s: &str) -> Result<Self, TransportError> {
        let bad = || TransportError::BadCost(format!("cannot parse cost '{s}'"));
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match (name, args) {
            ("euclidean", None) => CostKind::Euclidean,
            ("penalized", Some(a)) => CostKind::Penalized {
                epsilon: a.trim().parse().map_err(|_| bad())?,
            },
            ("anisotropic", Some(a)) => {
                let (x, y) = a.split_once(',').ok_or_else(bad)?;
                CostKind::Anisotropic {
                    lx: x.trim().parse().map_err(|_| bad())?,
                    ly: y.trim().parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        match *self {
            CostKind::Euclidean => Ok(()),
            CostKind::Penalized { epsilon } if epsilon > 0.0 && epsilon.is_finite() => Ok(()),
            CostKind::Penalized { epsilon } => Err(TransportError::BadCost(format!(
                "penalization exponent must be positive, got {epsilon}"
            ))),
            CostKind::Anisotropic { lx, ly }
                if lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite() =>
            {
                Ok(())
            }
            CostKind::Anisotropic { lx, ly } => Err(TransportError::BadCost(format!(
                "cell lengths must be positive, got {lx}x{ly}"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            CostKind::Euclidean => "euclidean".into(),
            CostKind::Penalized { epsilon } => format!("penalized:{epsilon}"),
            CostKind::Anisotropic { lx, ly } => format!("anisotropic:{lx},{ly}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostFunction {
    pub kind: CostKind,
    pub grid: GridSpec,
}

impl CostFunction {
    pub fn new(kind: CostKind, grid: GridSpec) -> Result<Self, TransportError> {
        kind.validate()?;
        Ok(CostFunction { kind, grid })
    }

    pub fn cost(&self, j: usize, k: usize) -> Result<f64, TransportError> {
        if j == k {
            return Ok(0.0);
        }
        let dist = || {
            let a = self.grid.center(j);
            let b = self.grid.center(k);
            (a[0] - b[0]).hypot(a[1] - b[1])
        };
        match self.kind {
            CostKind::Euclidean => Ok(dist()),
            CostKind::Penalized { epsilon } => Ok(dist().powf(1.0 + epsilon)),
            CostKind::Anisotropic { lx, ly } => match self.grid.adjacency(j, k) {
                Adjacency::Same => Ok(0.0),
                Adjacency::Horizontal => Ok(lx),
                Adjacency::Vertical => Ok(ly),
                Adjacency::Diagonal => Ok(lx.hypot(ly)),
                Adjacency::Distant => Err(TransportError::AnisotropicGlobal),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Global,
    Local,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(ProblemKind::Global),
            "local" => Some(ProblemKind::Local),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Global => "global",
            ProblemKind::Local => "local",
        }
    }
}

/// Variables and costs of a transportation problem on a fixed grid.
///
/// Variable `p` moves mass from node `arc_src[p]` to node `arc_dst[p]`. The
/// global order is `x_11, ..., x_1N, x_21, ...`; the local order follows the
/// flattened neighbor lists.
#[derive(Debug, Clone)]
pub struct TransportLayout {
    kind: ProblemKind,
    grid: GridSpec,
    topology: Option<Arc<GraphTopology>>,
    cost_kind: CostKind,
    arc_src: Vec<u32>,
    arc_dst: Vec<u32>,
    cost: Vec<f64>,
}

impl TransportLayout {
    pub fn global(grid: GridSpec, cost: CostKind, budget: usize) -> Result<Self, TransportError> {
        if matches!(cost, CostKind::Anisotropic { .. }) {
            return Err(TransportError::AnisotropicGlobal);
        }
        let n = grid.node_count();
        let variables = n.saturating_mul(n);
        if variables > budget {
            return Err(TransportError::OverBudget { variables, budget });
        }
        let f = CostFunction::new(cost, grid)?;
        let mut arc_src = Vec::with_capacity(variables);
        let mut arc_dst = Vec::with_capacity(variables);
        let mut c = Vec::with_capacity(variables);
        for j in 0..n {
            for k in 0..n {
                arc_src.push(j as u32);
                arc_dst.push(k as u32);
                c.push(f.cost(j, k)?);
            }
        }
        Ok(TransportLayout {
            kind: ProblemKind::Global,
            grid,
            topology: None,
            cost_kind: cost,
            arc_src,
            arc_dst,
            cost: c,
        })
    }

    pub fn local(topology: Arc<GraphTopology>, cost: CostKind) -> Result<Self, TransportError> {
        let grid = *topology.spec();
        let f = CostFunction::new(cost, grid)?;
        let len = topology.movement_len();
        let mut arc_src = Vec::with_capacity(len);
        let mut arc_dst = Vec::with_capacity(len);
        let mut c = Vec::with_capacity(len);
        for j in 0..topology.node_count() {
            for &k in topology.neighbors_of(j) {
                arc_src.push(j as u32);
                arc_dst.push(k);
                c.push(f.cost(j, k as usize)?);
            }
        }
        Ok(TransportLayout {
            kind: ProblemKind::Local,
            grid,
            topology: Some(topology),
            cost_kind: cost,
            arc_src,
            arc_dst,
            cost: c,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn topology(&self) -> Option<&Arc<GraphTopology>> {
        self.topology.as_ref()
    }

    pub fn cost_kind(&self) -> CostKind {
        self.cost_kind
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn variable_count(&self) -> usize {
        self.cost.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Node pair of variable `p`.
    pub fn pair(&self, p: usize) -> (usize, usize) {
        (self.arc_src[p] as usize, self.arc_dst[p] as usize)
    }

    pub fn arc_src(&self) -> &[u32] {
        &self.arc_src
    }

    pub fn arc_dst(&self) -> &[u32] {
        &self.arc_dst
    }

    /// Variable position of the pair `(j, k)`, if it is a variable.
    pub fn position(&self, j: usize, k: usize) -> Option<usize> {
        match &self.topology {
            None => Some(j * self.node_count() + k),
            Some(t) => t.position(j, k),
        }
    }
}

/// Materialized cost vector in variable order.
pub fn make_cost(layout: &TransportLayout) -> &[f64] {
    layout.cost()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LighterSide {
    Balanced,
    Supply,
    Demand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    pub side: LighterSide,
    /// Mass added to the lighter side.
    pub injected: f64,
    pub supply_total: f64,
    pub demand_total: f64,
}

/// Relative mass difference above which [`balance_mass`] redistributes.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

/// Where the deficit of the lighter side is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceRule {
    /// Equal share on every node of the lighter side.
    #[default]
    Uniform,
    /// Equal share on the nodes of the lighter side that carry mass.
    Support,
    /// Lighter side rescaled, so each node grows in proportion to its mass.
    Proportional,
}

impl BalanceRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(BalanceRule::Uniform),
            "support" => Some(BalanceRule::Support),
            "proportional" => Some(BalanceRule::Proportional),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BalanceRule::Uniform => "uniform",
            BalanceRule::Support => "support",
            BalanceRule::Proportional => "proportional",
        }
    }
}

/// Equalizes total masses by spreading the deficit uniformly over every node
/// of the lighter side. The heavier side is returned unchanged.
pub fn balance_mass(supply: &[f64], demand: &[f64]) -> (Vec<f64>, Vec<f64>, BalanceReport) {
    balance_mass_with(supply, demand, BalanceRule::Uniform)
}

pub fn balance_mass_with(
    supply: &[f64],
    demand: &[f64],
    rule: BalanceRule,
) -> (Vec<f64>, Vec<f64>, BalanceReport) {
    let ts: f64 = supply.iter().sum();
    let td: f64 = demand.iter().sum();
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let scale = ts.max(td);
    let mut report = BalanceReport {
        side: LighterSide::Balanced,
        injected: 0.0,
        supply_total: ts,
        demand_total: td,
    };
    if scale <= 0.0 || (ts - td).abs() <= BALANCE_TOLERANCE * scale {
        return (s, d, report);
    }
    let deficit = (ts - td).abs();
    let (lighter, light_total, side) = if ts < td {
        (&mut s, ts, LighterSide::Supply)
    } else {
        (&mut d, td, LighterSide::Demand)
    };
    let support = lighter.iter().filter(|&&v| v > 0.0).count();
    // An empty lighter side has no support to grow; fall back to all nodes.
    let rule = if support == 0 { BalanceRule::Uniform } else { rule };
    match rule {
        BalanceRule::Uniform => {
            let share = deficit / lighter.len() as f64;
            for v in lighter.iter_mut() {
                *v += share;
            }
        }
        BalanceRule::Support => {
            let share = deficit / support as f64;
            for v in lighter.iter_mut().filter(|v| **v > 0.0) {
                *v += share;
            }
        }
        BalanceRule::Proportional => {
            let factor = (light_total + deficit) / light_total;
            for v in lighter.iter_mut() {
                *v *= factor;
            }
        }
    }
    report.side = side;
    report.injected = deficit;
    (s, d, report)
}

#[derive(Debug, Clone)]
pub struct TransportProblem {
    layout: Arc<TransportLayout>,
    supply: Vec<f64>,
    demand: Vec<f64>,
}

fn assemble(
    layout: &Arc<TransportLayout>,
    supply: &[f64],
    demand: &[f64],
) -> Result<TransportProblem, TransportError> {
    let n = layout.node_count();
    for v in [supply, demand] {
        if v.len() != n {
            return Err(TransportError::Dimension {
                expected: n,
                found: v.len(),
            });
        }
    }
    for (what, v) in [("supply", supply), ("demand", demand)] {
        if let Some(node) = v.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(TransportError::Negative {
                what,
                node,
                value: v[node],
            });
        }
    }
    let ts: f64 = supply.iter().sum();
    let td: f64 = demand.iter().sum();
    if (ts - td).abs() > 1e-9 * ts.max(td).max(f64::MIN_POSITIVE) {
        return Err(TransportError::Unbalanced {
            supply: ts,
            demand: td,
        });
    }
    Ok(TransportProblem {
        layout: Arc::clone(layout),
        supply: supply.to_vec(),
        demand: demand.to_vec(),
    })
}

pub fn assemble_global(
    layout: &Arc<TransportLayout>,
    supply: &[f64],
    demand: &[f64],
) -> Result<TransportProblem, TransportError> {
    expect_kind(layout, ProblemKind::Global)?;
    assemble(layout, supply, demand)
}

pub fn assemble_local(
    layout: &Arc<TransportLayout>,
    supply: &[f64],
    demand: &[f64],
) -> Result<TransportProblem, TransportError> {
    expect_kind(layout, ProblemKind::Local)?;
    assemble(layout, supply, demand)
}

fn expect_kind(layout: &TransportLayout, expected: ProblemKind) -> Result<(), TransportError> {
    if layout.kind() != expected {
        return Err(TransportError::WrongKind {
            expected,
            found: layout.kind(),
        });
    }
    Ok(())
}

impl TransportProblem {
    pub fn layout(&self) -> &Arc<TransportLayout> {
        &self.layout
    }

    pub fn kind(&self) -> ProblemKind {
        self.layout.kind()
    }

    pub fn supply(&self) -> &[f64] {
        &self.supply
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn total_mass(&self) -> f64 {
        self.supply.iter().sum()
    }

    /// Number of constraints before the redundant row is dropped.
    pub fn constraint_count(&self) -> usize {
        2 * self.layout.node_count()
    }

    /// Explicit `(c, M, b)` with every constraint row: supply rows first,
    /// then demand rows.
    pub fn dense_form_full(&self) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
        let n = self.layout.node_count();
        let vars = self.layout.variable_count();
        let mut m = DMatrix::zeros(2 * n, vars);
        for p in 0..vars {
            let (j, k) = self.layout.pair(p);
            m[(j, p)] = 1.0;
            m[(n + k, p)] = 1.0;
        }
        let mut b = self.supply.clone();
        b.extend_from_slice(&self.demand);
        (self.layout.cost().to_vec(), m, b)
    }

    /// Same as [`Self::dense_form_full`] without the last demand row.
    pub fn dense_form(&self) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
        let (c, m, mut b) = self.dense_form_full();
        let rows = m.nrows() - 1;
        b.truncate(rows);
        (c, m.rows(0, rows).clone_owned(), b)
    }
}

/// Mass moved from one node to another in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub from: u32,
    pub to: u32,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub kind: ProblemKind,
    /// Positive flows sorted by `(from, to)`, self-loops included.
    pub flows: Vec<Flow>,
    /// Mass taken out of the grid per node by the reservoir, sorted by node.
    /// Empty unless the reservoir fallback was used.
    pub absorbed: Vec<(u32, f64)>,
    /// Mass added to the grid per node by the reservoir, sorted by node.
    pub emitted: Vec<(u32, f64)>,
    /// Transport cost of `flows`, excluding reservoir penalties.
    pub objective: f64,
    /// Largest marginal violation.
    pub residual: f64,
    /// Complementary-slackness residual of the optimality certificate.
    pub certificate: f64,
    pub iterations: usize,
}

impl TransportPlan {
    pub fn moved_mass(&self) -> f64 {
        self.flows
            .iter()
            .filter(|f| f.from != f.to)
            .map(|f| f.mass)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.flows.iter().map(|f| f.mass).sum()
    }

    pub fn is_stationary(&self) -> bool {
        self.flows.iter().all(|f| f.from == f.to)
    }

    pub fn used_reservoir(&self) -> bool {
        !self.absorbed.is_empty() || !self.emitted.is_empty()
    }

    /// Mass that entered or left through the reservoir.
    pub fn unrouted_mass(&self) -> f64 {
        self.absorbed.iter().map(|a| a.1).sum::<f64>().max(self.emitted.iter().map(|e| e.1).sum())
    }

    /// Row and column marginal violations against the given marginals,
    /// counting reservoir exchanges.
    pub fn marginal_residual(&self, supply: &[f64], demand: &[f64]) -> f64 {
        let mut rows = vec![0.0; supply.len()];
        let mut cols = vec![0.0; demand.len()];
        for f in &self.flows {
            rows[f.from as usize] += f.mass;
            cols[f.to as usize] += f.mass;
        }
        for &(j, m) in &self.absorbed {
            rows[j as usize] += m;
        }
        for &(k, m) in &self.emitted {
            cols[k as usize] += m;
        }
        let r = rows.iter().zip(supply).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(demand).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }
}

/// Flows below this fraction of `max(total mass, 1)` are dropped from plans.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    pub network: NetworkOptions,
    /// Per-unit penalty of the reservoir fallback for infeasible local
    /// problems. When set, a local problem that has no feasible plan may
    /// absorb mass anywhere into a virtual node and emit it anywhere at this
    /// cost, so the plan routes as much mass as the neighbor graph allows and
    /// reports the rest. Feasible problems are unaffected. Global problems
    /// never need it.
    pub reservoir: Option<f64>,
}

impl TransportLayout {
    /// A reservoir penalty above the cost of any path across the grid, so
    /// the fallback only uses the reservoir for mass that cannot be routed.
    pub fn default_reservoir_penalty(&self) -> f64 {
        let cmax = self.cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        (1.0 + cmax) * (self.grid.n_rows + self.grid.n_cols) as f64
    }
}

struct Certified {
    x: Vec<f64>,
    slack: Option<SlackFlow>,
    certificate: f64,
    iterations: usize,
}

fn solve_certified(
    supply: &[f64],
    demand: &[f64],
    arc_src: &[u32],
    arc_dst: &[u32],
    cost: &[f64],
    options: &NetworkOptions,
) -> Result<Certified, TransportError> {
    let input = NetworkInput {
        supply,
        demand,
        arc_src,
        arc_dst,
        cost,
    };
    let sol = solve_network(&input, options)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible | LpStatus::Unbounded => {
            let unmet = sol.unmet.unwrap_or_default();
            return Err(TransportError::Infeasible {
                supply_rows: unmet.supply_rows,
                demand_rows: unmet.demand_rows,
                shortfall: unmet.shortfall,
            });
        }
        LpStatus::IterationLimit => return Err(TransportError::IterationLimit(sol.iterations)),
    }

    let nd = demand.len();
    let total = supply.iter().sum::<f64>().max(demand.iter().sum());
    let penalty = match options.start {
        Start::Reservoir(p) => p,
        _ => 0.0,
    };
    let cmax = cost.iter().fold(penalty, |m, c| m.max(c.abs()));
    let u = &sol.duals[..supply.len()];
    let v = |k: usize| if k + 1 == nd { 0.0 } else { sol.duals[supply.len() + k] };
    let mut min_rc = 0.0f64;
    let mut slack = 0.0;
    for (p, &x) in sol.x.iter().enumerate() {
        let (j, k) = (arc_src[p] as usize, arc_dst[p] as usize);
        let rc = cost[p] - u[j] - v(k);
        min_rc = min_rc.min(rc);
        slack += x * rc.abs();
    }
    if let Some(r) = &sol.slack {
        // Absorbing, emitting and slack-to-slack arcs of the reservoir.
        for (j, &x) in r.absorbed.iter().enumerate() {
            let rc = penalty - u[j] - r.demand_dual;
            min_rc = min_rc.min(rc);
            slack += x * rc.abs();
        }
        for (k, &x) in r.emitted.iter().enumerate() {
            let rc = penalty - r.supply_dual - v(k);
            min_rc = min_rc.min(rc);
            slack += x * rc.abs();
        }
        min_rc = min_rc.min(-r.supply_dual - r.demand_dual);
    }
    let dual_scale = 1.0 + cmax;
    let certificate = slack / (dual_scale * total.max(1.0));
    if min_rc < -1e-8 * dual_scale {
        return Err(TransportError::Certificate(format!(
            "dual infeasibility {min_rc}"
        )));
    }
    if certificate > 1e-8 {
        return Err(TransportError::Certificate(format!(
            "complementary slackness residual {certificate}"
        )));
    }
    Ok(Certified {
        x: sol.x,
        slack: sol.slack,
        certificate,
        iterations: sol.iterations,
    })
}

pub fn solve_transport(
    problem: &TransportProblem,
    options: &SolveOptions,
) -> Result<TransportPlan, TransportError> {
    let layout = &problem.layout;
    let mut network = options.network;
    if layout.kind == ProblemKind::Local {
        network.start = match options.reservoir {
            Some(p) if !(p > 0.0 && p.is_finite()) => {
                return Err(TransportError::BadCost(format!("reservoir penalty {p}")));
            }
            Some(p) => Start::Reservoir(p),
            None => Start::Slack,
        };
    }
    let c = solve_certified(
        &problem.supply,
        &problem.demand,
        &layout.arc_src,
        &layout.arc_dst,
        &layout.cost,
        &network,
    )?;
    let flows = c
        .x
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(p, &x)| Flow {
            from: layout.arc_src[p],
            to: layout.arc_dst[p],
            mass: x,
        })
        .collect();
    let nonzero = |v: &[f64]| -> Vec<(u32, f64)> {
        v.iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(j, &x)| (j as u32, x))
            .collect()
    };
    let (absorbed, emitted) = match &c.slack {
        Some(r) => (nonzero(&r.absorbed), nonzero(&r.emitted)),
        None => (Vec::new(), Vec::new()),
    };
    let mut plan = TransportPlan {
        kind: layout.kind,
        flows,
        absorbed,
        emitted,
        objective: 0.0,
        residual: 0.0,
        certificate: c.certificate,
        iterations: c.iterations,
    };
    if plan.used_reservoir() {
        log::debug!(
            "local problem infeasible; reservoir carried {:.3e} of {:.3e}",
            plan.unrouted_mass(),
            problem.total_mass()
        );
    }
    // Flows at rounding level carry no information and would break
    // structural checks such as stationarity.
    let total = problem.total_mass().max(problem.demand.iter().sum());
    let floor = NOISE_FLOOR * total.max(1.0);
    plan.flows.retain(|f| f.mass > floor);
    plan.absorbed.retain(|a| a.1 > floor);
    plan.emitted.retain(|e| e.1 > floor);
    plan.objective = plan
        .flows
        .iter()
        .map(|f| {
            let p = layout
                .position(f.from as usize, f.to as usize)
                .expect("flow on a layout arc");
            f.mass * layout.cost[p]
        })
        .sum();
    plan.residual = plan.marginal_residual(&problem.supply, &problem.demand);
    let limit = 1e-7 * total.max(1.0);
    if plan.residual > limit {
        return Err(TransportError::Certificate(format!(
            "marginal residual {} above {limit}",
            plan.residual
        )));
    }
    Ok(plan)
}
