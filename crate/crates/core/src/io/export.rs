use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::grid::GridSpec;
use crate::pipeline::{significant_count, CouplingRun, FlowField, StepRecord};
use crate::transport::Flow;

pub const PLAN_HEADER: &str = "# t_index from_row from_col to_row to_col mass";
pub const ARROW_HEADER: &str =
    "# window t_start t_end from_row from_col to_row to_col from_x from_y to_x to_y mass rank significant";
pub const VELOCITY_HEADER: &str = "# window row col x y vx vy mass";

/// One line per positive flow of every step, self-loops included, so the
/// table holds the complete plans.
pub fn write_plan_table<W: Write>(
    w: &mut W,
    steps: &[StepRecord],
    grid: &GridSpec,
) -> Result<(), IoError> {
    writeln!(w, "{PLAN_HEADER}")?;
    for s in steps {
        for f in &s.plan.flows {
            let (fr, fc) = grid.row_col(f.from as usize);
            let (tr, tc) = grid.row_col(f.to as usize);
            writeln!(w, "{} {fr} {fc} {tr} {tc} {}", s.index, f.mass)?;
        }
    }
    Ok(())
}

/// Parses a plan table back into per-step flow lists sorted by `(from, to)`.
/// Steps without any line come back empty up to the largest index seen.
pub fn read_plan_table<R: BufRead>(r: R, grid: &GridSpec) -> Result<Vec<Vec<Flow>>, IoError> {
    let mut steps: Vec<Vec<Flow>> = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| IoError::Manifest {
            line: n + 1,
            reason: reason.into(),
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let mut ints = [0usize; 5];
        for (slot, t) in ints.iter_mut().zip(&tok) {
            *slot = t.parse().map_err(|_| bad("bad index"))?;
        }
        let mass: f64 = tok[5].parse().map_err(|_| bad("bad mass"))?;
        if !mass.is_finite() {
            return Err(bad("non-finite mass"));
        }
        let [step, fr, fc, tr, tc] = ints;
        if fr >= grid.n_rows || tr >= grid.n_rows || fc >= grid.n_cols || tc >= grid.n_cols {
            return Err(bad("cell outside the grid"));
        }
        if steps.len() <= step {
            steps.resize_with(step + 1, Vec::new);
        }
        steps[step].push(Flow {
            from: grid.node_index(fr, fc) as u32,
            to: grid.node_index(tr, tc) as u32,
            mass,
        });
    }
    for s in &mut steps {
        s.sort_by_key(|f| (f.from, f.to));
    }
    Ok(steps)
}

/// Aggregated arrows with coordinates; `significant` marks the top
/// `fraction` by mass within each window.
pub fn write_arrows<W: Write>(
    w: &mut W,
    field: &FlowField,
    grid: &GridSpec,
    fraction: f64,
) -> Result<(), IoError> {
    writeln!(w, "{ARROW_HEADER}")?;
    for (i, win) in field.windows.iter().enumerate() {
        let keep = significant_count(win.arrows.len(), fraction);
        for a in &win.arrows {
            let (fr, fc) = grid.row_col(a.from as usize);
            let (tr, tc) = grid.row_col(a.to as usize);
            let p = grid.center(a.from as usize);
            let q = grid.center(a.to as usize);
            writeln!(
                w,
                "{i} {} {} {fr} {fc} {tr} {tc} {} {} {} {} {} {} {}",
                win.t_start,
                win.t_end,
                p[0],
                p[1],
                q[0],
                q[1],
                a.mass,
                a.rank,
                u8::from(a.rank <= keep)
            )?;
        }
    }
    Ok(())
}

/// Node velocities of every window, skipping nodes without mass.
pub fn write_velocity<W: Write>(
    w: &mut W,
    field: &FlowField,
    grid: &GridSpec,
) -> Result<(), IoError> {
    writeln!(w, "{VELOCITY_HEADER}")?;
    for (i, win) in field.windows.iter().enumerate() {
        for (j, (v, m)) in win.velocity.iter().zip(&win.mass).enumerate() {
            if *m <= 0.0 {
                continue;
            }
            let (r, c) = grid.row_col(j);
            let x = grid.center(j);
            writeln!(w, "{i} {r} {c} {} {} {} {} {m}", x[0], x[1], v[0], v[1])?;
        }
    }
    Ok(())
}

/// Summary written next to the tables of a coupled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub kappa: usize,
    pub dt_fine: f64,
    pub rank: usize,
    /// Non-self-loop mass summed over all steps; equals the arrow file total.
    pub moved_mass: f64,
    pub injected_mass: f64,
    pub clamped_mass: f64,
    pub reservoir_steps: usize,
    pub unrouted_mass: f64,
    pub max_marginal_residual: f64,
    pub max_bookkeeping_gap: f64,
    pub mean_velocity: [f64; 2],
    pub max_speed: f64,
    pub fit_residual: f64,
}

impl RunMetrics {
    pub fn from_run(run: &CouplingRun, field: &FlowField) -> Self {
        let plans = run.plans();
        RunMetrics {
            steps: run.steps.len(),
            kappa: run.kappa,
            dt_fine: run.dt_fine,
            rank: run.model.rank(),
            moved_mass: plans.iter().map(|p| p.moved_mass()).sum(),
            injected_mass: run.steps.iter().map(|s| s.injected).sum(),
            clamped_mass: run.report.clamped_mass,
            reservoir_steps: plans.iter().filter(|p| p.used_reservoir()).count(),
            unrouted_mass: plans.iter().map(|p| p.unrouted_mass()).sum(),
            max_marginal_residual: plans.iter().map(|p| p.residual).fold(0.0, f64::max),
            max_bookkeeping_gap: run
                .steps
                .iter()
                .map(|s| s.bookkeeping_gap())
                .fold(0.0, f64::max),
            mean_velocity: field.mean_velocity(),
            max_speed: field.max_speed(),
            fit_residual: run.model.diagnostics.fit_residual,
        }
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Toml(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{build_layout, solve_sequence, Reservoir};
    use crate::testdata::{advection_snapshots, AdvectionSpec};
    use crate::transport::{BalanceRule, CostKind, ProblemKind, DEFAULT_GLOBAL_BUDGET};

    #[test]
    fn plan_table_round_trip() {
        let spec = AdvectionSpec::new(8);
        let frames = advection_snapshots(&spec, 0.0, 0.25, 4).unwrap();
        let grid = *frames.grid().unwrap();
        let layout =
            build_layout(grid, ProblemKind::Local, CostKind::Euclidean, DEFAULT_GLOBAL_BUDGET)
                .unwrap();
        let steps =
            solve_sequence(&frames, &layout, BalanceRule::Uniform, Reservoir::Auto, 1).unwrap();
        let mut buf = Vec::new();
        write_plan_table(&mut buf, &steps, &grid).unwrap();
        let back = read_plan_table(buf.as_slice(), &grid).unwrap();
        assert_eq!(back.len(), steps.len());
        for (b, s) in back.iter().zip(&steps) {
            assert_eq!(b, &s.plan.flows);
        }
    }

    #[test]
    fn plan_table_rejects_cells_outside_grid() {
        let grid = GridSpec::new(2, 2, 1.0, 1.0, [0.0, 0.0]).unwrap();
        let text = format!("{PLAN_HEADER}\n0 0 0 2 0 1.0\n");
        assert!(matches!(
            read_plan_table(text.as_bytes(), &grid),
            Err(IoError::Manifest { line: 2, .. })
        ));
    }
}
