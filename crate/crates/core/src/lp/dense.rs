//! Revised simplex on a dense constraint matrix.
//!
//! Solves `min c^T x` subject to `M x = b`, `x >= 0` with an explicit basis
//! inverse that is refactored periodically. A first phase minimizes the sum
//! of artificial variables; artificials left in the basis at zero after that
//! mark redundant rows and are kept there.

use nalgebra::{DMatrix, DVector};

use super::{check_finite, LpError, LpSolution, LpStatus, PivotRule, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseOptions {
    pub max_iterations: Option<usize>,
    /// Pivots between recomputations of the basis inverse.
    pub refactor_every: usize,
    /// Consecutive degenerate pivots after which Bland's rule takes over.
    pub degenerate_limit: usize,
    pub trace: bool,
}

impl Default for DenseOptions {
    fn default() -> Self {
        DenseOptions {
            max_iterations: None,
            refactor_every: 64,
            degenerate_limit: 20,
            trace: false,
        }
    }
}

pub fn solve_dense(
    c: &[f64],
    m: &DMatrix<f64>,
    b: &[f64],
    options: &DenseOptions,
) -> Result<LpSolution, LpError> {
    let (p, n) = m.shape();
    if c.len() != n || b.len() != p {
        return Err(LpError::Dimension(format!(
            "matrix {p}x{n}, cost {}, rhs {}",
            c.len(),
            b.len()
        )));
    }
    check_finite(c, "cost")?;
    check_finite(b, "rhs")?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite("constraint matrix"));
    }
    let mut dense = Dense::new(c, m, b, options);
    Ok(dense.run())
}

struct Dense<'a> {
    c: &'a [f64],
    a: DMatrix<f64>,
    sign: Vec<f64>,
    rhs: DVector<f64>,
    p: usize,
    n: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    phase_cost: Vec<f64>,
    phase: u8,
    options: DenseOptions,
    max_iterations: usize,
    iterations: usize,
    since_refactor: usize,
    trace: Vec<TraceEntry>,
}

impl<'a> Dense<'a> {
    fn new(c: &'a [f64], m: &DMatrix<f64>, b: &[f64], options: &DenseOptions) -> Self {
        let (p, n) = m.shape();
        let sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut a = m.clone();
        for (i, s) in sign.iter().enumerate() {
            if *s < 0.0 {
                a.row_mut(i).neg_mut();
            }
        }
        let rhs = DVector::from_iterator(p, b.iter().map(|v| v.abs()));
        let mut is_basic = vec![false; n + p];
        for flag in is_basic[n..].iter_mut() {
            *flag = true;
        }
        let mut phase_cost = vec![0.0; n + p];
        for v in phase_cost[n..].iter_mut() {
            *v = 1.0;
        }
        Dense {
            c,
            a,
            sign,
            xb: rhs.clone(),
            rhs,
            p,
            n,
            basis: (n..n + p).collect(),
            is_basic,
            binv: DMatrix::identity(p, p),
            phase_cost,
            phase: 1,
            options: *options,
            max_iterations: options.max_iterations.unwrap_or(50 * (n + p) + 1000),
            iterations: 0,
            since_refactor: 0,
            trace: Vec::new(),
        }
    }

    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.n {
            self.a.column(j).clone_owned()
        } else {
            let mut e = DVector::zeros(self.p);
            e[j - self.n] = 1.0;
            e
        }
    }

    fn duals(&self) -> DVector<f64> {
        let cb = DVector::from_iterator(self.p, self.basis.iter().map(|&j| self.phase_cost[j]));
        self.binv.tr_mul(&cb)
    }

    fn phase_objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(self.xb.iter())
            .map(|(&j, x)| self.phase_cost[j] * x)
            .sum()
    }

    fn refactor(&mut self) {
        let mut bmat = DMatrix::zeros(self.p, self.p);
        for (r, &j) in self.basis.iter().enumerate() {
            bmat.set_column(r, &self.column(j));
        }
        if let Some(inv) = bmat.try_inverse() {
            self.binv = inv;
            self.xb = &self.binv * &self.rhs;
            for v in self.xb.iter_mut() {
                if *v < 0.0 && *v > -1e-12 {
                    *v = 0.0;
                }
            }
        }
        self.since_refactor = 0;
    }

    fn pivot(&mut self, q: usize, r: usize, d: &DVector<f64>) {
        let theta = self.xb[r] / d[r];
        for i in 0..self.p {
            if i != r {
                self.xb[i] -= theta * d[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-13 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = theta;
        let piv = d[r];
        let row_r = self.binv.row(r) / piv;
        for i in 0..self.p {
            if i != r && d[i] != 0.0 {
                let f = d[i];
                for col in 0..self.p {
                    self.binv[(i, col)] -= f * row_r[col];
                }
            }
        }
        self.binv.set_row(r, &row_r);
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.since_refactor += 1;
        if self.since_refactor >= self.options.refactor_every {
            self.refactor();
        }
    }

    /// Returns false when the iteration cap is hit.
    fn optimize(&mut self) -> Result<bool, ()> {
        let cmax = self.phase_cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eps = 1e-10 * (1.0 + cmax);
        let mut rule = PivotRule::Dantzig;
        let mut streak = 0;
        loop {
            if self.iterations >= self.max_iterations {
                return Ok(false);
            }
            let y = self.duals();
            let mut entering = None;
            let mut best = -eps;
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                let rc = self.phase_cost[j] - self.a.column(j).dot(&y);
                if rc < best {
                    entering = Some(j);
                    if rule == PivotRule::Bland {
                        break;
                    }
                    best = rc;
                }
            }
            let q = match entering {
                Some(q) => q,
                None => return Ok(true),
            };
            let d = &self.binv * self.a.column(q);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.p {
                if d[i] > 1e-9 {
                    let ratio = self.xb[i] / d[i];
                    let take = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio - 1e-14 {
                                true
                            } else if ratio <= best_ratio + 1e-14 {
                                match rule {
                                    PivotRule::Bland => self.basis[i] < self.basis[l],
                                    PivotRule::Dantzig => d[i] > d[l],
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if take {
                        leave = Some(i);
                        best_ratio = best_ratio.min(ratio);
                    }
                }
            }
            let r = leave.ok_or(())?;
            let leaving = self.basis[r];
            let theta = self.xb[r] / d[r];
            self.pivot(q, r, &d);
            self.iterations += 1;
            if self.options.trace {
                self.trace.push(TraceEntry {
                    iteration: self.iterations,
                    phase: self.phase,
                    rule,
                    entering: q,
                    leaving,
                    step: theta,
                    objective: self.phase_objective(),
                });
            }
            if theta.abs() <= 1e-14 {
                streak += 1;
                if streak >= self.options.degenerate_limit {
                    rule = PivotRule::Bland;
                }
            } else {
                streak = 0;
                rule = PivotRule::Dantzig;
            }
        }
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.p {
            if self.basis[r] < self.n {
                continue;
            }
            self.xb[r] = 0.0;
            let row = self.binv.row(r).clone_owned();
            let mut best = None;
            let mut best_abs = 1e-9;
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                let alpha = (&row * self.a.column(j))[0];
                if alpha.abs() > best_abs {
                    best_abs = alpha.abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                let d = &self.binv * self.a.column(j);
                self.pivot(j, r, &d);
            }
        }
    }

    fn run(&mut self) -> LpSolution {
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let status = match self.optimize() {
            Ok(false) => LpStatus::IterationLimit,
            Err(()) => LpStatus::Infeasible,
            Ok(true) => {
                if self.phase_objective() > 1e-9 * scale {
                    LpStatus::Infeasible
                } else {
                    self.drive_out_artificials();
                    self.phase = 2;
                    self.phase_cost[..self.n].copy_from_slice(self.c);
                    for v in self.phase_cost[self.n..].iter_mut() {
                        *v = 0.0;
                    }
                    self.refactor();
                    match self.optimize() {
                        Ok(true) => LpStatus::Optimal,
                        Ok(false) => LpStatus::IterationLimit,
                        Err(()) => LpStatus::Unbounded,
                    }
                }
            }
        };
        let mut x = vec![0.0; self.n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                x[j] = self.xb[r].max(0.0);
            }
        }
        let objective = x.iter().zip(self.c).map(|(x, c)| x * c).sum();
        let y = self.duals();
        let duals = y.iter().zip(&self.sign).map(|(v, s)| v * s).collect();
        LpSolution {
            x,
            duals,
            objective,
            status,
            iterations: self.iterations,
            unmet: None,
            slack: None,
            trace: std::mem::take(&mut self.trace),
        }
    }
}
