//! Primal network simplex for uncapacitated transportation problems.
//!
//! Nodes `0..ns` are supplies and `ns..ns + nd` demands; every arc runs from
//! a supply to a demand. The basis is a spanning tree rooted at the last
//! demand node, whose potential is pinned to zero; this is the same as
//! dropping the last demand constraint.
//!
//! Two starting trees are available. The northwest-corner rule suits dense
//! arc sets; corner cells that are not arcs become artificial arcs, which a
//! first phase drives to zero flow. The slack start adds a slack supply and a
//! slack demand node, ships every supply to the slack demand and feeds every
//! demand from the slack supply; the first phase then minimizes slack flow.
//! On sparse arc sets this avoids long runs of artificial corner cells, and
//! when slack flow remains the same tree serves as a warm start for the
//! penalized reservoir problem.

use super::{
    check_finite, check_nonnegative, LpError, LpSolution, LpStatus, PivotRule, SlackFlow,
    TraceEntry, Unmet,
};

const NONE: u32 = u32::MAX;

/// Arcs must be sorted by `(source, target)` and free of duplicates.
#[derive(Debug, Clone, Copy)]
pub struct NetworkInput<'a> {
    pub supply: &'a [f64],
    pub demand: &'a [f64],
    pub arc_src: &'a [u32],
    pub arc_dst: &'a [u32],
    pub cost: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkOptions {
    /// Pivot cap; `None` picks a bound proportional to the problem size.
    pub max_iterations: Option<usize>,
    /// Arcs scanned per pricing block; `None` uses about `sqrt(arcs)`.
    pub block_size: Option<usize>,
    /// Consecutive degenerate pivots after which Bland's rule takes over;
    /// `None` uses `200 + 10 * nodes`. Plain degenerate runs of about twice
    /// the node count are routine on transportation problems, and Bland's
    /// rule is very slow on them.
    pub degenerate_limit: Option<usize>,
    pub start: Start,
    pub trace: bool,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            max_iterations: None,
            block_size: None,
            degenerate_limit: None,
            start: Start::NorthWest,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    NorthWest,
    /// Slack start; remaining slack flow makes the problem infeasible.
    Slack,
    /// Slack start; remaining slack flow is allowed at this cost per unit
    /// absorbed and per unit emitted, and reported in the solution.
    Reservoir(f64),
}

pub fn solve_network(
    input: &NetworkInput<'_>,
    options: &NetworkOptions,
) -> Result<LpSolution, LpError> {
    validate(input)?;
    if let Start::Reservoir(p) = options.start {
        if !(p > 0.0 && p.is_finite()) {
            return Err(LpError::NonFinite("reservoir penalty"));
        }
    }
    let mut solver = Solver::new(input, options);
    Ok(solver.run(input))
}

fn validate(input: &NetworkInput<'_>) -> Result<(), LpError> {
    let m = input.cost.len();
    if input.arc_src.len() != m || input.arc_dst.len() != m {
        return Err(LpError::Dimension(format!(
            "{} sources, {} targets and {} costs",
            input.arc_src.len(),
            input.arc_dst.len(),
            m
        )));
    }
    if input.supply.is_empty() || input.demand.is_empty() {
        return Err(LpError::Dimension("empty supply or demand".into()));
    }
    check_finite(input.supply, "supply")?;
    check_finite(input.demand, "demand")?;
    check_finite(input.cost, "cost")?;
    check_nonnegative(input.supply, "supply")?;
    check_nonnegative(input.demand, "demand")?;
    let (ns, nd) = (input.supply.len(), input.demand.len());
    for a in 0..m {
        let (s, d) = (input.arc_src[a] as usize, input.arc_dst[a] as usize);
        if s >= ns || d >= nd {
            return Err(LpError::Dimension(format!(
                "arc {a} = ({s}, {d}) outside {ns}x{nd}"
            )));
        }
        if a > 0 {
            let prev = (input.arc_src[a - 1], input.arc_dst[a - 1]);
            if prev >= (input.arc_src[a], input.arc_dst[a]) {
                return Err(LpError::UnsortedArcs(a));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Source,
    Target,
}

struct Solver {
    ns: usize,
    nd: usize,
    root: usize,
    m_real: usize,
    /// Arcs `0..m_scan` are priced; in phase 2 the others carry no more
    /// flow than they have.
    m_scan: usize,
    /// Slack-to-slack arc of the slack start.
    slack_loop: Option<usize>,
    penalty: Option<f64>,
    tail: Vec<u32>,
    head: Vec<u32>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<u32>,
    pred: Vec<u32>,
    /// `up[v]` when the tree arc `pred[v]` points from `v` to its parent.
    up: Vec<bool>,
    depth: Vec<u32>,
    pi: Vec<f64>,
    children: Vec<Vec<u32>>,
    phase: u8,
    rule: PivotRule,
    next_arc: usize,
    block: usize,
    degenerate_limit: usize,
    max_iterations: usize,
    iterations: usize,
    objective: f64,
    trace: Option<Vec<TraceEntry>>,
    stack: Vec<u32>,
}

impl Solver {
    fn new(input: &NetworkInput<'_>, options: &NetworkOptions) -> Self {
        let ns = input.supply.len();
        let nd = input.demand.len();
        let n = ns + nd;
        let m_real = input.cost.len();
        let mut tail: Vec<u32> = input.arc_src.to_vec();
        let mut head: Vec<u32> = input.arc_dst.iter().map(|&d| d + ns as u32).collect();
        let mut flow = vec![0.0; m_real];

        let (tree_arcs, slack_loop) = match options.start {
            Start::NorthWest => (northwest(input, &mut tail, &mut head, &mut flow), None),
            Start::Slack | Start::Reservoir(_) => {
                let tree = slack_star(input, &mut tail, &mut head, &mut flow);
                (tree, Some(tail.len() - 1))
            }
        };
        let penalty = match options.start {
            Start::Reservoir(p) => Some(p),
            _ => None,
        };
        let n = if slack_loop.is_some() { n + 2 } else { n };
        let m_total = tail.len();
        let mut cost = vec![0.0; m_total];
        for a in m_real..m_total {
            cost[a] = if Some(a) == slack_loop { 0.0 } else { 1.0 };
        }
        let phase = if slack_loop.is_some()
            || (m_total > m_real && flow[m_real..].iter().any(|&f| f > 0.0))
        {
            1
        } else {
            cost[..m_real].copy_from_slice(input.cost);
            for c in cost[m_real..].iter_mut() {
                *c = 0.0;
            }
            2
        };

        let mut in_tree = vec![false; m_total];
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &a in &tree_arcs {
            in_tree[a] = true;
            adj[tail[a] as usize].push(a as u32);
            adj[head[a] as usize].push(a as u32);
        }
        let root = n - 1;
        let mut parent = vec![NONE; n];
        let mut pred = vec![NONE; n];
        let mut up = vec![false; n];
        let mut depth = vec![0u32; n];
        let mut pi = vec![0.0; n];
        let mut children: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut visited = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            for &a in &adj[v] {
                let a = a as usize;
                let (t, h) = (tail[a] as usize, head[a] as usize);
                let w = if t == v { h } else { t };
                if visited[w] {
                    continue;
                }
                visited[w] = true;
                parent[w] = v as u32;
                pred[w] = a as u32;
                up[w] = t == w;
                depth[w] = depth[v] + 1;
                pi[w] = if up[w] { pi[v] - cost[a] } else { pi[v] + cost[a] };
                children[v].push(w as u32);
                queue.push_back(w);
            }
        }
        debug_assert!(visited.iter().all(|&x| x));

        let block = options
            .block_size
            .unwrap_or_else(|| ((m_real as f64).sqrt() as usize).max(10))
            .clamp(1, m_real.max(1));
        let max_iterations = options
            .max_iterations
            .unwrap_or(100 * n + 2 * m_real + 1000);
        let objective = (0..m_total).map(|a| cost[a] * flow[a]).sum();
        Solver {
            ns,
            nd,
            root,
            m_real,
            m_scan: m_real,
            slack_loop,
            penalty,
            tail,
            head,
            cost,
            flow,
            in_tree,
            parent,
            pred,
            up,
            depth,
            pi,
            children,
            phase,
            rule: PivotRule::Dantzig,
            next_arc: 0,
            block,
            degenerate_limit: options
                .degenerate_limit
                .unwrap_or(200 + 10 * n)
                .max(1),
            max_iterations,
            iterations: 0,
            objective,
            trace: options.trace.then(Vec::new),
            stack: Vec::new(),
        }
    }

    #[inline]
    fn reduced_cost(&self, a: usize) -> f64 {
        self.cost[a] + self.pi[self.tail[a] as usize] - self.pi[self.head[a] as usize]
    }

    fn pricing_tolerance(&self) -> f64 {
        let cmax = self.cost[..self.m_scan]
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        1e-11 * (1.0 + cmax)
    }

    fn find_entering(&mut self, eps: f64) -> Option<usize> {
        let m = self.m_scan;
        if m == 0 {
            return None;
        }
        if self.rule == PivotRule::Bland {
            return (0..m).find(|&a| !self.in_tree[a] && self.reduced_cost(a) < -eps);
        }
        let mut best = None;
        let mut best_rc = -eps;
        let mut count = 0;
        let mut a = self.next_arc;
        for _ in 0..m {
            if !self.in_tree[a] {
                let rc = self.reduced_cost(a);
                if rc < best_rc {
                    best_rc = rc;
                    best = Some(a);
                }
            }
            a += 1;
            if a == m {
                a = 0;
            }
            count += 1;
            if count == self.block {
                if best.is_some() {
                    self.next_arc = a;
                    return best;
                }
                count = 0;
            }
        }
        self.next_arc = a;
        best
    }

    /// Capacity left on tree arc `a` when the cycle pushes flow along it
    /// (`forward`) or against it.
    #[inline]
    fn residual(&self, a: usize, forward: bool) -> f64 {
        if forward {
            if a >= self.m_scan && self.phase == 2 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.flow[a]
        }
    }

    fn join(&self, mut u: usize, mut w: usize) -> usize {
        while u != w {
            if self.depth[u] > self.depth[w] {
                u = self.parent[u] as usize;
            } else if self.depth[w] > self.depth[u] {
                w = self.parent[w] as usize;
            } else {
                u = self.parent[u] as usize;
                w = self.parent[w] as usize;
            }
        }
        u
    }

    /// Returns `(step, leaving node, side)`.
    fn find_leaving(&self, s: usize, d: usize, join: usize) -> (f64, usize, Side) {
        let mut delta = f64::INFINITY;
        let mut leave = NONE as usize;
        let mut side = Side::Source;
        let mut leave_arc = usize::MAX;
        let bland = self.rule == PivotRule::Bland;
        let mut v = s;
        while v != join {
            let a = self.pred[v] as usize;
            let r = self.residual(a, !self.up[v]);
            if r < delta || (bland && r == delta && a < leave_arc) {
                delta = r;
                leave = v;
                side = Side::Source;
                leave_arc = a;
            }
            v = self.parent[v] as usize;
        }
        let mut v = d;
        while v != join {
            let a = self.pred[v] as usize;
            let r = self.residual(a, self.up[v]);
            let better = if bland {
                r < delta || (r == delta && a < leave_arc)
            } else {
                r <= delta
            };
            if better {
                delta = r;
                leave = v;
                side = Side::Target;
                leave_arc = a;
            }
            v = self.parent[v] as usize;
        }
        (delta, leave, side)
    }

    fn push_flow(&mut self, e: usize, s: usize, d: usize, join: usize, theta: f64) {
        if theta == 0.0 {
            return;
        }
        self.flow[e] += theta;
        let mut v = s;
        while v != join {
            let a = self.pred[v] as usize;
            if self.up[v] {
                self.flow[a] = (self.flow[a] - theta).max(0.0);
            } else {
                self.flow[a] += theta;
            }
            v = self.parent[v] as usize;
        }
        let mut v = d;
        while v != join {
            let a = self.pred[v] as usize;
            if self.up[v] {
                self.flow[a] += theta;
            } else {
                self.flow[a] = (self.flow[a] - theta).max(0.0);
            }
            v = self.parent[v] as usize;
        }
    }

    fn remove_child(&mut self, p: usize, c: u32) {
        let list = &mut self.children[p];
        if let Some(pos) = list.iter().position(|&x| x == c) {
            list.swap_remove(pos);
        }
    }

    fn update_tree(&mut self, e: usize, s: usize, d: usize, leave: usize, side: Side) {
        let leaving_arc = self.pred[leave] as usize;
        self.in_tree[leaving_arc] = false;
        self.in_tree[e] = true;
        self.flow[leaving_arc] = 0.0;
        let (q, p_new, q_up) = match side {
            Side::Source => (s, d, true),
            Side::Target => (d, s, false),
        };
        let mut v = q;
        let mut np = p_new;
        let mut na = e as u32;
        let mut nu = q_up;
        loop {
            let w = self.parent[v] as usize;
            let wa = self.pred[v];
            let wu = self.up[v];
            self.remove_child(w, v as u32);
            self.parent[v] = np as u32;
            self.pred[v] = na;
            self.up[v] = nu;
            self.children[np].push(v as u32);
            if v == leave {
                break;
            }
            np = v;
            na = wa;
            nu = !wu;
            v = w;
        }
        self.refresh_subtree(q);
    }

    /// Recomputes depth and potential below (and including) `q` from its
    /// parent.
    fn refresh_subtree(&mut self, q: usize) {
        let mut stack = std::mem::take(&mut self.stack);
        stack.clear();
        stack.push(q as u32);
        while let Some(v) = stack.pop() {
            let v = v as usize;
            let p = self.parent[v];
            if p != NONE {
                let p = p as usize;
                let a = self.pred[v] as usize;
                self.depth[v] = self.depth[p] + 1;
                self.pi[v] = if self.up[v] {
                    self.pi[p] - self.cost[a]
                } else {
                    self.pi[p] + self.cost[a]
                };
            }
            stack.extend_from_slice(&self.children[v]);
        }
        self.stack = stack;
    }

    /// Runs the current phase to optimality. Returns false on hitting the
    /// iteration cap.
    fn optimize(&mut self) -> bool {
        let eps = self.pricing_tolerance();
        let mut streak = 0usize;
        self.rule = PivotRule::Dantzig;
        loop {
            if self.iterations >= self.max_iterations {
                return false;
            }
            let e = match self.find_entering(eps) {
                Some(e) => e,
                None => return true,
            };
            let rc = self.reduced_cost(e);
            let s = self.tail[e] as usize;
            let d = self.head[e] as usize;
            let join = self.join(s, d);
            let (theta, leave, side) = self.find_leaving(s, d, join);
            debug_assert!(theta.is_finite());
            self.push_flow(e, s, d, join, theta);
            let leaving_arc = self.pred[leave] as usize;
            self.update_tree(e, s, d, leave, side);
            self.iterations += 1;
            self.objective += theta * rc;
            if let Some(t) = self.trace.as_mut() {
                t.push(TraceEntry {
                    iteration: self.iterations,
                    phase: self.phase,
                    rule: self.rule,
                    entering: e,
                    leaving: leaving_arc,
                    step: theta,
                    objective: self.objective,
                });
            }
            if theta == 0.0 {
                streak += 1;
                if streak >= self.degenerate_limit {
                    self.rule = PivotRule::Bland;
                }
            } else {
                streak = 0;
                self.rule = PivotRule::Dantzig;
            }
        }
    }

    fn run(&mut self, input: &NetworkInput<'_>) -> LpSolution {
        let total: f64 = input.supply.iter().sum::<f64>().max(input.demand.iter().sum());
        let feas_tol = 1e-9 * (1.0 + total);
        let mut reservoir = false;
        if self.phase == 1 {
            if !self.optimize() {
                return self.finish(input, LpStatus::IterationLimit, None, false);
            }
            let left: f64 = (self.m_real..self.flow.len())
                .filter(|&a| Some(a) != self.slack_loop)
                .map(|a| self.flow[a])
                .sum();
            if left > feas_tol && self.penalty.is_none() {
                // With slack nodes each unrouted unit is absorbed once and
                // emitted once.
                let shortfall = if self.slack_loop.is_some() {
                    self.flow[self.m_real..self.m_real + self.ns].iter().sum()
                } else {
                    left
                };
                let unmet = self.unmet(shortfall);
                return self.finish(input, LpStatus::Infeasible, Some(unmet), false);
            }
            reservoir = left > feas_tol;
            if !reservoir {
                for a in self.m_real..self.flow.len() {
                    if Some(a) != self.slack_loop {
                        self.flow[a] = 0.0;
                    }
                }
            }
            self.phase = 2;
            self.cost[..self.m_real].copy_from_slice(input.cost);
            let penalty = if reservoir { self.penalty.unwrap_or(0.0) } else { 0.0 };
            for a in self.m_real..self.cost.len() {
                self.cost[a] = if Some(a) == self.slack_loop { 0.0 } else { penalty };
            }
            if reservoir {
                self.m_scan = self.cost.len();
            }
            self.refresh_subtree(self.root);
            self.objective = (0..self.cost.len()).map(|a| self.cost[a] * self.flow[a]).sum();
        }
        let status = if self.optimize() {
            LpStatus::Optimal
        } else {
            LpStatus::IterationLimit
        };
        self.finish(input, status, None, reservoir)
    }

    fn unmet(&self, shortfall: f64) -> Unmet {
        let mut supply_rows = Vec::new();
        let mut demand_rows = Vec::new();
        let demands = self.ns..self.ns + self.nd;
        for a in self.m_real..self.flow.len() {
            if self.flow[a] > 0.0 && Some(a) != self.slack_loop {
                let (t, h) = (self.tail[a] as usize, self.head[a] as usize);
                if t < self.ns {
                    supply_rows.push(t);
                }
                if demands.contains(&h) {
                    demand_rows.push(h - self.ns);
                }
            }
        }
        supply_rows.sort_unstable();
        supply_rows.dedup();
        demand_rows.sort_unstable();
        demand_rows.dedup();
        Unmet {
            supply_rows,
            demand_rows,
            shortfall,
        }
    }

    fn finish(
        &mut self,
        input: &NetworkInput<'_>,
        status: LpStatus,
        unmet: Option<Unmet>,
        reservoir: bool,
    ) -> LpSolution {
        let x = self.flow[..self.m_real].to_vec();
        let objective = x.iter().zip(input.cost).map(|(x, c)| x * c).sum();
        let (ns, nd) = (self.ns, self.nd);
        // Potentials relative to the last real demand, whose dual is dropped.
        let shift = self.pi[ns + nd - 1];
        let mut duals = Vec::with_capacity(ns + nd - 1);
        duals.extend((0..ns).map(|j| shift - self.pi[j]));
        duals.extend((0..nd - 1).map(|k| self.pi[ns + k] - shift));
        let slack = (reservoir && status == LpStatus::Optimal).then(|| {
            let m = self.m_real;
            SlackFlow {
                absorbed: self.flow[m..m + ns].to_vec(),
                emitted: self.flow[m + ns..m + ns + nd].to_vec(),
                supply_dual: shift - self.pi[ns + nd],
                demand_dual: self.pi[ns + nd + 1] - shift,
            }
        });
        LpSolution {
            x,
            duals,
            objective,
            status,
            iterations: self.iterations,
            unmet,
            slack,
            trace: self.trace.take().unwrap_or_default(),
        }
    }
}

/// Northwest-corner tree. Corner cells missing from the arc list are
/// appended as artificial arcs; the last cell absorbs the rounding of the
/// marginals.
fn northwest(
    input: &NetworkInput<'_>,
    tail: &mut Vec<u32>,
    head: &mut Vec<u32>,
    flow: &mut Vec<f64>,
) -> Vec<usize> {
    let ns = input.supply.len();
    let nd = input.demand.len();
    let mut offsets = vec![0usize; ns + 1];
    for &s in input.arc_src {
        offsets[s as usize + 1] += 1;
    }
    for j in 0..ns {
        offsets[j + 1] += offsets[j];
    }
    let lookup = |j: usize, k: usize| -> Option<usize> {
        let range = offsets[j]..offsets[j + 1];
        input.arc_dst[range.clone()]
            .binary_search(&(k as u32))
            .ok()
            .map(|p| range.start + p)
    };
    let mut tree_arcs = Vec::with_capacity(ns + nd - 1);
    let (mut j, mut k) = (0usize, 0usize);
    let mut rs = input.supply[0];
    let mut rd = input.demand[0];
    loop {
        let f = rs.min(rd).max(0.0);
        let a = match lookup(j, k) {
            Some(a) => a,
            None => {
                tail.push(j as u32);
                head.push((ns + k) as u32);
                flow.push(0.0);
                tail.len() - 1
            }
        };
        flow[a] = f;
        tree_arcs.push(a);
        if j == ns - 1 && k == nd - 1 {
            break;
        }
        rs -= f;
        rd -= f;
        let advance_supply = if j == ns - 1 {
            false
        } else if k == nd - 1 {
            true
        } else {
            rs <= rd
        };
        if advance_supply {
            j += 1;
            rs = input.supply[j];
        } else {
            k += 1;
            rd = input.demand[k];
        }
    }
    tree_arcs
}

/// Star tree through the slack nodes `ns + nd` (supply) and `ns + nd + 1`
/// (demand). Appends the absorbing arcs, then the emitting arcs, then the
/// slack-to-slack arc last.
fn slack_star(
    input: &NetworkInput<'_>,
    tail: &mut Vec<u32>,
    head: &mut Vec<u32>,
    flow: &mut Vec<f64>,
) -> Vec<usize> {
    let ns = input.supply.len();
    let nd = input.demand.len();
    let (rs, rd) = ((ns + nd) as u32, (ns + nd + 1) as u32);
    let first = tail.len();
    for (j, &x) in input.supply.iter().enumerate() {
        tail.push(j as u32);
        head.push(rd);
        flow.push(x);
    }
    for (k, &x) in input.demand.iter().enumerate() {
        tail.push(rs);
        head.push((ns + k) as u32);
        flow.push(x);
    }
    let ts: f64 = input.supply.iter().sum();
    let td: f64 = input.demand.iter().sum();
    tail.push(rs);
    head.push(rd);
    flow.push(ts.max(td) - td);
    (first..tail.len()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(ns: usize, nd: usize) -> (Vec<u32>, Vec<u32>) {
        let mut s = Vec::new();
        let mut d = Vec::new();
        for j in 0..ns {
            for k in 0..nd {
                s.push(j as u32);
                d.push(k as u32);
            }
        }
        (s, d)
    }

    /// Arcs `j -> j-1, j, j+1` on a path of `n` nodes with unit step costs.
    fn path_arcs(n: usize) -> (Vec<u32>, Vec<u32>, Vec<f64>) {
        let (mut s, mut d, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..n {
            for k in j.saturating_sub(1)..(j + 2).min(n) {
                s.push(j as u32);
                d.push(k as u32);
                c.push(j.abs_diff(k) as f64);
            }
        }
        (s, d, c)
    }

    #[test]
    fn slack_start_agrees_with_northwest() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (s, d, cost) = path_arcs(7);
        let mut feasible = 0;
        for _ in 0..200 {
            let supply: Vec<f64> = (0..7).map(|_| rng.random_range(0..4) as f64).collect();
            let mut demand = vec![0.0; 7];
            for (j, &m) in supply.iter().enumerate() {
                for _ in 0..m as usize {
                    let k = (j as i64 + rng.random_range(-1i64..=2)).clamp(0, 6) as usize;
                    demand[k] += 1.0;
                }
            }
            let input = NetworkInput {
                supply: &supply,
                demand: &demand,
                arc_src: &s,
                arc_dst: &d,
                cost: &cost,
            };
            let nw = solve_network(&input, &NetworkOptions::default()).unwrap();
            let slack = NetworkOptions {
                start: Start::Slack,
                ..Default::default()
            };
            let sl = solve_network(&input, &slack).unwrap();
            assert_eq!(nw.status, sl.status);
            if nw.is_optimal() {
                feasible += 1;
                assert!((nw.objective - sl.objective).abs() < 1e-12);
                assert!(sl.slack.is_none());
            } else {
                // The slack phase minimizes unrouted mass; the northwest
                // phase only certifies infeasibility.
                let (a, b) = (nw.unmet.unwrap(), sl.unmet.unwrap());
                assert!(b.shortfall <= a.shortfall + 1e-12, "{a:?} {b:?}");
                let res = NetworkOptions {
                    start: Start::Reservoir(100.0),
                    ..Default::default()
                };
                let r = solve_network(&input, &res).unwrap().slack.unwrap();
                let unrouted: f64 = r.absorbed.iter().sum();
                assert!((unrouted - b.shortfall).abs() < 1e-12, "{unrouted} vs {b:?}");
            }
        }
        assert!(feasible > 20 && feasible < 180, "{feasible} feasible");
    }

    #[test]
    fn reservoir_start_matches_explicit_reservoir() {
        // Node 3 of a path of 4 wants mass held two hops away.
        let (s, d, cost) = path_arcs(4);
        let supply = [2.0, 1.0, 0.0, 0.0];
        let demand = [0.0, 1.0, 0.5, 1.5];
        let p = 10.0;
        let input = NetworkInput {
            supply: &supply,
            demand: &demand,
            arc_src: &s,
            arc_dst: &d,
            cost: &cost,
        };
        let opts = NetworkOptions {
            start: Start::Reservoir(p),
            ..Default::default()
        };
        let sol = solve_network(&input, &opts).unwrap();
        assert!(sol.is_optimal());
        let r = sol.slack.as_ref().expect("reservoir used");

        // The same problem with the reservoir written out as node 4 on both
        // sides.
        let (mut s2, mut d2, mut c2) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..5u32 {
            for (a, (&sj, &dk)) in s.iter().zip(&d).enumerate() {
                if sj == j {
                    s2.push(sj);
                    d2.push(dk);
                    c2.push(cost[a]);
                }
            }
            for k in 0..5u32 {
                if j == 4 || k == 4 {
                    s2.push(j);
                    d2.push(k);
                    c2.push(if j == 4 && k == 4 { 0.0 } else { p });
                }
            }
        }
        let explicit = NetworkInput {
            supply: &[2.0, 1.0, 0.0, 0.0, 3.0],
            demand: &[0.0, 1.0, 0.5, 1.5, 3.0],
            arc_src: &s2,
            arc_dst: &d2,
            cost: &c2,
        };
        let full = solve_network(&explicit, &NetworkOptions::default()).unwrap();
        let unrouted: f64 = r.absorbed.iter().sum();
        let emitted: f64 = r.emitted.iter().sum();
        assert_eq!(unrouted, emitted);
        assert!((sol.objective + 2.0 * p * unrouted - full.objective).abs() < 1e-12);
        // Nothing within one hop of node 3 has mass to give.
        assert_eq!(r.emitted[3], 1.5);
        assert!((unrouted - 1.5).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn forced_two_node_plan() {
        let (s, d) = complete(2, 2);
        let cost = [0.0, 1.0, 1.0, 0.0];
        let input = NetworkInput {
            supply: &[1.0, 0.0],
            demand: &[0.0, 1.0],
            arc_src: &s,
            arc_dst: &d,
            cost: &cost,
        };
        let sol = solve_network(&input, &NetworkOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert_eq!(sol.x, vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sol.objective, 1.0);
        assert!(sol.iterations <= 2);
    }

    #[test]
    fn classic_three_by_three() {
        let (s, d) = complete(3, 3);
        let cost = [4.0, 6.0, 8.0, 5.0, 3.0, 7.0, 9.0, 2.0, 1.0];
        let input = NetworkInput {
            supply: &[10.0, 20.0, 30.0],
            demand: &[15.0, 25.0, 20.0],
            arc_src: &s,
            arc_dst: &d,
            cost: &cost,
        };
        let sol = solve_network(&input, &NetworkOptions::default()).unwrap();
        assert!(sol.is_optimal());
        // Oracle by hand: x11=10, x21=5, x22=15, x32=10, x33=20.
        assert_eq!(sol.objective, 40.0 + 25.0 + 45.0 + 20.0 + 20.0);
        for v in &sol.x {
            assert_eq!(v.fract(), 0.0);
        }
    }

    #[test]
    fn sparse_arcs_need_phase_one() {
        // Only the anti-diagonal and self arcs exist; the northwest corner
        // cell (0,0) carries flow but (0,1) is the only way out of node 0.
        let s = [0u32, 1, 1];
        let d = [1u32, 0, 1];
        let cost = [1.0, 1.0, 0.0];
        let input = NetworkInput {
            supply: &[2.0, 1.0],
            demand: &[1.0, 2.0],
            arc_src: &s,
            arc_dst: &d,
            cost: &cost,
        };
        let sol = solve_network(&input, &NetworkOptions::default()).unwrap();
        assert!(sol.is_optimal(), "{:?}", sol.status);
        assert_eq!(sol.x, vec![2.0, 1.0, 0.0]);
        assert_eq!(sol.objective, 3.0);
    }

    #[test]
    fn infeasible_reports_rows() {
        let s = [0u32, 1];
        let d = [0u32, 1];
        let cost = [0.0, 0.0];
        let input = NetworkInput {
            supply: &[1.0, 0.0],
            demand: &[0.0, 1.0],
            arc_src: &s,
            arc_dst: &d,
            cost: &cost,
        };
        let sol = solve_network(&input, &NetworkOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        let unmet = sol.unmet.unwrap();
        assert_eq!(unmet.supply_rows, vec![0]);
        assert_eq!(unmet.demand_rows, vec![1]);
        assert!((unmet.shortfall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unsorted_arcs() {
        let s = [1u32, 0];
        let d = [0u32, 0];
        let input = NetworkInput {
            supply: &[1.0, 1.0],
            demand: &[2.0],
            arc_src: &s,
            arc_dst: &d,
            cost: &[0.0, 0.0],
        };
        assert_eq!(
            solve_network(&input, &NetworkOptions::default()),
            Err(LpError::UnsortedArcs(1))
        );
    }

    #[test]
    fn trace_is_recorded_when_asked() {
        let (s, d) = complete(3, 3);
        let cost = [9.0, 2.0, 1.0, 5.0, 3.0, 7.0, 1.0, 6.0, 8.0];
        let input = NetworkInput {
            supply: &[10.0, 20.0, 30.0],
            demand: &[15.0, 25.0, 20.0],
            arc_src: &s,
            arc_dst: &d,
            cost: &cost,
        };
        let opts = NetworkOptions {
            trace: true,
            ..Default::default()
        };
        let sol = solve_network(&input, &opts).unwrap();
        assert!(sol.iterations > 0);
        assert_eq!(sol.trace.len(), sol.iterations);
        for w in sol.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
        assert!((sol.trace.last().unwrap().objective - sol.objective).abs() < 1e-9);
    }
}
