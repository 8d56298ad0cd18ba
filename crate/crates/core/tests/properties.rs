use std::sync::Arc;

use flowdmd::grid::build_topology;
use flowdmd::lp::{solve_dense, solve_network, DenseOptions, NetworkInput, NetworkOptions};
use flowdmd::pipeline::{build_layout, plans_to_flowfield, solve_sequence, Reservoir};
use flowdmd::testdata::{
    advection_exact, advection_snapshots, burgers_solve, synth_presence, AdvectionSpec,
    BurgersSpec, Integrator, PresenceSpec,
};
use flowdmd::transport::{
    assemble_global, assemble_local, balance_mass, solve_transport, TransportProblem,
    DEFAULT_GLOBAL_BUDGET,
};
use flowdmd::{
    fit, BalanceRule, CostKind, DmdOptions, GridSpec, LpStatus, ProblemKind, SnapshotSet,
    SolveOptions, TransportLayout,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn grid(rows: usize, cols: usize) -> GridSpec {
    GridSpec::new(rows, cols, 1.0, 1.0, [0.0, 0.0]).unwrap()
}

fn local_layout(g: GridSpec, cost: CostKind) -> Arc<TransportLayout> {
    Arc::new(TransportLayout::local(Arc::new(build_topology(g)), cost).unwrap())
}

fn global_layout(g: GridSpec, cost: CostKind) -> Arc<TransportLayout> {
    Arc::new(TransportLayout::global(g, cost, DEFAULT_GLOBAL_BUDGET).unwrap())
}

/// Supply with some empty nodes, and a demand obtained by pushing every
/// node's mass to random arcs of the layout, so the instance is feasible.
fn routed_instance(rng: &mut ChaCha8Rng, layout: &TransportLayout, integral: bool) -> (Vec<f64>, Vec<f64>) {
    let n = layout.node_count();
    let supply: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                0.0
            } else if integral {
                rng.random_range(1..=4) as f64
            } else {
                rng.random_range(0.0..3.0)
            }
        })
        .collect();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..layout.variable_count() {
        let (j, k) = layout.pair(p);
        out[j].push(k);
    }
    let mut demand = vec![0.0; n];
    for j in 0..n {
        if integral {
            for _ in 0..supply[j] as usize {
                demand[out[j][rng.random_range(0..out[j].len())]] += 1.0;
            }
        } else {
            let k = out[j][rng.random_range(0..out[j].len())];
            let l = out[j][rng.random_range(0..out[j].len())];
            let share = rng.random_range(0.0..=1.0);
            demand[k] += share * supply[j];
            demand[l] += supply[j] - share * supply[j];
        }
    }
    (supply, demand)
}

fn random_layout(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Arc<TransportLayout> {
    let g = grid(rows, cols);
    let cost = if rng.random_bool(0.5) {
        CostKind::Euclidean
    } else {
        CostKind::Penalized { epsilon: 0.1 }
    };
    if g.node_count() <= 16 && rng.random_bool(0.5) {
        global_layout(g, cost)
    } else {
        local_layout(g, cost)
    }
}

fn assemble(layout: &Arc<TransportLayout>, s: &[f64], d: &[f64]) -> TransportProblem {
    match layout.kind() {
        ProblemKind::Local => assemble_local(layout, s, d).unwrap(),
        ProblemKind::Global => assemble_global(layout, s, d).unwrap(),
    }
}

fn network_input<'a>(layout: &'a TransportLayout, s: &'a [f64], d: &'a [f64]) -> NetworkInput<'a> {
    NetworkInput {
        supply: s,
        demand: d,
        arc_src: layout.arc_src(),
        arc_dst: layout.arc_dst(),
        cost: layout.cost(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn network_and_dense_simplex_agree(seed in any::<u64>(), rows in 1usize..=8, cols in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, rows, cols);
        let (s, d) = routed_instance(&mut rng, &layout, false);
        let problem = assemble(&layout, &s, &d);
        let plan = solve_transport(&problem, &SolveOptions::default()).unwrap();
        let (c, m, b) = problem.dense_form();
        let dense = solve_dense(&c, &m, &b, &DenseOptions::default()).unwrap();
        prop_assert_eq!(dense.status, LpStatus::Optimal);
        let scale = plan.objective.abs().max(1.0);
        prop_assert!((plan.objective - dense.objective).abs() <= 1e-9 * scale,
            "network {} dense {}", plan.objective, dense.objective);
        let total: f64 = s.iter().sum();
        prop_assert!(plan.marginal_residual(&s, &d) <= 1e-7 * total.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn integral_marginals_give_integral_flows(seed in any::<u64>(), rows in 1usize..=6, cols in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, rows, cols);
        let (s, d) = routed_instance(&mut rng, &layout, true);
        let sol = solve_network(&network_input(&layout, &s, &d), &NetworkOptions::default()).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        for x in &sol.x {
            prop_assert_eq!(x.fract(), 0.0, "flow {}", x);
        }
    }

    #[test]
    fn duality_along_the_path(seed in any::<u64>(), rows in 1usize..=5, cols in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, rows, cols);
        let (s, d) = routed_instance(&mut rng, &layout, false);
        let options = NetworkOptions { trace: true, ..Default::default() };
        let sol = solve_network(&network_input(&layout, &s, &d), &options).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        // Dual objective: last demand row dropped.
        let n = s.len();
        let dual: f64 = s.iter().zip(&sol.duals[..n]).map(|(a, u)| a * u).sum::<f64>()
            + d[..n - 1].iter().zip(&sol.duals[n..]).map(|(a, v)| a * v).sum::<f64>();
        let scale = sol.objective.abs().max(1.0);
        prop_assert!((dual - sol.objective).abs() <= 1e-8 * scale, "dual {} primal {}", dual, sol.objective);
        // Every feasible iterate costs at least the dual bound.
        for e in sol.trace.iter().filter(|e| e.phase == 2) {
            prop_assert!(e.objective >= dual - 1e-8 * scale, "iterate {} below {}", e.objective, dual);
        }
    }

    #[test]
    fn bland_rule_terminates_on_degenerate_instances(seed in any::<u64>(), rows in 1usize..=5, cols in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, rows, cols);
        let (s, d) = routed_instance(&mut rng, &layout, true);
        let input = network_input(&layout, &s, &d);
        let bland = NetworkOptions { degenerate_limit: Some(1), ..Default::default() };
        let a = solve_network(&input, &bland).unwrap();
        let b = solve_network(&input, &NetworkOptions::default()).unwrap();
        prop_assert_eq!(a.status, LpStatus::Optimal);
        prop_assert!((a.objective - b.objective).abs() <= 1e-9 * b.objective.abs().max(1.0));
    }

    #[test]
    fn identical_marginals_stay_put(seed in any::<u64>(), rows in 1usize..=5, cols in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, rows, cols);
        let s: Vec<f64> = (0..layout.node_count()).map(|_| rng.random_range(0.0..2.0)).collect();
        let plan = solve_transport(&assemble(&layout, &s, &s), &SolveOptions::default()).unwrap();
        prop_assert_eq!(plan.objective, 0.0);
        prop_assert!(plan.flows.iter().all(|f| f.from == f.to));
    }

    #[test]
    fn local_matches_global_for_one_adjacent_change(
        seed in any::<u64>(),
        rows in 2usize..=5,
        cols in 2usize..=5,
        moves in 1usize..=3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = grid(rows, cols);
        let n = g.node_count();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let mut d = s.clone();
        // Move part of one node's mass to a random neighbor, `moves` times.
        let topo = build_topology(g);
        for _ in 0..moves {
            let j = rng.random_range(0..n);
            let nb = topo.neighbors_of(j);
            let k = nb[rng.random_range(0..nb.len())] as usize;
            let m = rng.random_range(0.0..0.4) * d[j];
            d[j] -= m;
            d[k] += m;
        }
        let local = local_layout(g, CostKind::Euclidean);
        let global = global_layout(g, CostKind::Euclidean);
        let a = solve_transport(&assemble(&local, &s, &d), &SolveOptions::default()).unwrap();
        let b = solve_transport(&assemble(&global, &s, &d), &SolveOptions::default()).unwrap();
        // The global problem relaxes the local one; a single move is optimal
        // for both by the triangle inequality.
        prop_assert!(b.objective <= a.objective + 1e-9, "local {} global {}", a.objective, b.objective);
        if moves == 1 {
            prop_assert!((a.objective - b.objective).abs() <= 1e-9, "local {} global {}", a.objective, b.objective);
        }
    }

    #[test]
    fn balancing_keeps_the_heavier_side(seed in any::<u64>(), log_n in 0u32..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1usize << log_n;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..50) as f64).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0..50) as f64).collect();
        let (bs, bd, report) = balance_mass(&s, &d);
        let (ts, td): (f64, f64) = (s.iter().sum(), d.iter().sum());
        let (heavy, light, bheavy, blight) = if ts >= td { (&s, &d, &bs, &bd) } else { (&d, &s, &bd, &bs) };
        prop_assert_eq!(bheavy, heavy);
        let share = (ts - td).abs() / n as f64;
        for (b, l) in blight.iter().zip(light) {
            prop_assert_eq!(*b, l + share);
        }
        prop_assert_eq!(report.injected, (ts - td).abs());
    }
}

/// `A = W B W^+` with rank `k`, spectral radius at most 1.05. Some
/// eigenvalues are negative when `signed`.
fn linear_data(rng: &mut ChaCha8Rng, n: usize, k: usize, frames: usize, signed: bool) -> DMatrix<f64> {
    let w = DMatrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(rng));
    let b = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            rng.random_range(0.4..1.05) * if signed && rng.random_bool(0.3) { -1.0 } else { 1.0 }
        } else {
            0.0
        }
    });
    let a = &w * b * w.clone().pseudo_inverse(1e-12).unwrap();
    let c = DVector::<f64>::from_fn(k, |_, _| StandardNormal.sample(rng));
    let mut data = DMatrix::zeros(n, frames);
    data.set_column(0, &(&w * c));
    for j in 1..frames {
        let next = &a * data.column(j - 1);
        data.set_column(j, &next);
    }
    data
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn low_rank_linear_data_is_reproduced(seed in any::<u64>(), k in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = SnapshotSet::new(linear_data(&mut rng, 20, k, 15, true), 0.0, 0.5, None).unwrap();
        let model = fit(&set, &DmdOptions::with_rank(k)).unwrap();
        for j in 0..set.n_frames() {
            let y = set.frame(j);
            let e = (model.evaluate(set.time(j)) - &y).norm() / y.norm();
            prop_assert!(e <= 1e-8, "frame {} error {}", j, e);
        }
    }

    #[test]
    fn eigenvalues_match_exponents(seed in any::<u64>(), n in 3usize..=20, m in 3usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let set = SnapshotSet::new(data, 1.0, 0.25, None).unwrap();
        let model = fit(&set, &DmdOptions::with_rank((m - 1).min(n))).unwrap();
        for i in 0..model.rank() {
            if model.is_decayed(i) {
                continue;
            }
            let back = (model.omegas[i] * model.dt_fit).exp();
            let l = model.lambdas[i];
            prop_assert!((back - l).norm() <= 1e-12 * l.norm().max(1.0), "{} vs {}", back, l);
        }
    }

    #[test]
    fn fit_residual_does_not_grow_with_rank(seed in any::<u64>(), n in 4usize..=20, m in 4usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let set = SnapshotSet::new(data, 0.0, 1.0, None).unwrap();
        let max_rank = (m - 1).min(n);
        let mut last = f64::INFINITY;
        for r in 1..=max_rank {
            let res = fit(&set, &DmdOptions::with_rank(r)).unwrap().diagnostics.fit_residual;
            prop_assert!(res <= last * (1.0 + 1e-10) + 1e-12, "rank {} residual {} after {}", r, res, last);
            last = res;
        }
    }

    #[test]
    fn real_data_reconstructs_real(seed in any::<u64>(), k in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // A negative eigenvalue has no real interpolant between samples, so
        // off-grid times are only checked for positive spectra.
        let signed = rng.random_bool(0.5);
        let set = SnapshotSet::new(linear_data(&mut rng, 20, k, 15, signed), 0.0, 0.5, None).unwrap();
        let model = fit(&set, &DmdOptions::with_rank(k)).unwrap();
        let times: &[f64] = if signed { &[0.0, 1.5, 3.0, 7.0] } else { &[0.0, 0.75, 3.1, 7.0] };
        for &t in times {
            let ev = model.evaluate_detailed(t);
            prop_assert!(ev.imag_norm <= 1e-6 * ev.values.norm(), "t {} imag {}", t, ev.imag_norm);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coupled_runs_respect_structure(n in 6usize..=14, rank in 4usize..=12, window in 1usize..=3) {
        let spec = AdvectionSpec::new(n);
        let dx = spec.cell_size();
        let count = ((spec.horizon / dx).floor() as usize + 1).min(9);
        let snaps = advection_snapshots(&spec, 0.0, dx, count).unwrap();
        let g = *snaps.grid().unwrap();
        let model = fit(&snaps, &DmdOptions::with_rank(rank.min(count - 1))).unwrap();
        let (dt, kappa) = flowdmd::pipeline::select_dt(spec.speed(), &g, dx, 1);
        prop_assert!(spec.speed() * dt <= g.min_spacing() * (1.0 + 1e-12));
        let (frames, _) = model.interpolate_series(0.0, snaps.t_end(), dt).unwrap();
        prop_assert_eq!(frames.n_frames(), kappa * (count - 1) + 1);
        let layout = build_layout(g, ProblemKind::Local, CostKind::Euclidean, DEFAULT_GLOBAL_BUDGET).unwrap();
        let a = solve_sequence(&frames, &layout, BalanceRule::Uniform, Reservoir::Auto, 0).unwrap();
        let b = solve_sequence(&frames, &layout, BalanceRule::Uniform, Reservoir::Auto, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.plan, &y.plan);
        }
        for step in &a {
            let scale = step.supply_total.max(step.demand_total).max(1.0);
            prop_assert!(step.bookkeeping_gap() <= 1e-9 * scale);
            for f in &step.plan.flows {
                let (r0, c0) = g.row_col(f.from as usize);
                let (r1, c1) = g.row_col(f.to as usize);
                prop_assert!(r0.abs_diff(r1) <= 1 && c0.abs_diff(c1) <= 1);
            }
        }
        let field = plans_to_flowfield(&a, &g, window, dt).unwrap();
        let bound = g.cell_width.hypot(g.cell_height) / dt;
        prop_assert!(field.max_speed() <= bound * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn advection_matches_closed_form(n in 4usize..=40, t in 0.0f64..2.0, probe in any::<u64>()) {
        let spec = AdvectionSpec::new(n);
        let g = spec.grid().unwrap();
        let r = advection_exact(&spec, t).unwrap();
        let j = (probe % g.node_count() as u64) as usize;
        prop_assert_eq!(r.values[j], spec.exact(g.center(j), t));
        prop_assert!(r.values.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn presence_rasters_are_nonnegative() {
    let g = GridSpec::new(6, 7, 100.0, 100.0, [0.0, 0.0]).unwrap();
    for seed in 0..5 {
        let spec = PresenceSpec {
            noise: 0.2,
            ..Default::default()
        };
        let set = synth_presence(&g, 2, seed, &spec).unwrap();
        assert!(set.data().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn burgers_fixed_steps_converge_at_high_order() {
    let solve = |dt: f64| {
        let spec = BurgersSpec {
            n: 20,
            integrator: Integrator::Fixed { dt },
            ..Default::default()
        };
        burgers_solve(&spec, 0.25).unwrap().into_data()
    };
    let (a, b, c) = (solve(0.025), solve(0.0125), solve(0.00625));
    let order = ((&a - &b).norm() / (&b - &c).norm()).log2();
    assert!(order >= 1.8, "observed order {order}");
}
