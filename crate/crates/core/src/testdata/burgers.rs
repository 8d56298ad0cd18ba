//! Viscous Burgers equation `y_t - eps * lap(y) + y * (y_x1 + y_x2) = 0` on the
//! unit square with zero Dirichlet data and initial state
//! `sin(pi x1) sin(pi x2)`.
//!
//! Space is discretized by central differences on the `n x n` interior nodes
//! of a uniform mesh with spacing `1 / (n + 1)`. Time integration uses the
//! Dormand-Prince 5(4) pair, either with adaptive steps and dense output or
//! with a fixed step for convergence studies.

use nalgebra::DMatrix;

use super::TestdataError;
use crate::data::SnapshotSet;
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    Adaptive { rtol: f64, atol: f64 },
    /// Fixed step; it must divide the output spacing.
    Fixed { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersSpec {
    pub n: usize,
    pub viscosity: f64,
    pub horizon: f64,
    pub integrator: Integrator,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        BurgersSpec {
            n: 40,
            viscosity: 0.01,
            horizon: 1.0,
            integrator: Integrator::Adaptive {
                rtol: 1e-6,
                atol: 1e-8,
            },
        }
    }
}

impl BurgersSpec {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn grid(&self) -> Result<GridSpec, TestdataError> {
        let h = self.spacing();
        Ok(GridSpec::new(self.n, self.n, h, h, [h, h])?)
    }

    pub fn initial(&self) -> Vec<f64> {
        let h = self.spacing();
        let pi = std::f64::consts::PI;
        let mut y = Vec::with_capacity(self.n * self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                let x1 = (c + 1) as f64 * h;
                let x2 = (r + 1) as f64 * h;
                y.push((pi * x1).sin() * (pi * x2).sin());
            }
        }
        y
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let h = self.spacing();
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let eps = self.viscosity;
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                let u = y[i];
                let w = if c > 0 { y[i - 1] } else { 0.0 };
                let e = if c + 1 < n { y[i + 1] } else { 0.0 };
                let s = if r > 0 { y[i - n] } else { 0.0 };
                let nn = if r + 1 < n { y[i + n] } else { 0.0 };
                let lap = (e + w + s + nn - 4.0 * u) * inv_h2;
                let grad = (e - w + nn - s) * inv_2h;
                out[i] = eps * lap - u * grad;
            }
        }
    }
}

const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Difference between the fifth- and fourth-order weights, seven stages.
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
/// Dense-output polynomial coefficients: `y(t + x h) = y + h * sum_i k_i *
/// sum_j P[i][j] x^(j+1)`.
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

struct Stepper<'a> {
    spec: &'a BurgersSpec,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a BurgersSpec, len: usize) -> Self {
        Stepper {
            spec,
            k: vec![vec![0.0; len]; 7],
            tmp: vec![0.0; len],
        }
    }

    /// One step from `y` (with `k[0] = f(y)` already set) into `y_new`;
    /// leaves `k[6] = f(y_new)`.
    fn step(&mut self, y: &[f64], h: f64, y_new: &mut [f64]) {
        for s in 1..6 {
            for i in 0..y.len() {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            let (_, rest) = self.k.split_at_mut(s);
            self.spec.rhs(&self.tmp, &mut rest[0]);
        }
        for i in 0..y.len() {
            let mut acc = 0.0;
            for (j, b) in B.iter().enumerate() {
                acc += b * self.k[j][i];
            }
            y_new[i] = y[i] + h * acc;
        }
        let (_, last) = self.k.split_at_mut(6);
        self.spec.rhs(y_new, &mut last[0]);
    }

    fn error_norm(&self, y: &[f64], y_new: &[f64], h: f64, rtol: f64, atol: f64) -> f64 {
        let mut sum = 0.0;
        for i in 0..y.len() {
            let mut err = 0.0;
            for (j, e) in E.iter().enumerate() {
                err += e * self.k[j][i];
            }
            let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
            let r = h * err / scale;
            sum += r * r;
        }
        (sum / y.len() as f64).sqrt()
    }

    fn dense(&self, y: &[f64], h: f64, x: f64, out: &mut [f64]) {
        let mut w = [0.0; 7];
        for (i, row) in P.iter().enumerate() {
            let mut xp = x;
            for p in row {
                w[i] += p * xp;
                xp *= x;
            }
        }
        for idx in 0..y.len() {
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi * self.k[i][idx];
            }
            out[idx] = y[idx] + h * acc;
        }
    }
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    (v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Solves up to `spec.horizon` and returns snapshots every `output_dt`,
/// starting with the initial state.
pub fn burgers_solve(spec: &BurgersSpec, output_dt: f64) -> Result<SnapshotSet, TestdataError> {
    if spec.n == 0 || !(spec.viscosity > 0.0) || !(spec.horizon > 0.0) {
        return Err(TestdataError::BadSpec(format!("{spec:?}")));
    }
    if !(output_dt > 0.0) || output_dt > spec.horizon {
        return Err(TestdataError::BadSpec(format!(
            "output spacing {output_dt} for horizon {}",
            spec.horizon
        )));
    }
    let grid = spec.grid()?;
    let len = spec.n * spec.n;
    let frames = (spec.horizon / output_dt + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..frames).map(|i| i as f64 * output_dt).collect();
    let mut data = DMatrix::zeros(len, frames);
    let mut y = spec.initial();
    let sup0 = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    data.column_mut(0).copy_from_slice(&y);

    let mut stepper = Stepper::new(spec, len);
    spec.rhs(&y, &mut stepper.k[0]);
    let mut y_new = vec![0.0; len];
    let mut out = vec![0.0; len];
    let mut t = 0.0;
    let mut next = 1;
    let t_end = times[frames - 1];

    let check = |v: &[f64], t: f64| -> Result<(), TestdataError> {
        if v.iter().any(|x| !x.is_finite() || x.abs() > 1e3 * sup0.max(1.0)) {
            Err(TestdataError::Unstable { t })
        } else {
            Ok(())
        }
    };

    match spec.integrator {
        Integrator::Fixed { dt } => {
            let per = output_dt / dt;
            if !(dt > 0.0) || (per - per.round()).abs() > 1e-9 {
                return Err(TestdataError::BadSpec(format!(
                    "fixed step {dt} does not divide output spacing {output_dt}"
                )));
            }
            let per = per.round() as usize;
            for frame in 1..frames {
                for _ in 0..per {
                    stepper.step(&y, dt, &mut y_new);
                    std::mem::swap(&mut y, &mut y_new);
                    let (first, rest) = stepper.k.split_at_mut(1);
                    first[0].copy_from_slice(&rest[5]);
                    t += dt;
                }
                check(&y, t)?;
                data.column_mut(frame).copy_from_slice(&y);
            }
        }
        Integrator::Adaptive { rtol, atol } => {
            let mut h = initial_step(spec, &y, &stepper.k[0], rtol, atol);
            while next < frames {
                let h_step = h.min(t_end - t);
                stepper.step(&y, h_step, &mut y_new);
                let err = stepper.error_norm(&y, &y_new, h_step, rtol, atol);
                if err <= 1.0 {
                    let t_new = t + h_step;
                    while next < frames && times[next] <= t_new + 1e-12 {
                        let x = ((times[next] - t) / h_step).clamp(0.0, 1.0);
                        stepper.dense(&y, h_step, x, &mut out);
                        check(&out, times[next])?;
                        data.column_mut(next).copy_from_slice(&out);
                        next += 1;
                    }
                    t = t_new;
                    std::mem::swap(&mut y, &mut y_new);
                    let (first, rest) = stepper.k.split_at_mut(1);
                    first[0].copy_from_slice(&rest[5]);
                    check(&y, t)?;
                    let factor = if err == 0.0 {
                        10.0
                    } else {
                        (0.9 * err.powf(-0.2)).min(10.0)
                    };
                    h = h_step * factor;
                } else {
                    h = h_step * (0.9 * err.powf(-0.2)).max(0.2);
                }
                if h < 1e-12 {
                    return Err(TestdataError::Unstable { t });
                }
            }
        }
    }
    Ok(SnapshotSet::new(data, 0.0, output_dt, Some(grid))?)
}

fn initial_step(spec: &BurgersSpec, y: &[f64], f0: &[f64], rtol: f64, atol: f64) -> f64 {
    let scale: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let d0 = rms(y, &scale);
    let d1 = rms(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    spec.rhs(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff, &scale) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_output_weights_reduce_to_step_weights() {
        for (i, row) in P.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let b = if i < 6 { B[i] } else { 0.0 };
            assert!((sum - b).abs() < 1e-12, "row {i}: {sum} vs {b}");
        }
    }

    #[test]
    fn first_snapshot_is_initial_state() {
        let spec = BurgersSpec {
            n: 10,
            horizon: 0.2,
            ..Default::default()
        };
        let s = burgers_solve(&spec, 0.1).unwrap();
        assert_eq!(s.n_frames(), 3);
        assert_eq!(s.frame_slice(0), spec.initial().as_slice());
    }

    #[test]
    fn output_widths() {
        let spec = BurgersSpec {
            n: 8,
            ..Default::default()
        };
        for (dt, width) in [(0.1, 11), (0.05, 21), (0.025, 41), (0.0125, 81)] {
            assert_eq!(burgers_solve(&spec, dt).unwrap().n_frames(), width);
        }
    }

    #[test]
    fn strong_diffusion_decays() {
        let spec = BurgersSpec {
            n: 12,
            viscosity: 1.0,
            horizon: 0.5,
            ..Default::default()
        };
        let s = burgers_solve(&spec, 0.05).unwrap();
        let sups: Vec<f64> = (0..s.n_frames())
            .map(|j| s.frame_slice(j).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect();
        for w in sups.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(sups.last().unwrap() < &0.01);
    }

    #[test]
    fn maximum_principle() {
        let spec = BurgersSpec::default();
        let s = burgers_solve(&spec, 0.1).unwrap();
        let sup0 = s.frame_slice(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(s.data().iter().all(|v| v.abs() <= sup0 + 1e-6));
    }

    #[test]
    fn adaptive_matches_fine_fixed_steps() {
        let spec = BurgersSpec {
            n: 16,
            horizon: 0.5,
            ..Default::default()
        };
        let a = burgers_solve(&spec, 0.05).unwrap();
        let f = burgers_solve(
            &BurgersSpec {
                integrator: Integrator::Fixed { dt: 0.0025 },
                ..spec
            },
            0.05,
        )
        .unwrap();
        let diff = (a.data() - f.data()).norm() / f.data().norm();
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn rejects_non_dividing_fixed_step() {
        let spec = BurgersSpec {
            n: 4,
            integrator: Integrator::Fixed { dt: 0.03 },
            ..Default::default()
        };
        assert!(matches!(
            burgers_solve(&spec, 0.1),
            Err(TestdataError::BadSpec(_))
        ));
    }
}
