//! Exact dynamic mode decomposition.
//!
//! From snapshots `y(t_0), ..., y(t_n)` the fit forms `Y = [y_0 .. y_{n-1}]`
//! and `Y' = [y_1 .. y_n]`, takes the rank-`r` economy SVD `Y = U S V^T`,
//! projects the least-squares propagator onto the POD basis,
//! `A_r = U^T Y' V S^{-1}`, diagonalizes `A_r W = W L`, and lifts the
//! eigenvectors back to the state space as `Psi = Y' V S^{-1} W`. The model
//! then reads
//!
//! ```text
//! y(t) ~ sum_i beta_i psi_i exp(omega_i (t - t0)),   omega_i = log(lambda_i) / dt
//! ```
//!
//! with `beta = Psi^+ y(t0)`. The logarithm uses the principal branch, so
//! oscillations faster than `pi / dt` alias onto slower ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SnapshotSet};
use crate::grid::GridSpec;
use crate::linalg::{complex_lstsq, economy_svd, eig_dense, LinalgError, RankPolicy, C64};

#[derive(Debug, Error)]
pub enum DmdError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("rank {rank} exceeds the number of snapshot pairs {pairs}")]
    RankTooLarge { rank: usize, pairs: usize },
    #[error("invalid interpolation window [{t_start}, {t_end}] with step {dt}")]
    BadWindow { t_start: f64, t_end: f64, dt: f64 },
}

/// How the lifted eigenvectors are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeScaling {
    /// `Psi = Y' V S^{-1} W`.
    #[default]
    Projected,
    /// `Psi = Y' V S^{-1} W L^{-1}`; predictions match `Projected` once the
    /// amplitudes are refit, up to conditioning.
    InverseEigenvalue,
}

impl ModeScaling {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeScaling::Projected => "projected",
            ModeScaling::InverseEigenvalue => "inverse_eigenvalue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "projected" => Some(ModeScaling::Projected),
            "inverse_eigenvalue" => Some(ModeScaling::InverseEigenvalue),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DmdOptions {
    pub rank: RankPolicy,
    pub scaling: ModeScaling,
}

impl DmdOptions {
    pub fn with_rank(rank: usize) -> Self {
        DmdOptions {
            rank: RankPolicy::Fixed(rank),
            scaling: ModeScaling::default(),
        }
    }
}

/// Fit-time information that is not needed for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    /// All singular values of `Y`.
    pub spectrum: Vec<f64>,
    pub clipped_from: Option<usize>,
    /// `||Y' - A Y||_F` for the rank-`r` propagator `A = Y' V S^{-1} U^T`.
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmdModel {
    pub modes: DMatrix<C64>,
    pub lambdas: Vec<C64>,
    /// Continuous-time exponents; decayed modes (`lambda = 0`) carry
    /// [`DECAYED_OMEGA`] and are skipped by evaluation.
    pub omegas: Vec<C64>,
    pub amplitudes: Vec<C64>,
    pub dt_fit: f64,
    pub t0: f64,
    /// Time of the last snapshot used in the fit.
    pub t_end: f64,
    pub scaling: ModeScaling,
    pub grid: Option<GridSpec>,
    pub diagnostics: FitDiagnostics,
}

pub const DECAYED_OMEGA: C64 = C64::new(f64::NEG_INFINITY, 0.0);

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: DVector<f64>,
    /// 2-norm of the discarded imaginary part.
    pub imag_norm: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterpolationReport {
    /// Total negative mass removed by clamping, summed over frames.
    pub clamped_mass: f64,
    pub clamped_cells: usize,
    /// Largest `||Im|| / ||Re||` over the produced frames.
    pub max_imag_ratio: f64,
    pub extrapolated: bool,
}

pub fn fit(snapshots: &SnapshotSet, options: &DmdOptions) -> Result<DmdModel, DmdError> {
    let data = snapshots.data();
    let m = data.ncols();
    let pairs = m - 1;
    if let RankPolicy::Fixed(r) = options.rank {
        if r > pairs {
            return Err(DmdError::RankTooLarge { rank: r, pairs });
        }
    }
    let y = data.columns(0, pairs).clone_owned();
    let y_next = data.columns(1, pairs);

    let svd = economy_svd(&y, options.rank)?;
    let r = svd.rank_used;

    // Y' V S^{-1}, shared by the projected operator and the modes.
    let mut lifted = y_next * &svd.v;
    for (j, s) in svd.sigma.iter().enumerate() {
        lifted.column_mut(j).unscale_mut(*s);
    }
    let a_r = svd.u.tr_mul(&lifted);
    let eig = eig_dense(&a_r)?;

    let lifted_c = lifted.map(|v| C64::new(v, 0.0));
    let mut modes = lifted_c * &eig.vectors;
    let dt = snapshots.dt();
    let mut omegas = Vec::with_capacity(r);
    for (i, lambda) in eig.values.iter().enumerate() {
        if lambda.norm() == 0.0 {
            omegas.push(DECAYED_OMEGA);
            continue;
        }
        omegas.push(lambda.ln() / dt);
        if options.scaling == ModeScaling::InverseEigenvalue {
            let inv = lambda.inv();
            for v in modes.column_mut(i).iter_mut() {
                *v *= inv;
            }
        }
    }

    let y0 = data.column(0).map(|v| C64::new(v, 0.0));
    let amplitudes = complex_lstsq(&modes, &y0)?;

    // ||Y'(I - V V^T)||_F
    let proj = (&y_next * &svd.v) * svd.v.transpose();
    let fit_residual = (y_next - proj).norm();

    Ok(DmdModel {
        modes,
        lambdas: eig.values,
        omegas,
        amplitudes: amplitudes.iter().copied().collect(),
        dt_fit: dt,
        t0: snapshots.t0(),
        t_end: snapshots.t_end(),
        scaling: options.scaling,
        grid: snapshots.grid().copied(),
        diagnostics: FitDiagnostics {
            spectrum: svd.spectrum,
            clipped_from: svd.clipped_from,
            fit_residual,
        },
    })
}

impl DmdModel {
    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn n_states(&self) -> usize {
        self.modes.nrows()
    }

    pub fn is_decayed(&self, i: usize) -> bool {
        self.omegas[i].re == f64::NEG_INFINITY
    }

    fn complex_state(&self, t: f64) -> DVector<C64> {
        let tau = t - self.t0;
        let coeffs = DVector::from_iterator(
            self.rank(),
            (0..self.rank()).map(|i| {
                if self.is_decayed(i) {
                    C64::new(0.0, 0.0)
                } else {
                    self.amplitudes[i] * (self.omegas[i] * tau).exp()
                }
            }),
        );
        &self.modes * coeffs
    }

    /// Real part of the reconstruction at time `t`.
    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        self.complex_state(t).map(|v| v.re)
    }

    pub fn evaluate_detailed(&self, t: f64) -> Evaluation {
        let z = self.complex_state(t);
        let imag_norm = z.iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
        let slack = 1e-9 * self.dt_fit;
        Evaluation {
            values: z.map(|v| v.re),
            imag_norm,
            extrapolated: t < self.t0 - slack || t > self.t_end + slack,
        }
    }

    /// Reconstructs frames at `t_start + j * dt_fine` up to `t_end`,
    /// clamping negative values to zero.
    pub fn interpolate_series(
        &self,
        t_start: f64,
        t_end: f64,
        dt_fine: f64,
    ) -> Result<(SnapshotSet, InterpolationReport), DmdError> {
        if !(dt_fine > 0.0 && dt_fine.is_finite() && t_end > t_start) {
            return Err(DmdError::BadWindow {
                t_start,
                t_end,
                dt: dt_fine,
            });
        }
        let count = ((t_end - t_start) / dt_fine + 1e-9).floor() as usize + 1;
        let mut data = DMatrix::zeros(self.n_states(), count);
        let mut report = InterpolationReport::default();
        for j in 0..count {
            let t = t_start + j as f64 * dt_fine;
            let ev = self.evaluate_detailed(t);
            let re_norm = ev.values.norm();
            if re_norm > 0.0 {
                report.max_imag_ratio = report.max_imag_ratio.max(ev.imag_norm / re_norm);
            }
            report.extrapolated |= ev.extrapolated;
            let mut col = ev.values;
            for v in col.iter_mut() {
                if *v < 0.0 {
                    report.clamped_mass -= *v;
                    report.clamped_cells += 1;
                    *v = 0.0;
                }
            }
            data.set_column(j, &col);
        }
        let set = SnapshotSet::new(data, t_start, dt_fine, self.grid)?;
        Ok((set, report))
    }

    /// Reconstruction without clamping at the given times, one column each.
    pub fn evaluate_many(&self, times: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_states(), times.len());
        for (j, &t) in times.iter().enumerate() {
            out.set_column(j, &self.evaluate(t));
        }
        out
    }
}

pub fn interpolate_series(
    model: &DmdModel,
    t_start: f64,
    t_end: f64,
    dt_fine: f64,
) -> Result<(SnapshotSet, InterpolationReport), DmdError> {
    model.interpolate_series(t_start, t_end, dt_fine)
}
