//! Dense kernels used by the DMD fit: economy SVD with rank truncation,
//! pseudo-inverse application, and eigendecomposition of small dense
//! matrices.
//!
//! The general eigensolver reduces to upper Hessenberg form with Householder
//! reflections, runs a single-shift complex QR iteration (Wilkinson shifts,
//! Givens bulge chasing) to a complex Schur form `A = Z T Z^H`, and recovers
//! eigenvectors by back substitution on `T`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Singular values below this fraction of the largest one are treated as
/// numerically zero, whatever the rank policy.
pub const NUMERICAL_RANK_TOL: f64 = 1e-12;

pub const DEFAULT_ENERGY: f64 = 0.9999;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has no positive singular values")]
    NoPositiveSingularValues,
    #[error("matrix is empty ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid rank policy: {0}")]
    BadPolicy(String),
    #[error(
        "eigenvalue iteration did not converge after {iterations} sweeps; \
         {converged} of {size} eigenvalues deflated, last subdiagonal {subdiagonal:e}"
    )]
    NoConvergence {
        iterations: usize,
        converged: usize,
        size: usize,
        subdiagonal: f64,
    },
    #[error("eigenpair {index} failed the residual check ({residual:e} > {bound:e})")]
    EigenResidual {
        index: usize,
        residual: f64,
        bound: f64,
    },
    #[error("svd failed to converge")]
    SvdFailed,
}

/// How many singular triplets to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RankPolicy {
    Fixed(usize),
    /// Smallest rank whose cumulative squared singular values reach this
    /// fraction of the total.
    Energy(f64),
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Energy(DEFAULT_ENERGY)
    }
}

impl std::fmt::Display for RankPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankPolicy::Fixed(r) => write!(f, "rank {r}"),
            RankPolicy::Energy(e) => write!(f, "energy {e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EconomySvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    pub rank_used: usize,
    /// Set when a fixed rank was requested above the numerical rank.
    pub clipped_from: Option<usize>,
    /// Every singular value of the input, sorted nonincreasing.
    pub spectrum: Vec<f64>,
}

impl EconomySvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// `V diag(1/sigma) U^T x`.
    pub fn pinv_apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        if x.len() != self.u.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.u.nrows(),
                found: x.len(),
            });
        }
        let mut coeffs = self.u.tr_mul(x);
        for (c, s) in coeffs.iter_mut().zip(self.sigma.iter()) {
            *c /= *s;
        }
        Ok(&self.v * coeffs)
    }

    pub fn was_clipped(&self) -> bool {
        self.clipped_from.is_some()
    }
}

pub fn economy_svd(y: &DMatrix<f64>, policy: RankPolicy) -> Result<EconomySvd, LinalgError> {
    let (rows, cols) = y.shape();
    if rows == 0 || cols == 0 {
        return Err(LinalgError::Empty { rows, cols });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    match policy {
        RankPolicy::Fixed(0) => return Err(LinalgError::BadPolicy("fixed rank 0".into())),
        RankPolicy::Fixed(r) if r > rows.min(cols) => {
            return Err(LinalgError::BadPolicy(format!(
                "fixed rank {r} exceeds min dimension {}",
                rows.min(cols)
            )))
        }
        RankPolicy::Energy(tau) if !(tau > 0.0 && tau <= 1.0) => {
            return Err(LinalgError::BadPolicy(format!("energy threshold {tau} not in (0,1]")))
        }
        _ => {}
    }

    let (u_all, sigma_all, v_all) = jacobi_svd(y)?;
    let mut order: Vec<usize> = (0..sigma_all.len()).collect();
    order.sort_by(|&a, &b| sigma_all[b].partial_cmp(&sigma_all[a]).unwrap());
    let spectrum: Vec<f64> = order.iter().map(|&i| sigma_all[i]).collect();
    let sigma_max = spectrum[0];
    if !(sigma_max > 0.0) {
        return Err(LinalgError::NoPositiveSingularValues);
    }
    let numerical_rank = spectrum
        .iter()
        .take_while(|&&s| s > NUMERICAL_RANK_TOL * sigma_max)
        .count();

    let (rank, clipped_from) = match policy {
        RankPolicy::Fixed(r) if r > numerical_rank => {
            log::warn!("requested rank {r} exceeds numerical rank {numerical_rank}; clipping");
            (numerical_rank, Some(r))
        }
        RankPolicy::Fixed(r) => (r, None),
        RankPolicy::Energy(tau) => {
            let total: f64 = spectrum.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut k = 0;
            for s in &spectrum {
                acc += s * s;
                k += 1;
                if acc >= tau * total {
                    break;
                }
            }
            (k.min(numerical_rank), None)
        }
    };

    let mut u = DMatrix::zeros(rows, rank);
    let mut v = DMatrix::zeros(cols, rank);
    let mut sigma = DVector::zeros(rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        u.set_column(dst, &u_all.column(src));
        v.set_column(dst, &v_all.column(src));
        sigma[dst] = sigma_all[src];
    }
    Ok(EconomySvd {
        u,
        sigma,
        v,
        rank_used: rank,
        clipped_from,
        spectrum,
    })
}

/// Thin SVD `y = U diag(sigma) V^T` by one-sided Jacobi rotations, with a
/// QR step first so the rotations act on a square factor. Columns of `U`
/// whose singular value is exactly zero are left at zero.
fn jacobi_svd(y: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>), LinalgError> {
    if y.nrows() < y.ncols() {
        let (u, s, v) = jacobi_svd(&y.transpose())?;
        return Ok((v, s, u));
    }
    let n = y.ncols();
    let qr = y.clone().qr();
    let q = qr.q();
    let mut a = qr.r();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = 4.0 * f64::EPSILON;
    // Columns below rounding level of the whole matrix carry no rank and
    // would otherwise keep rotating among themselves.
    let floor = (f64::EPSILON * a.norm()).powi(2);
    let mut converged = false;
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for r in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(r).norm_squared();
                let gamma = a.column(p).dot(&a.column(r));
                if alpha <= floor || beta <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_columns(&mut a, p, r, c, sn);
                rotate_columns(&mut v, p, r, c, sn);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::SvdFailed);
    }
    let mut sigma = Vec::with_capacity(n);
    for j in 0..n {
        let s = a.column(j).norm();
        if s > 0.0 {
            a.column_mut(j).unscale_mut(s);
        }
        sigma.push(s);
    }
    Ok((q * a, sigma, v))
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, r: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let x = m[(i, p)];
        let z = m[(i, r)];
        m[(i, p)] = c * x - s * z;
        m[(i, r)] = s * x + c * z;
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<C64>,
    /// Columns are unit-norm eigenvectors, in the order of `values`.
    pub vectors: DMatrix<C64>,
}

/// Eigendecomposition of a real square matrix.
///
/// Eigenvalues come sorted by nonincreasing modulus with complex conjugate
/// pairs adjacent (positive imaginary part first).
pub fn eig_dense(a: &DMatrix<f64>) -> Result<EigenPairs, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(LinalgError::Empty { rows: 0, cols: 0 });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let ac = a.map(|v| C64::new(v, 0.0));
    let pairs = eig_complex(&ac)?;
    Ok(order_pairs(pairs))
}

/// Eigendecomposition of a general complex square matrix, unsorted.
pub fn eig_complex(a: &DMatrix<C64>) -> Result<EigenPairs, LinalgError> {
    let n = a.nrows();
    let norm = a.norm();
    if norm == 0.0 {
        return Ok(EigenPairs {
            values: vec![C64::new(0.0, 0.0); n],
            vectors: DMatrix::identity(n, n),
        });
    }
    let mut t = a.clone();
    let mut z = hessenberg(&mut t);
    schur_iterate(&mut t, &mut z)?;
    let mut vectors = triangular_eigenvectors(&t);
    vectors = &z * vectors;
    for mut col in vectors.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col.unscale_mut(nrm);
        }
    }
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    let bound = 1e-8 * norm;
    for (i, lambda) in values.iter().enumerate() {
        let w = vectors.column(i);
        let residual = (a * w - w * *lambda).norm();
        if residual > bound {
            return Err(LinalgError::EigenResidual {
                index: i,
                residual,
                bound,
            });
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// Householder reduction to upper Hessenberg form in place; returns the
/// accumulated unitary factor.
fn hessenberg(h: &mut DMatrix<C64>) -> DMatrix<C64> {
    let n = h.nrows();
    let mut q = DMatrix::<C64>::identity(n, n);
    if n < 3 {
        return q;
    }
    for k in 0..n - 2 {
        let x = h.view((k + 1, k), (n - k - 1, 1)).clone_owned();
        let xnorm = x.norm();
        if xnorm == 0.0 {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let mut v = x;
        v[0] += phase * xnorm;
        let vnorm = v.norm();
        v.unscale_mut(vnorm);
        // H <- P H P with P = I - 2 v v^H acting on rows/cols k+1..n.
        let rows = k + 1..n;
        {
            let mut block = h.view_mut((k + 1, 0), (n - k - 1, n));
            let w = block.ad_mul(&v); // n x 1: block^H v
            // block -= 2 v w^H
            for c in 0..n {
                let f = w[c].conj() * 2.0;
                for r in 0..rows.len() {
                    block[(r, c)] -= v[r] * f;
                }
            }
        }
        {
            let mut block = h.view_mut((0, k + 1), (n, n - k - 1));
            let w = &block * &v; // n x 1
            for r in 0..n {
                let f = w[r] * 2.0;
                for c in 0..rows.len() {
                    block[(r, c)] -= f * v[c].conj();
                }
            }
        }
        {
            let mut block = q.view_mut((0, k + 1), (n, n - k - 1));
            let w = &block * &v;
            for r in 0..n {
                let f = w[r] * 2.0;
                for c in 0..rows.len() {
                    block[(r, c)] -= f * v[c].conj();
                }
            }
        }
        for r in k + 2..n {
            h[(r, k)] = C64::new(0.0, 0.0);
        }
    }
    q
}

/// Givens rotation `[c s; -conj(s) c]` mapping `(x, y)` to `(r, 0)`.
#[inline]
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, C64::new(1.0, 0.0));
    }
    let rho = ax.hypot(ay);
    let c = ax / rho;
    let s = (x / ax) * y.conj() / rho;
    (c, s)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mu1 = (a + d) * 0.5 + disc;
    let mu2 = (a + d) * 0.5 - disc;
    if (mu1 - d).norm() <= (mu2 - d).norm() {
        mu1
    } else {
        mu2
    }
}

fn schur_iterate(t: &mut DMatrix<C64>, z: &mut DMatrix<C64>) -> Result<(), LinalgError> {
    let n = t.nrows();
    if n == 1 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let norm = t.norm();
    let max_sweeps = 60 * n;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        // Locate the start of the active unreduced block.
        let mut lo = hi;
        while lo > 0 {
            let sub = t[(lo, lo - 1)].norm();
            let mut scale = t[(lo, lo)].norm() + t[(lo - 1, lo - 1)].norm();
            if scale == 0.0 {
                scale = norm;
            }
            if sub <= eps * scale {
                t[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_sweeps {
            return Err(LinalgError::NoConvergence {
                iterations: total,
                converged: n - 1 - hi,
                size: n,
                subdiagonal: t[(hi, hi - 1)].norm(),
            });
        }
        let mu = if iter % 11 == 0 {
            // Exceptional shift to break stagnation.
            t[(hi, hi)] + C64::new(t[(hi, hi - 1)].norm() * 0.75, 0.0)
        } else {
            wilkinson_shift(
                t[(hi - 1, hi - 1)],
                t[(hi - 1, hi)],
                t[(hi, hi - 1)],
                t[(hi, hi)],
            )
        };

        for k in lo..hi {
            let (x, y) = if k == lo {
                (t[(lo, lo)] - mu, t[(lo + 1, lo)])
            } else {
                (t[(k, k - 1)], t[(k + 1, k - 1)])
            };
            let (c, s) = givens(x, y);
            let col_start = if k > lo { k - 1 } else { lo };
            for j in col_start..n {
                let a = t[(k, j)];
                let b = t[(k + 1, j)];
                t[(k, j)] = a * c + s * b;
                t[(k + 1, j)] = -s.conj() * a + b * c;
            }
            if k > lo {
                t[(k + 1, k - 1)] = C64::new(0.0, 0.0);
            }
            let row_end = (k + 2).min(hi);
            for i in 0..=row_end {
                let a = t[(i, k)];
                let b = t[(i, k + 1)];
                t[(i, k)] = a * c + b * s.conj();
                t[(i, k + 1)] = -a * s + b * c;
            }
            for i in 0..n {
                let a = z[(i, k)];
                let b = z[(i, k + 1)];
                z[(i, k)] = a * c + b * s.conj();
                z[(i, k + 1)] = -a * s + b * c;
            }
        }
    }
    // Clean the strictly lower part left by rounding.
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok(())
}

/// Eigenvectors of an upper triangular matrix by back substitution.
fn triangular_eigenvectors(t: &DMatrix<C64>) -> DMatrix<C64> {
    let n = t.nrows();
    let norm = t.norm().max(f64::MIN_POSITIVE);
    let smin = f64::EPSILON * norm;
    let mut x = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        x[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = t[(i, k)];
            for j in i + 1..k {
                acc += t[(i, j)] * x[(j, k)];
            }
            if acc.norm() == 0.0 {
                continue;
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < smin {
                denom = C64::new(smin, 0.0);
            }
            x[(i, k)] = -acc / denom;
        }
    }
    x
}

fn order_pairs(pairs: EigenPairs) -> EigenPairs {
    let n = pairs.values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (pairs.values[a], pairs.values[b]);
        vb.norm()
            .partial_cmp(&va.norm())
            .unwrap()
            .then(vb.im.partial_cmp(&va.im).unwrap())
    });
    let scale = pairs.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(1.0);
    let mut ordered = Vec::with_capacity(n);
    let mut used = vec![false; n];
    for p in 0..n {
        let i = idx[p];
        if used[i] {
            continue;
        }
        used[i] = true;
        let vi = pairs.values[i];
        ordered.push(i);
        if vi.im.abs() <= tol {
            continue;
        }
        let target = vi.conj();
        let partner = idx[p + 1..]
            .iter()
            .copied()
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                (pairs.values[a] - target)
                    .norm()
                    .partial_cmp(&(pairs.values[b] - target).norm())
                    .unwrap()
            });
        if let Some(j) = partner {
            if (pairs.values[j] - target).norm() <= 1e-6 * scale.max(1.0) {
                used[j] = true;
                ordered.push(j);
            }
        }
    }
    let values = ordered.iter().map(|&i| pairs.values[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in ordered.iter().enumerate() {
        vectors.set_column(dst, &pairs.vectors.column(src));
    }
    EigenPairs { values, vectors }
}

/// Minimum-norm least-squares solution of `A x = b` for complex `A`.
pub fn complex_lstsq(a: &DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>, LinalgError> {
    if a.nrows() != b.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    // Solve the real embedding [Re -Im; Im Re]; pseudo-inverses commute with it.
    let (m, n) = a.shape();
    let big = DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = a[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let rhs = DVector::from_fn(2 * m, |i, _| if i < m { b[i].re } else { b[i - m].im });
    let (u, sigma, v) = jacobi_svd(&big)?;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(LinalgError::NoPositiveSingularValues);
    }
    let mut x = DVector::zeros(2 * n);
    for (j, &s) in sigma.iter().enumerate() {
        if s > NUMERICAL_RANK_TOL * smax {
            let c = u.column(j).dot(&rhs) / s;
            x.axpy(c, &v.column(j), 1.0);
        }
    }
    Ok(DVector::from_fn(n, |i, _| C64::new(x[i], x[i + n])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
        (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).norm()
    }

    #[test]
    fn identity_svd() {
        let svd = economy_svd(&DMatrix::identity(3, 3), RankPolicy::Fixed(3)).unwrap();
        assert_eq!(svd.rank_used, 3);
        for s in svd.sigma.iter() {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((svd.pinv_apply(&x).unwrap() - &x).norm() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]) / 3.0;
        let v = DVector::from_vec(vec![3.0, 0.0, 4.0, 0.0]) / 5.0;
        let y = &u * v.transpose() * 5.0;
        let svd = economy_svd(&y, RankPolicy::Energy(0.9999)).unwrap();
        assert_eq!(svd.rank_used, 1);
        assert!((svd.sigma[0] - 5.0).abs() < 1e-13);
        let p = svd.pinv_apply(&u).unwrap();
        assert!((p - &v / 5.0).norm() < 1e-14);
    }

    #[test]
    fn fixed_rank_above_numerical_rank_is_clipped() {
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let y = &u * u.transpose();
        let svd = economy_svd(&y, RankPolicy::Fixed(3)).unwrap();
        assert_eq!(svd.rank_used, 1);
        assert_eq!(svd.clipped_from, Some(3));
    }

    #[test]
    fn zero_matrix_rejected() {
        let err = economy_svd(&DMatrix::zeros(4, 3), RankPolicy::default()).unwrap_err();
        assert_eq!(err, LinalgError::NoPositiveSingularValues);
        assert_eq!(err.to_string(), "matrix has no positive singular values");
    }

    #[test]
    fn random_reconstruction_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_matrix(&mut rng, 10, 6);
        let svd = economy_svd(&y, RankPolicy::Fixed(6)).unwrap();
        assert!((svd.reconstruct() - &y).norm() <= 1e-10);
    }

    #[test]
    fn pinv_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = random_matrix(&mut rng, 5, 5) + DMatrix::identity(5, 5) * 2.0;
        let x = DVector::from_fn(5, |i, _| i as f64 - 1.5);
        let svd = economy_svd(&y, RankPolicy::Fixed(5)).unwrap();
        let direct = y.clone().lu().solve(&x).unwrap();
        assert!((svd.pinv_apply(&x).unwrap() - direct).norm() < 1e-9);
    }

    #[test]
    fn energy_policy_picks_smallest_rank() {
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0, 0.1]));
        // energies: 100, 1, 0.01 over 101.01
        let r = |tau| economy_svd(&y, RankPolicy::Energy(tau)).unwrap().rank_used;
        assert_eq!(r(0.98), 1);
        assert_eq!(r(0.999), 2);
        assert_eq!(r(1.0), 3);
    }

    #[test]
    fn diagonal_eigenpairs() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let e = eig_dense(&a).unwrap();
        assert!((e.values[0] - C64::new(3.0, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - C64::new(2.0, 0.0)).norm() < 1e-14);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(e.vectors[(0, 0)].norm() < 1e-14);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_eigenvalues() {
        let th = 0.7f64;
        let a = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let e = eig_dense(&a).unwrap();
        assert!((e.values[0] - C64::from_polar(1.0, th)).norm() < 1e-13);
        assert!((e.values[1] - C64::from_polar(1.0, -th)).norm() < 1e-13);
    }

    #[test]
    fn golden_ratio_companion() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let e = eig_dense(&a).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((e.values[0].re - phi).abs() < 1e-14);
        assert!((e.values[1].re - (1.0 - phi)).abs() < 1e-14);
    }

    #[test]
    fn repeated_eigenvalue_identity() {
        let e = eig_dense(&DMatrix::identity(4, 4)).unwrap();
        assert!((e.vectors.clone() - DMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn lstsq_recovers_consistent_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
            .map(|v| C64::new(v, 0.5 * v));
        let x = DVector::from_vec(vec![C64::new(1.0, -1.0), C64::new(0.5, 2.0)]);
        let b = &a * &x;
        let got = complex_lstsq(&a, &b).unwrap();
        assert!((got - x).norm() < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]

            #[test]
            fn svd_invariants(seed in any::<u64>(), n in 2usize..=50, m in 1usize..=30) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y = random_matrix(&mut rng, n, m);
                let svd = economy_svd(&y, RankPolicy::Fixed(n.min(m))).unwrap();
                prop_assert!(orthonormality_error(&svd.u) <= 1e-10);
                prop_assert!(orthonormality_error(&svd.v) <= 1e-10);
                for w in svd.sigma.as_slice().windows(2) {
                    prop_assert!(w[0] >= w[1]);
                }
                let rec = (svd.reconstruct() - &y).norm();
                let discarded: f64 = svd.spectrum[svd.rank_used..].iter().map(|s| s * s).sum::<f64>().sqrt();
                prop_assert!(rec <= discarded + 1e-10 * y.norm());
            }

            #[test]
            fn truncated_svd_is_eckart_young(seed in any::<u64>(), n in 3usize..=20, m in 3usize..=12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y = random_matrix(&mut rng, n, m);
                let svd = economy_svd(&y, RankPolicy::Fixed(2)).unwrap();
                let rec = (svd.reconstruct() - &y).norm();
                let discarded: f64 = svd.spectrum[2..].iter().map(|s| s * s).sum::<f64>().sqrt();
                prop_assert!((rec - discarded).abs() <= 1e-9 * y.norm());
            }

            #[test]
            fn eig_residuals(seed in any::<u64>(), r in 1usize..=20) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_matrix(&mut rng, r, r);
                let e = eig_dense(&a).unwrap();
                let ac = a.map(|v| C64::new(v, 0.0));
                for i in 0..r {
                    let w = e.vectors.column(i);
                    prop_assert!((w.norm() - 1.0).abs() < 1e-12);
                    let res = (&ac * w - w * e.values[i]).norm();
                    prop_assert!(res <= 1e-8 * a.norm());
                }
                // conjugate pairs adjacent
                let mut i = 0;
                while i < r {
                    if e.values[i].im.abs() > 1e-9 {
                        prop_assert!(i + 1 < r);
                        prop_assert!((e.values[i + 1] - e.values[i].conj()).norm() < 1e-6);
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
            }

            #[test]
            fn pinv_inverts_on_row_space(seed in any::<u64>(), n in 4usize..=25, m in 4usize..=15, k in 1usize..=3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y = random_matrix(&mut rng, n, k) * random_matrix(&mut rng, k, m);
                let svd = economy_svd(&y, RankPolicy::Fixed(k)).unwrap();
                let z = &svd.v * DVector::from_fn(svd.rank_used, |_, _| rng.random_range(-1.0..1.0));
                let back = svd.pinv_apply(&(&y * &z)).unwrap();
                // Rounding in y * z is amplified by the condition number on the row space.
                let cond = svd.sigma[0] / svd.sigma[svd.rank_used - 1];
                prop_assert!((back - &z).norm() <= 1e-12 * cond * z.norm().max(1.0));
            }
        }
    }
}
