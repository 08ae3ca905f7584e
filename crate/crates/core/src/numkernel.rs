//! Dense linear-algebra primitives shared by every identification routine.
//!
//! Everything here is a pure function of its inputs. Matrices are `nalgebra`
//! types; SVD and eigendecompositions run through `faer`, whose SVD stays
//! accurate on rank-deficient input. This module adds the truncation,
//! tolerance and ordering semantics the rest of the crate relies on.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Complex64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Default relative cutoff for singular values in [`pseudoinverse`].
pub const DEFAULT_RCOND: f64 = 1e-12;

/// `sigma_min / sigma_max` below this raises a conditioning warning.
pub const ILL_CONDITIONED_RATIO: f64 = 1e-10;

/// How many singular values a truncated SVD keeps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    /// Keep the `r` leading singular values (capped by the numerical rank).
    FixedRank(usize),
    /// Keep every `sigma_i >= tau * sigma_max`.
    RelativeThreshold(f64),
    /// Relative threshold `max(rows, cols) * f64::EPSILON`.
    #[default]
    MachineDefault,
}

impl TruncationRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationRule::FixedRank(0) => {
                Err(Error::BadTruncation("fixed rank must be at least 1".into()))
            }
            TruncationRule::RelativeThreshold(tau) if !(tau > 0.0 && tau < 1.0) => Err(
                Error::BadTruncation(format!("relative threshold {tau} not in (0, 1)")),
            ),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for TruncationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TruncationRule::FixedRank(r) => write!(f, "fixed_rank({r})"),
            TruncationRule::RelativeThreshold(t) => write!(f, "relative_threshold({t:e})"),
            TruncationRule::MachineDefault => f.write_str("machine_default"),
        }
    }
}

/// Thin SVD `m ≈ u · diag(sigma) · vᵀ` restricted to the retained rank.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    pub truncation_rank: usize,
    /// Fraction of `Σσ²` carried by the dropped singular values.
    pub discarded_energy: f64,
}

impl SvdResult {
    pub fn sigma_inv(&self) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.sigma.len(),
            self.sigma.iter().map(|s| 1.0 / s),
        ))
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Singular-value summary of a matrix that was pseudo-inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub sigma_max: f64,
    /// Smallest of the `min(rows, cols)` singular values, zeros included.
    pub sigma_min: f64,
    pub rcond_used: f64,
    /// Number of singular values kept by the pseudoinverse.
    pub rank: usize,
    pub warning: bool,
}

impl Conditioning {
    pub fn ratio(&self) -> f64 {
        if self.sigma_max > 0.0 {
            self.sigma_min / self.sigma_max
        } else {
            0.0
        }
    }

    fn from_singular_values(sigma: &[f64], rcond: f64, rank: usize) -> Self {
        let sigma_max = sigma.first().copied().unwrap_or(0.0);
        let sigma_min = sigma.last().copied().unwrap_or(0.0);
        let mut c = Conditioning {
            sigma_max,
            sigma_min,
            rcond_used: rcond,
            rank,
            warning: false,
        };
        c.warning = sigma.is_empty() || c.ratio() < ILL_CONDITIONED_RATIO;
        c
    }
}

#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvectors, one per column, aligned with `values`.
    pub vectors: ComplexMatrix,
}

pub fn check_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    Ok(())
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full thin SVD with singular values sorted in descending order.
fn sorted_svd(m: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok((Matrix::zeros(rows, 0), Vec::new(), Matrix::zeros(cols, 0)));
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::ConvergenceFailure("singular value decomposition"))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let mut su = Matrix::zeros(rows, k);
    let mut sv = Matrix::zeros(cols, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        // Sign convention: the largest-magnitude entry of each left vector is positive.
        let pivot = (0..rows)
            .max_by(|&a, &b| {
                u[(a, src)]
                    .abs()
                    .total_cmp(&u[(b, src)].abs())
                    .then(b.cmp(&a))
            })
            .expect("rows > 0");
        let sign = if u[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows {
            su[(i, dst)] = sign * u[(i, src)];
        }
        for i in 0..cols {
            sv[(i, dst)] = sign * v[(i, src)];
        }
        sigma.push(s[src].max(0.0));
    }
    Ok((su, sigma, sv))
}

fn numerical_rank(sigma: &[f64], tau: f64) -> usize {
    let Some(&smax) = sigma.first() else {
        return 0;
    };
    sigma
        .iter()
        .take_while(|&&s| s > 0.0 && s >= tau * smax)
        .count()
}

pub fn truncated_svd(m: &Matrix, rule: TruncationRule) -> Result<SvdResult> {
    check_finite(m)?;
    rule.validate()?;
    let machine_tau = m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    let relative = !matches!(rule, TruncationRule::FixedRank(_));
    if relative && m.iter().all(|&x| x == 0.0) {
        return Err(Error::AllZeroMatrix);
    }

    let (u, sigma, v) = sorted_svd(m)?;
    let rank = match rule {
        TruncationRule::FixedRank(r) => r.min(numerical_rank(&sigma, machine_tau)),
        TruncationRule::RelativeThreshold(tau) => numerical_rank(&sigma, tau),
        TruncationRule::MachineDefault => numerical_rank(&sigma, machine_tau),
    };

    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let dropped: f64 = sigma[rank..].iter().map(|s| s * s).sum();
    Ok(SvdResult {
        u: u.columns(0, rank).into_owned(),
        sigma: sigma[..rank].to_vec(),
        v: v.columns(0, rank).into_owned(),
        truncation_rank: rank,
        discarded_energy: if total > 0.0 { dropped / total } else { 0.0 },
    })
}

/// Moore–Penrose pseudoinverse together with the conditioning record of `m`.
pub fn pseudoinverse_with_conditioning(m: &Matrix, rcond: f64) -> Result<(Matrix, Conditioning)> {
    check_finite(m)?;
    if !(rcond >= 0.0) {
        return Err(Error::BadTruncation(format!("rcond {rcond} must be >= 0")));
    }
    let (u, sigma, v) = sorted_svd(m)?;
    let rank = numerical_rank(&sigma, rcond);
    let mut vs = v.columns(0, rank).into_owned();
    for (j, s) in sigma[..rank].iter().enumerate() {
        vs.column_mut(j).scale_mut(1.0 / s);
    }
    let pinv = vs * u.columns(0, rank).transpose();
    Ok((
        pinv,
        Conditioning::from_singular_values(&sigma, rcond, rank),
    ))
}

pub fn pseudoinverse(m: &Matrix, rcond: f64) -> Result<Matrix> {
    pseudoinverse_with_conditioning(m, rcond).map(|(p, _)| p)
}

pub fn frobenius_norm(m: &Matrix) -> Result<f64> {
    check_finite(m)?;
    Ok(m.norm())
}

/// Descending modulus, then descending real part, then descending imaginary part.
pub fn eigenvalue_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

pub fn eig(m: &Matrix) -> Result<EigResult> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let n = rows;
    if n == 0 {
        return Ok(EigResult {
            values: Vec::new(),
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let evd = to_faer(m)
        .eigen()
        .map_err(|_| Error::ConvergenceFailure("eigenvalue iteration"))?;
    let (lambda, w) = (evd.S().column_vector(), evd.U());
    let raw: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(lambda[i].re, lambda[i].im))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalue_order(&raw[a], &raw[b]));

    let values = order.iter().map(|&i| raw[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col =
            nalgebra::DVector::from_fn(n, |i, _| Complex64::new(w[(i, src)].re, w[(i, src)].im));
        vectors.set_column(dst, &canonical_phase(col));
    }
    Ok(EigResult { values, vectors })
}

/// Unit norm, first significant component real and positive.
pub(crate) fn canonical_phase(mut w: nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64> {
    let norm = w.norm();
    if norm == 0.0 {
        return w;
    }
    w /= Complex64::new(norm, 0.0);
    if let Some(idx) = w.iter().position(|c| c.norm() > 1e-8) {
        let c = w[idx];
        let phase = c.conj() / c.norm();
        w *= phase;
        w[idx] = Complex64::new(w[idx].norm(), 0.0);
    }
    w
}

pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
    if top.ncols() != bottom.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot stack {} columns on {} columns",
            top.ncols(),
            bottom.ncols()
        )));
    }
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    Ok(out)
}

pub fn hstack(left: &Matrix, right: &Matrix) -> Result<Matrix> {
    if left.nrows() != right.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cannot place {} rows beside {} rows",
            left.nrows(),
            right.nrows()
        )));
    }
    let mut out = Matrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols())
        .copy_from(right);
    Ok(out)
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged rows".into()));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
