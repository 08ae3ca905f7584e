//! Dynamic mode decomposition, with and without control inputs.
//!
//! Exact variants solve the least-squares problem `Y ≈ [A B] [Z; Γ]` with
//! the pseudoinverse, which gives the minimum-Frobenius-norm solution when
//! the data underdetermine it. Reduced variants follow the two-SVD scheme:
//! project onto the leading left singular vectors of the output data and
//! work with the small operator `Ã = Ûᵀ A Û`.
//!
//! The data matrices are taken as given, so any observable lifting happens
//! before the call.

use serde::{Deserialize, Serialize};

use crate::numkernel::{
    self, eig, from_rows, pseudoinverse_with_conditioning, to_rows, truncated_svd, vstack,
    Complex64, ComplexMatrix, Conditioning, Matrix, TruncationRule,
};
use crate::sysmodel::Vector;
use crate::{Error, Result};

/// Eigenvalues with `|λ| < MODE_ZERO_TOL * max|λ|` get no mode.
pub const MODE_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactLinearModel {
    pub a: Matrix,
    /// Absent for plain DMD.
    pub b: Option<Matrix>,
    pub conditioning: Conditioning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLinearModel {
    pub a_tilde: Matrix,
    pub b_tilde: Option<Matrix>,
    /// Orthonormal basis of the reduced state space; `z̃ = Ûᵀ z`.
    pub u_hat: Matrix,
    /// Rank kept from the SVD of the regression data (`Ω`, or `Z` for DMD).
    pub p: usize,
    /// Rank kept from the SVD of the output data.
    pub r: usize,
}

impl ReducedLinearModel {
    /// Full-space operators `(Û Ã Ûᵀ, Û B̃)`.
    pub fn lift(&self) -> (Matrix, Option<Matrix>) {
        let a = &self.u_hat * &self.a_tilde * self.u_hat.transpose();
        let b = self.b_tilde.as_ref().map(|b| &self.u_hat * b);
        (a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSource {
    Exact,
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicModes {
    pub eigenvalues: Vec<Complex64>,
    /// One mode per column, aligned with `eigenvalues`.
    pub modes: ComplexMatrix,
    pub source: ModeSource,
    /// Eigenvalues dropped for being numerically zero.
    pub excluded_near_zero: usize,
}

fn mismatch(msg: String) -> Error {
    Error::DimensionMismatch(msg)
}

fn check_pair(z: &Matrix, y: &Matrix) -> Result<()> {
    if z.ncols() != y.ncols() || z.ncols() == 0 {
        return Err(mismatch(format!(
            "z has {} snapshots and y has {}; need equal counts >= 1",
            z.ncols(),
            y.ncols()
        )));
    }
    if z.nrows() != y.nrows() {
        return Err(mismatch(format!(
            "z has {} rows but y has {}",
            z.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

fn check_input(z: &Matrix, gamma: &Matrix) -> Result<()> {
    if gamma.ncols() != z.ncols() {
        return Err(mismatch(format!(
            "gamma has {} snapshots, z has {}",
            gamma.ncols(),
            z.ncols()
        )));
    }
    Ok(())
}

/// `A = Y Z†`.
pub fn dmd_exact(z: &Matrix, y: &Matrix, rcond: f64) -> Result<ExactLinearModel> {
    check_pair(z, y)?;
    let (pinv, conditioning) = pseudoinverse_with_conditioning(z, rcond)?;
    numkernel::check_finite(y)?;
    Ok(ExactLinearModel {
        a: y * pinv,
        b: None,
        conditioning,
    })
}

/// `[A B] = Y [Z; Γ]†`.
pub fn dmdc_exact(z: &Matrix, y: &Matrix, gamma: &Matrix, rcond: f64) -> Result<ExactLinearModel> {
    check_pair(z, y)?;
    check_input(z, gamma)?;
    let omega = vstack(z, gamma)?;
    let (pinv, conditioning) = pseudoinverse_with_conditioning(&omega, rcond)?;
    numkernel::check_finite(y)?;
    let g = y * pinv;
    let n = z.nrows();
    Ok(ExactLinearModel {
        a: g.columns(0, n).into_owned(),
        b: Some(g.columns(n, gamma.nrows()).into_owned()),
        conditioning,
    })
}

/// Eigendecomposition of an exact model's `A`.
pub fn dmd_modes(model: &ExactLinearModel) -> Result<DynamicModes> {
    let e = eig(&model.a)?;
    let keep = nonzero_eigenvalues(&e.values);
    Ok(DynamicModes {
        eigenvalues: keep.iter().map(|&i| e.values[i]).collect(),
        modes: select_columns(&e.vectors, &keep),
        source: ModeSource::Exact,
        excluded_near_zero: e.values.len() - keep.len(),
    })
}

fn nonzero_eigenvalues(values: &[Complex64]) -> Vec<usize> {
    let largest = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = MODE_ZERO_TOL * largest;
    (0..values.len())
        .filter(|&i| values[i].norm() > 0.0 && values[i].norm() >= tol)
        .collect()
}

fn select_columns(m: &ComplexMatrix, cols: &[usize]) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

fn complexify(m: &Matrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Reduced DMD with control.
///
/// 1. `Ω ≈ U Σ Vᵀ` truncated by `input_rule`; `Uᵀ = [U₁ᵀ U₂ᵀ]`.
/// 2. `Y ≈ Û Σ̂ V̂ᵀ` truncated by `output_rule`.
/// 3. `Ã = Ûᵀ Y V Σ⁻¹ U₁ᵀ Û`, `B̃ = Ûᵀ Y V Σ⁻¹ U₂ᵀ`.
/// 4. `Ã W = W Λ`.
/// 5. `Φ = Y V Σ⁻¹ U₁ᵀ Û W`.
pub fn dmdc_reduced(
    z: &Matrix,
    y: &Matrix,
    gamma: &Matrix,
    input_rule: TruncationRule,
    output_rule: TruncationRule,
) -> Result<(ReducedLinearModel, DynamicModes)> {
    check_pair(z, y)?;
    check_input(z, gamma)?;
    let n = z.nrows();
    let omega = vstack(z, gamma)?;

    let input_svd = truncated_svd(&omega, input_rule)?;
    let u1 = input_svd.u.rows(0, n);
    let u2 = input_svd.u.rows(n, gamma.nrows());
    let output_svd = truncated_svd(y, output_rule)?;
    let u_hat = output_svd.u;

    let core = y * &input_svd.v * input_svd.sigma_inv();
    let core_state = &core * u1.transpose() * &u_hat;
    let a_tilde = u_hat.transpose() * &core_state;
    let b_tilde = u_hat.transpose() * &core * u2.transpose();

    let e = eig(&a_tilde)?;
    let keep = nonzero_eigenvalues(&e.values);
    let w = select_columns(&e.vectors, &keep);
    let modes = DynamicModes {
        eigenvalues: keep.iter().map(|&i| e.values[i]).collect(),
        modes: complexify(&core_state) * w,
        source: ModeSource::Reduced,
        excluded_near_zero: e.values.len() - keep.len(),
    };
    let model = ReducedLinearModel {
        a_tilde,
        b_tilde: Some(b_tilde),
        p: input_svd.truncation_rank,
        r: output_svd.truncation_rank,
        u_hat,
    };
    Ok((model, modes))
}

/// Reduced DMD: `Z ≈ U Σ Vᵀ`, `Ã = Uᵀ Y V Σ⁻¹`, and for each eigenpair
/// `(λ, w)` of `Ã` with `λ ≠ 0` the mode `φ = λ⁻¹ Y V Σ⁻¹ w`.
pub fn dmd_reduced(
    z: &Matrix,
    y: &Matrix,
    rule: TruncationRule,
) -> Result<(ReducedLinearModel, DynamicModes)> {
    check_pair(z, y)?;
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::AllZeroMatrix);
    }
    let svd = truncated_svd(z, rule)?;
    let core = y * &svd.v * svd.sigma_inv();
    let a_tilde = svd.u.transpose() * &core;

    let e = eig(&a_tilde)?;
    let keep = nonzero_eigenvalues(&e.values);
    let core_c = complexify(&core);
    let mut modes = ComplexMatrix::zeros(z.nrows(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        let phi = &core_c * e.vectors.column(src) / e.values[src];
        modes.set_column(dst, &phi);
    }
    let rank = svd.truncation_rank;
    let model = ReducedLinearModel {
        a_tilde,
        b_tilde: None,
        u_hat: svd.u,
        p: rank,
        r: rank,
    };
    let modes = DynamicModes {
        eigenvalues: keep.iter().map(|&i| e.values[i]).collect(),
        modes,
        source: ModeSource::Reduced,
        excluded_near_zero: e.values.len() - keep.len(),
    };
    Ok((model, modes))
}

/// Rollout of an identified linear model.
pub trait Predict {
    /// Iterates `m` steps from `x0` under input columns `0..m` and returns
    /// the `n × (m + 1)` state history, starting with `x0` (as the model
    /// sees it).
    fn predict(&self, x0: &Vector, inputs: &Matrix, m: usize) -> Result<Matrix>;
}

fn rollout(
    a: &Matrix,
    b: Option<&Matrix>,
    x0: Vector,
    inputs: &Matrix,
    m: usize,
) -> Result<Vec<Vector>> {
    if x0.len() != a.ncols() {
        return Err(mismatch(format!(
            "x0 has {} entries, model state has {}",
            x0.len(),
            a.ncols()
        )));
    }
    if let Some(b) = b {
        if b.ncols() > 0 && (inputs.nrows() != b.ncols() || inputs.ncols() < m) {
            return Err(mismatch(format!(
                "need a {}x{m} (or wider) input matrix, got {}x{}",
                b.ncols(),
                inputs.nrows(),
                inputs.ncols()
            )));
        }
    }
    let mut states = Vec::with_capacity(m + 1);
    states.push(x0);
    for k in 0..m {
        let mut next = a * &states[k];
        if let Some(b) = b.filter(|b| b.ncols() > 0) {
            next += b * inputs.column(k);
        }
        states.push(next);
    }
    Ok(states)
}

fn to_columns(n: usize, states: &[Vector]) -> Matrix {
    Matrix::from_fn(n, states.len(), |i, k| states[k][i])
}

impl Predict for ExactLinearModel {
    fn predict(&self, x0: &Vector, inputs: &Matrix, m: usize) -> Result<Matrix> {
        let states = rollout(&self.a, self.b.as_ref(), x0.clone(), inputs, m)?;
        Ok(to_columns(self.a.nrows(), &states))
    }
}

impl Predict for ReducedLinearModel {
    fn predict(&self, x0: &Vector, inputs: &Matrix, m: usize) -> Result<Matrix> {
        if x0.len() != self.u_hat.nrows() {
            return Err(mismatch(format!(
                "x0 has {} entries, model state has {}",
                x0.len(),
                self.u_hat.nrows()
            )));
        }
        let reduced_x0 = self.u_hat.transpose() * x0;
        let states = rollout(&self.a_tilde, self.b_tilde.as_ref(), reduced_x0, inputs, m)?;
        Ok(&self.u_hat * to_columns(self.a_tilde.nrows(), &states))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(c: Complex64) -> Self {
        ComplexValue { re: c.re, im: c.im }
    }
}

impl From<ComplexValue> for Complex64 {
    fn from(c: ComplexValue) -> Self {
        Complex64::new(c.re, c.im)
    }
}

/// JSON form of an identified model. Matrices are lists of rows; `modes`
/// is the row-major `n × k` mode matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Option<Vec<Vec<f64>>>,
    pub eigenvalues: Vec<ComplexValue>,
    pub modes: Vec<Vec<ComplexValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<Conditioning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_hat: Option<Vec<Vec<f64>>>,
}

fn complex_rows(m: &ComplexMatrix) -> Vec<Vec<ComplexValue>> {
    m.row_iter()
        .map(|r| r.iter().map(|&c| c.into()).collect())
        .collect()
}

impl ModelDocument {
    pub fn from_exact(model: &ExactLinearModel, modes: &DynamicModes) -> Self {
        ModelDocument {
            a: to_rows(&model.a),
            b: model.b.as_ref().map(to_rows),
            eigenvalues: modes.eigenvalues.iter().map(|&c| c.into()).collect(),
            modes: complex_rows(&modes.modes),
            conditioning: Some(model.conditioning),
            u_hat: None,
        }
    }

    pub fn from_reduced(model: &ReducedLinearModel, modes: &DynamicModes) -> Self {
        ModelDocument {
            a: to_rows(&model.a_tilde),
            b: model.b_tilde.as_ref().map(to_rows),
            eigenvalues: modes.eigenvalues.iter().map(|&c| c.into()).collect(),
            modes: complex_rows(&modes.modes),
            conditioning: None,
            u_hat: Some(to_rows(&model.u_hat)),
        }
    }

    /// `(A, B)` as matrices. An empty row list for `B` means zero input columns.
    pub fn matrices(&self) -> Result<(Matrix, Option<Matrix>)> {
        let a = from_rows(&self.a)?;
        let b = self.b.as_deref().map(from_rows).transpose()?;
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::DEFAULT_RCOND;
    use crate::sysmodel::{random_inputs, seeded_rng, Interval};

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_row_slice(1, v.len(), v)
    }

    fn node_one() -> (Matrix, Matrix, Matrix) {
        (
            row(&[2.0, 0.1, -1.63]),
            row(&[0.1, -1.63, -2.926]),
            Matrix::from_row_slice(2, 3, &[5.0, 4.3, 3.54, 0.2, 0.4, 0.8]),
        )
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        random_inputs(rows, cols, Interval(-1.0, 1.0), &mut seeded_rng(seed))
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    /// Normal-equations least squares `Y Zᵀ (Z Zᵀ)⁻¹`, independent of the SVD path.
    fn normal_equations(z: &Matrix, y: &Matrix) -> Matrix {
        y * z.transpose() * (z * z.transpose()).try_inverse().expect("full row rank")
    }

    #[test]
    fn dmd_exact_examples() {
        let a = dmd_exact(
            &Matrix::identity(2, 2),
            &Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])),
            DEFAULT_RCOND,
        )
        .unwrap();
        assert!((a.a - Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]))).amax() < 1e-14);
        assert!(a.b.is_none());
        let zero = dmd_exact(&random(3, 4, 1), &Matrix::zeros(3, 4), DEFAULT_RCOND).unwrap();
        assert!(zero.a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dmd_exact_recovers_known_operator() {
        let a0 = random(4, 4, 2);
        let z = random(4, 6, 3);
        let model = dmd_exact(&z, &(&a0 * &z), DEFAULT_RCOND).unwrap();
        assert!(rel_err(&model.a, &a0) < 1e-8);
        assert!(!model.conditioning.warning);
    }

    #[test]
    fn dmd_shape_errors() {
        assert!(dmd_exact(&Matrix::zeros(2, 3), &Matrix::zeros(2, 4), DEFAULT_RCOND).is_err());
        assert!(dmd_exact(&Matrix::zeros(2, 3), &Matrix::zeros(3, 3), DEFAULT_RCOND).is_err());
        assert!(dmdc_exact(
            &Matrix::zeros(2, 3),
            &Matrix::zeros(2, 3),
            &Matrix::zeros(1, 2),
            DEFAULT_RCOND
        )
        .is_err());
    }

    #[test]
    fn dmdc_exact_node_examples() {
        let (z, y, gamma) = node_one();
        let m = dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap();
        let b = m.b.unwrap();
        for (got, want) in [m.a[(0, 0)], b[(0, 0)], b[(0, 1)]]
            .iter()
            .zip([1.2, -0.5, 1.0])
        {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }

        let m = dmdc_exact(
            &row(&[5.0, 4.3, 3.54]),
            &row(&[4.3, 3.54, 3.132]),
            &row(&[0.3, 0.1, 0.3]),
            DEFAULT_RCOND,
        )
        .unwrap();
        assert!((m.a[(0, 0)] - 0.8).abs() < 1e-9);
        assert!((m.b.unwrap()[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dmdc_zero_input_row_gets_zero_column() {
        let z = random(3, 5, 4);
        let y = &z * 2.0;
        let m = dmdc_exact(&z, &y, &Matrix::zeros(1, 5), DEFAULT_RCOND).unwrap();
        assert!(rel_err(&m.a, &normal_equations(&z, &y)) < 1e-10);
        assert!(rel_err(&m.a, &(Matrix::identity(3, 3) * 2.0)) < 1e-10);
        assert!(m.b.unwrap().amax() < 1e-12);
    }

    #[test]
    fn reduced_full_rank_matches_exact_on_node_data() {
        let (z, y, gamma) = node_one();
        let exact = dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap();
        let (red, _) = dmdc_reduced(
            &z,
            &y,
            &gamma,
            TruncationRule::FixedRank(3),
            TruncationRule::FixedRank(1),
        )
        .unwrap();
        assert_eq!((red.p, red.r), (3, 1));
        let (a, b) = red.lift();
        assert!((a - &exact.a).amax() < 1e-8);
        assert!((b.unwrap() - exact.b.unwrap()).amax() < 1e-8);
    }

    #[test]
    fn reduced_identity_data() {
        let n = 3;
        let i = Matrix::identity(n, n);
        let (red, modes) = dmdc_reduced(
            &i,
            &i,
            &Matrix::zeros(2, n),
            TruncationRule::MachineDefault,
            TruncationRule::MachineDefault,
        )
        .unwrap();
        assert!((&red.a_tilde - Matrix::identity(red.r, red.r)).amax() < 1e-12);
        assert!(modes
            .eigenvalues
            .iter()
            .all(|l| (l - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn reduced_recovers_diagonal_spectrum() {
        let a0 = Matrix::from_diagonal(&Vector::from_vec(vec![0.9, 0.5]));
        let b0 = Matrix::from_row_slice(2, 1, &[1.0, -0.5]);
        let z = random(2, 8, 5);
        let gamma = random(1, 8, 6);
        let y = &a0 * &z + &b0 * &gamma;
        let (red, modes) = dmdc_reduced(
            &z,
            &y,
            &gamma,
            TruncationRule::MachineDefault,
            TruncationRule::MachineDefault,
        )
        .unwrap();
        assert_eq!((red.p, red.r), (3, 2));
        assert!((modes.eigenvalues[0] - Complex64::new(0.9, 0.0)).norm() < 1e-8);
        assert!((modes.eigenvalues[1] - Complex64::new(0.5, 0.0)).norm() < 1e-8);
        // Modes are eigenvectors of A0 here, since Ω has full row rank.
        let ac = complexify(&a0);
        for (k, l) in modes.eigenvalues.iter().enumerate() {
            let phi = modes.modes.column(k);
            assert!((&ac * phi - phi * *l).norm() < 1e-8 * phi.norm());
        }
        assert!(dmdc_reduced(
            &z,
            &Matrix::zeros(2, 8),
            &gamma,
            TruncationRule::MachineDefault,
            TruncationRule::MachineDefault
        )
        .is_err());
    }

    #[test]
    fn dmd_reduced_examples() {
        let z = random(3, 5, 7);
        let (_, modes) = dmd_reduced(&z, &z, TruncationRule::MachineDefault).unwrap();
        assert_eq!(modes.eigenvalues.len(), 3);
        assert!(modes
            .eigenvalues
            .iter()
            .all(|l| (l - Complex64::new(1.0, 0.0)).norm() < 1e-10));

        let (red, modes) = dmd_reduced(&z, &(&z * 0.7), TruncationRule::MachineDefault).unwrap();
        assert!((modes.eigenvalues[0] - Complex64::new(0.7, 0.0)).norm() < 1e-10);
        assert!((red.a_tilde.clone() - Matrix::identity(3, 3) * 0.7).amax() < 1e-10);
    }

    #[test]
    fn dmd_reduced_modes_are_eigenvectors() {
        let a0 = Matrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.5]);
        let z = random(2, 10, 8);
        let y = &a0 * &z;
        let (_, modes) = dmd_reduced(&z, &y, TruncationRule::MachineDefault).unwrap();
        let oracle = eig(&a0).unwrap();
        for k in 0..2 {
            assert!((modes.eigenvalues[k] - oracle.values[k]).norm() < 1e-8);
            let phi = modes.modes.column(k);
            let w = oracle.vectors.column(k);
            // Parallel up to a complex scale: |<w, φ>| = |φ|.
            assert!((w.dotc(&phi).norm() - phi.norm()).abs() < 1e-8 * phi.norm());
        }
        let ac = complexify(&a0);
        let lam =
            ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(modes.eigenvalues.clone()));
        assert!((&ac * &modes.modes - &modes.modes * lam).norm() <= 1e-8);
    }

    #[test]
    fn near_zero_eigenvalues_get_no_mode() {
        // Nilpotent direction: the second state is wiped every step.
        let a0 = Matrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.0]);
        let z = random(2, 4, 9);
        let (_, modes) = dmd_reduced(&z, &(&a0 * &z), TruncationRule::MachineDefault).unwrap();
        assert_eq!(modes.eigenvalues.len(), 1);
        assert_eq!(modes.excluded_near_zero, 1);
        let exact = dmd_exact(&z, &(&a0 * &z), DEFAULT_RCOND).unwrap();
        assert_eq!(dmd_modes(&exact).unwrap().excluded_near_zero, 1);
    }

    #[test]
    fn predict_examples() {
        // Global data of the two-node example: Ω is 4x3 with full column rank,
        // so even the min-norm model reproduces every successor.
        let z = Matrix::from_row_slice(2, 3, &[2.0, 0.1, -1.63, 5.0, 4.3, 3.54]);
        let y = Matrix::from_row_slice(2, 3, &[0.1, -1.63, -2.926, 4.3, 3.54, 3.132]);
        let u = Matrix::from_row_slice(2, 3, &[0.2, 0.4, 0.8, 0.3, 0.1, 0.3]);
        let model = dmdc_exact(&z, &y, &u, DEFAULT_RCOND).unwrap();
        let roll = model
            .predict(&Vector::from_vec(vec![2.0, 5.0]), &u, 3)
            .unwrap();
        assert!((roll.columns(1, 3) - &y).amax() < 1e-9);

        let zero = ExactLinearModel {
            a: Matrix::zeros(2, 2),
            b: Some(Matrix::zeros(2, 1)),
            conditioning: model.conditioning,
        };
        let roll = zero
            .predict(
                &Vector::from_vec(vec![1.0, 2.0]),
                &Matrix::from_element(1, 4, 3.0),
                4,
            )
            .unwrap();
        assert_eq!(roll.column(0).as_slice(), &[1.0, 2.0]);
        assert!(roll.columns(1, 4).iter().all(|&x| x == 0.0));

        let ident = ExactLinearModel {
            a: Matrix::identity(2, 2),
            b: None,
            conditioning: model.conditioning,
        };
        let roll = ident
            .predict(&Vector::from_vec(vec![1.0, 2.0]), &Matrix::zeros(0, 5), 5)
            .unwrap();
        assert!(roll.column_iter().all(|c| c.as_slice() == [1.0, 2.0]));
        assert!(model.predict(&Vector::zeros(3), &u, 3).is_err());
        assert!(model.predict(&Vector::zeros(2), &u, 4).is_err());
    }

    #[test]
    fn model_document_round_trip() {
        let (z, y, gamma) = node_one();
        let m = dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap();
        let modes = dmd_modes(&m).unwrap();
        let doc = ModelDocument::from_exact(&m, &modes);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.starts_with(r#"{"A":[["#));
        let back: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        let (a, b) = back.matrices().unwrap();
        assert_eq!(a, m.a);
        assert_eq!(b, m.b);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn exact_recovery(seed in 0u64..u64::MAX, n in 1usize..5, l in 0usize..3, extra in 0usize..4) {
            let m = n + l + extra;
            let a0 = random(n, n, seed);
            let b0 = random(n, l, seed ^ 1);
            let z = random(n, m, seed ^ 2);
            let gamma = random(l, m, seed ^ 3);
            let y = &a0 * &z + &b0 * &gamma;
            let model = dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap();
            proptest::prop_assume!(!model.conditioning.warning);
            let truth = numkernel::hstack(&a0, &b0).unwrap();
            let got = numkernel::hstack(&model.a, model.b.as_ref().unwrap()).unwrap();
            proptest::prop_assert!(rel_err(&got, &truth) < 1e-8);
        }

        #[test]
        fn reduced_rollout_matches_exact(seed in 0u64..u64::MAX, n in 1usize..5, l in 0usize..3, extra in 0usize..4) {
            let m = n + l + extra;
            let a0 = random(n, n, seed) * 0.5;
            let b0 = random(n, l, seed ^ 1);
            let z = random(n, m, seed ^ 2);
            let gamma = random(l, m, seed ^ 3);
            let y = &a0 * &z + &b0 * &gamma;
            let exact = dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap();
            proptest::prop_assume!(!exact.conditioning.warning);
            let (red, _) = dmdc_reduced(&z, &y, &gamma, TruncationRule::FixedRank(n + l), TruncationRule::FixedRank(n)).unwrap();
            proptest::prop_assert_eq!(red.r, n);
            let orth = red.u_hat.transpose() * &red.u_hat - Matrix::identity(red.r, red.r);
            proptest::prop_assert!(orth.amax() < 1e-10);
            let x0 = random(n, 1, seed ^ 4).column(0).into_owned();
            let inputs = random(l, 10, seed ^ 5);
            let want = exact.predict(&x0, &inputs, 10).unwrap();
            let got = red.predict(&x0, &inputs, 10).unwrap();
            proptest::prop_assert!((&got - &want).norm() <= 1e-6 * want.norm().max(1.0));
        }

        #[test]
        fn exact_mode_residual(seed in 0u64..u64::MAX, n in 1usize..7, m in 1usize..10) {
            let z = random(n, m, seed);
            let y = random(n, m, seed ^ 7);
            let model = dmd_exact(&z, &y, DEFAULT_RCOND).unwrap();
            let modes = dmd_modes(&model).unwrap();
            let a = complexify(&model.a);
            let lam = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(modes.eigenvalues.clone()));
            let residual = (&a * &modes.modes - &modes.modes * lam).norm();
            proptest::prop_assert!(residual <= 1e-6 * model.a.norm() * modes.modes.norm());
            for (k, l) in modes.eigenvalues.iter().enumerate() {
                let phi = modes.modes.column(k);
                proptest::prop_assert!((&a * phi - phi * *l).norm() <= 1e-6 * model.a.norm());
            }
        }

        #[test]
        fn identification_is_deterministic(seed in 0u64..u64::MAX, n in 1usize..5, l in 0usize..3, m in 1usize..8) {
            let z = random(n, m, seed);
            let y = random(n, m, seed ^ 1);
            let gamma = random(l, m, seed ^ 2);
            let rule = TruncationRule::MachineDefault;
            proptest::prop_assert_eq!(dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap(), dmdc_exact(&z, &y, &gamma, DEFAULT_RCOND).unwrap());
            let first = dmdc_reduced(&z, &y, &gamma, rule, rule).unwrap();
            let second = dmdc_reduced(&z, &y, &gamma, rule, rule).unwrap();
            proptest::prop_assert_eq!(first, second);
        }
    }
}
