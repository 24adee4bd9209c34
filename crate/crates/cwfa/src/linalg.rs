//! Low-rank-plus-diagonal covariance identities.
//!
//! Component covariances have the form `Sigma = Lambda Lambda' + Psi` with
//! `Lambda` a tall p-by-q loading matrix and `Psi` diagonal. Inverse and
//! log-determinant go through the q-by-q inner matrix
//! `M = I_q + Lambda' Psi^-1 Lambda`:
//!
//! `Sigma^-1 = Psi^-1 - Psi^-1 Lambda M^-1 Lambda' Psi^-1`
//! `ln|Sigma| = ln|Psi| + ln|M|`

use nalgebra::{DMatrix, DVector};

use crate::error::{CwfaError, Result};

/// Assemble the dense covariance `Lambda Lambda' + diag(psi)`.
pub fn sigma_from_factors(loadings: &DMatrix<f64>, uniquenesses: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_uniquenesses(loadings, uniquenesses)?;
    let mut sigma = loadings * loadings.transpose();
    for i in 0..uniquenesses.len() {
        sigma[(i, i)] += uniquenesses[i];
    }
    Ok(symmetrize(&sigma))
}

/// Inverse and log-determinant of `Lambda Lambda' + diag(psi)` without
/// factorizing any p-by-p matrix; the only decomposition is a Cholesky of the
/// q-by-q inner matrix.
pub fn woodbury_inverse_logdet(
    loadings: &DMatrix<f64>,
    uniquenesses: &DVector<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    check_uniquenesses(loadings, uniquenesses)?;
    let p = loadings.nrows();
    let q = loadings.ncols();

    // Psi^-1 Lambda, scaling rows of Lambda.
    let mut psi_inv_lambda = loadings.clone();
    for i in 0..p {
        let w = 1.0 / uniquenesses[i];
        for j in 0..q {
            psi_inv_lambda[(i, j)] *= w;
        }
    }

    let inner = DMatrix::identity(q, q) + loadings.transpose() * &psi_inv_lambda;
    let chol = inner.clone().cholesky().ok_or_else(|| {
        CwfaError::DegenerateCovariance("inner q x q matrix is numerically singular".into())
    })?;
    let log_det_inner: f64 = (0..q).map(|j| chol.l()[(j, j)].ln()).sum::<f64>() * 2.0;
    let log_det = uniquenesses.iter().map(|&v| v.ln()).sum::<f64>() + log_det_inner;

    let inner_inv = chol.inverse();
    let mut sigma_inv = -&psi_inv_lambda * inner_inv * psi_inv_lambda.transpose();
    for i in 0..p {
        sigma_inv[(i, i)] += 1.0 / uniquenesses[i];
    }
    Ok((symmetrize(&sigma_inv), log_det))
}

fn check_uniquenesses(loadings: &DMatrix<f64>, uniquenesses: &DVector<f64>) -> Result<()> {
    if uniquenesses.len() != loadings.nrows() {
        return Err(CwfaError::InvalidParameter(format!(
            "uniquenesses length {} does not match loading rows {}",
            uniquenesses.len(),
            loadings.nrows()
        )));
    }
    if uniquenesses.iter().any(|&v| !(v > 0.0)) {
        return Err(CwfaError::InvalidParameter(
            "all uniquenesses must be strictly positive".into(),
        ));
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solve `X Theta = B` for `X` given symmetric `Theta`, adding a ridge of
/// 1e-10 when the smallest eigenvalue drops below 1e-12.
pub(crate) fn solve_against_theta(theta: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = theta.nrows();
    let min_eig = theta
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut t = theta.clone();
    if min_eig < 1e-12 {
        for j in 0..q {
            t[(j, j)] += 1e-10;
        }
    }
    let chol = t
        .cholesky()
        .ok_or_else(|| CwfaError::DegenerateCovariance("latent moment matrix not positive definite".into()))?;
    // X Theta = B  <=>  Theta X' = B' (Theta symmetric)
    let mut xt = rhs.transpose();
    chol.solve_mut(&mut xt);
    Ok(xt.transpose())
}
