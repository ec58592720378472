//! Spectral-floor and ridge regularization of sub-sampled Hessians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsnError};
use crate::model::symmetrize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizationKind {
    None,
    Spectral,
    Ridge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedHessian {
    pub matrix: DMatrix<f64>,
    pub lambda_floor: f64,
    pub kind: RegularizationKind,
    /// Smallest eigenvalue after regularization.
    pub min_eig: f64,
}

fn symmetrized(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !h.is_square() {
        return Err(invalid("H", format!("{}x{} is not square", h.nrows(), h.ncols())));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(SsnError::NonFinite("matrix entries"));
    }
    let mut s = h.clone();
    symmetrize(&mut s);
    Ok(s)
}

/// Full symmetric eigendecomposition of `(H + H^T)/2`.
pub fn symmetric_eigen(h: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let s = symmetrized(h)?;
    SymmetricEigen::try_new(s, f64::EPSILON, 0)
        .ok_or_else(|| SsnError::Eigen("symmetric QR iteration did not converge".into()))
}

pub fn symmetric_eigenvalues(h: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(symmetrized(h)?.symmetric_eigenvalues())
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(h)?.min())
}

/// `sum_i max(lambda_i(H), lambda) v_i v_i^T`.
pub fn spectral_floor(h: &DMatrix<f64>, lambda: f64) -> Result<RegularizedHessian> {
    let eig = symmetric_eigen(h)?;
    spectral_floor_with(h, &eig, lambda)
}

/// Spectral floor reusing an eigendecomposition of `h`.
///
/// When `lambda <= lambda_min` the input is returned untouched; when
/// `lambda >= lambda_max` the result is exactly `lambda I`.
pub fn spectral_floor_with(
    h: &DMatrix<f64>,
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    lambda: f64,
) -> Result<RegularizedHessian> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid("lambda", format!("{lambda} must be finite and >= 0")));
    }
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let p = h.nrows();
    let matrix = if lambda <= lo {
        symmetrized(h)?
    } else if lambda >= hi {
        DMatrix::identity(p, p) * lambda
    } else {
        let floored = eig.eigenvalues.map(|l| l.max(lambda));
        let v = &eig.eigenvectors;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= floored[j];
        }
        let mut m = scaled * v.transpose();
        symmetrize(&mut m);
        m
    };
    Ok(RegularizedHessian {
        matrix,
        lambda_floor: lambda,
        kind: RegularizationKind::Spectral,
        min_eig: lo.max(lambda),
    })
}

/// `H + lambda I`. `min_eig` is left as NaN since no eigensolve is done.
pub fn ridge(h: &DMatrix<f64>, lambda: f64) -> Result<RegularizedHessian> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid("lambda", format!("{lambda} must be finite and >= 0")));
    }
    let mut matrix = symmetrized(h)?;
    for d in 0..matrix.nrows() {
        matrix[(d, d)] += lambda;
    }
    Ok(RegularizedHessian {
        matrix,
        lambda_floor: lambda,
        kind: RegularizationKind::Ridge,
        min_eig: f64::NAN,
    })
}
