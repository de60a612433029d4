//! Thin wrappers over nalgebra decompositions: sorted Hermitian
//! eigendecomposition, truncated-SVD pseudo-inverse, and numerical rank.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NfError, Result};

/// Hermitian eigendecomposition with eigenvalues sorted descending and
/// eigenvector columns reordered to match.
pub fn hermitian_eigen_sorted(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    eigen_sorted_by(m, |v| v)
}

/// Same, but sorted by descending eigenvalue magnitude. Used for indefinite
/// Hermitian matrices such as cumulant matrices, whose signal eigenvalues
/// can be negative.
pub fn hermitian_eigen_sorted_abs(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    eigen_sorted_by(m, f64::abs)
}

fn eigen_sorted_by(m: &DMatrix<Complex64>, key: fn(f64) -> f64) -> (Vec<f64>, DMatrix<Complex64>) {
    let se = m.clone().symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        key(se.eigenvalues[j])
            .partial_cmp(&key(se.eigenvalues[i]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    if sv.len() == 0 {
        return 0;
    }
    let s_max = sv[0].max(sv.iter().cloned().fold(0.0, f64::max));
    if s_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * s_max).count()
}

/// Minimum-Frobenius-norm pseudo-inverse with singular values below
/// `rel_tol * sigma_max` truncated.
pub fn pinv(m: &DMatrix<Complex64>, rel_tol: f64) -> Result<DMatrix<Complex64>> {
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| NfError::Numerical("SVD failed to produce U".into()))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| NfError::Numerical("SVD failed to produce V^T".into()))?;
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let k = svd.singular_values.len();
    let mut inv_s = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > rel_tol * s_max && s > 0.0 {
            inv_s[(i, i)] = Complex64::new(1.0 / s, 0.0);
        }
    }
    Ok(v_t.adjoint() * inv_s * u.adjoint())
}

/// Solve the Hermitian positive-definite system `M x = b` via Cholesky,
/// falling back to LU when the factorization fails.
pub fn solve_hpd(m: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| NfError::Numerical("singular system in solve_hpd".into()))
}
