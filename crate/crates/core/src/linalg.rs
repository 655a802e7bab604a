//! Small dense helpers shared by the estimators. Everything SPD goes through
//! a Cholesky factor; nothing here forms an explicit inverse of a p×p gain.

use nalgebra::linalg::{Cholesky, SVD};
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Result, RlsError};

const SVD_MAX_ITERS: usize = 10_000;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !is_finite(m) {
        return Err(RlsError::NonFinite(what));
    }
    Cholesky::new(m.clone()).ok_or(RlsError::NonSpdInput(what))
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && is_finite(m) && Cholesky::new(m.clone()).is_some()
}

/// Full SVD, singular values sorted in descending order with U permuted to match.
pub fn svd_sorted(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !is_finite(m) {
        return Err(RlsError::NonFinite("svd input"));
    }
    let svd = SVD::try_new(m.clone(), true, false, f64::EPSILON, SVD_MAX_ITERS).ok_or(RlsError::SvdFailure)?;
    let u = svd.u.ok_or(RlsError::SvdFailure)?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u_sorted = DMatrix::zeros(u.nrows(), order.len());
    let mut s_sorted = DVector::zeros(order.len());
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        s_sorted[dst] = s[src];
    }
    Ok((u_sorted, s_sorted))
}

pub fn singular_values_desc(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !is_finite(m) {
        return Err(RlsError::NonFinite("svd input"));
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, SVD_MAX_ITERS).ok_or(RlsError::SvdFailure)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(s))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues_asc(m: &DMatrix<f64>) -> DVector<f64> {
    let mut e: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(e)
}

/// σ_max/σ_min of an already sorted (descending) spectrum.
pub fn kappa_from_sorted(sigma: &DVector<f64>) -> f64 {
    match (sigma.iter().next(), sigma.iter().next_back()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// max|a−b| / max(1, max|b|), the tolerance measure used across the tests.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(1.0)
}

pub fn rel_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.amax().max(1.0);
    (a - b).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_sorted_orders_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 3.0, 1.0]));
        let (u, s) = svd_sorted(&m).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 1.0, 0.5]);
        let rebuilt = &u * DMatrix::from_diagonal(&s) * u.transpose();
        assert!(max_abs(&(rebuilt - m)) < 1e-14);
    }

    #[test]
    fn kappa_of_singular_spectrum_is_infinite() {
        assert!(kappa_from_sorted(&DVector::from_vec(vec![1.0, 0.0])).is_infinite());
        assert_eq!(kappa_from_sorted(&DVector::from_vec(vec![10.0, 0.1])), 100.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(cholesky(&m, "test").err(), Some(RlsError::NonSpdInput("test")));
        assert!(!is_spd(&m));
    }
}
