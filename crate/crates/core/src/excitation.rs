//! Persistent-excitation diagnostics: windowed Gram matrices, the scan over
//! all complete windows, and the spectral bounds on P⁻¹ they imply.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Result, RlsError};
use crate::linalg::{self, symmetrize};

pub const DEFAULT_PE_TOL: f64 = 1e-12;

/// Slack used by [`check_bounds`], relative to the magnitude being bounded.
pub const BOUND_SLACK: f64 = 1e-9;

/// F_{j,j+N} = Σ_{i=j}^{j+N} φᵢᵀφᵢ.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGram {
    pub j: usize,
    pub n_window: usize,
    pub f: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

/// Spectrum of one scanned window without the matrix itself.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSummary {
    pub j: usize,
    pub sigma: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    pub n_window: usize,
    pub tol: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub is_pe: bool,
    pub windows: Vec<WindowSummary>,
}

impl PeReport {
    /// Only the windows present in the data were inspected.
    pub fn verdict_label(&self) -> &'static str {
        if self.is_pe {
            "observed: persistently exciting"
        } else {
            "observed: not persistently exciting"
        }
    }
}

fn gram_sum(regressors: &[DMatrix<f64>], j: usize, n_window: usize) -> Result<DMatrix<f64>> {
    let end = j + n_window;
    if end >= regressors.len() {
        return Err(RlsError::IndexOutOfRange {
            start: j,
            end,
            len: regressors.len(),
        });
    }
    let n = regressors[j].ncols();
    let mut f = DMatrix::zeros(n, n);
    for phi in &regressors[j..=end] {
        if phi.ncols() != n {
            return Err(dim_mismatch("window_gram", n, phi.ncols()));
        }
        f += phi.transpose() * phi;
    }
    Ok(symmetrize(&f))
}

pub fn window_gram(regressors: &[DMatrix<f64>], j: usize, n_window: usize) -> Result<WindowGram> {
    let f = gram_sum(regressors, j, n_window)?;
    let sigma = linalg::singular_values_desc(&f)?;
    Ok(WindowGram { j, n_window, f, sigma })
}

/// Scans every complete window of length N+1. Declared persistently exciting
/// when α̂ > tol·β̂.
pub fn pe_scan(regressors: &[DMatrix<f64>], n_window: usize, tol: f64) -> Result<PeReport> {
    if regressors.len() < n_window + 1 {
        return Err(RlsError::InsufficientData {
            needed: n_window + 1,
            got: regressors.len(),
        });
    }
    let mut windows = Vec::with_capacity(regressors.len() - n_window);
    let mut alpha_hat = f64::INFINITY;
    let mut beta_hat = 0.0_f64;
    for j in 0..regressors.len() - n_window {
        let sigma = linalg::singular_values_desc(&gram_sum(regressors, j, n_window)?)?;
        beta_hat = beta_hat.max(sigma[0]);
        alpha_hat = alpha_hat.min(sigma[sigma.len() - 1]);
        windows.push(WindowSummary { j, sigma });
    }
    let is_pe = beta_hat > 0.0 && alpha_hat > tol * beta_hat;
    Ok(PeReport {
        n_window,
        tol,
        alpha_hat,
        beta_hat,
        is_pe,
        windows,
    })
}

pub fn condition_number(p: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::kappa_from_sorted(&linalg::singular_values_desc(p)?))
}

/// One side of a spectral bound: c·I or a full matrix, compared in the
/// Loewner order.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundSide {
    None,
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Prop3,
    Prop4,
    Prop5,
    Prop10,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBound {
    pub lower: BoundSide,
    pub upper: BoundSide,
}

impl SpectralBound {
    pub fn unbounded() -> Self {
        Self {
            lower: BoundSide::None,
            upper: BoundSide::None,
        }
    }
}

fn check_range(name: &str, value: f64, ok: bool) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(RlsError::ParameterOutOfRange(format!("{name} = {value}")))
    }
}

fn check_lambda_open(lambda: f64) -> Result<()> {
    check_range("lambda (must lie in (0, 1))", lambda, lambda > 0.0 && lambda < 1.0)
}

/// λ = 1, k ≥ N+1:
/// ⌊k/(N+1)⌋αI + P0⁻¹ ≤ P_k⁻¹ ≤ ⌈k/(N+1)⌉βI + P0⁻¹.
pub fn bound_prop3(k: usize, n_window: usize, alpha: f64, beta: f64, p0_inv: &DMatrix<f64>) -> Result<SpectralBound> {
    check_range("alpha", alpha, alpha > 0.0)?;
    check_range("beta", beta, beta >= alpha)?;
    let w = n_window + 1;
    if k < w {
        return Err(RlsError::ParameterOutOfRange(format!(
            "k = {k} must be at least N+1 = {w}"
        )));
    }
    let eye = DMatrix::identity(p0_inv.nrows(), p0_inv.ncols());
    let lo = (k / w) as f64;
    let hi = k.div_ceil(w) as f64;
    Ok(SpectralBound {
        lower: BoundSide::Matrix(&eye * (lo * alpha) + p0_inv),
        upper: BoundSide::Matrix(&eye * (hi * beta) + p0_inv),
    })
}

/// λ ∈ (0,1), k ≥ N+1:
/// λᴺ(1−λ)α/(1−λᴺ⁺¹) I ≤ P_k⁻¹ ≤ β/(1−λᴺ⁺¹) I + P_N⁻¹.
pub fn bound_prop4(
    n_window: usize,
    alpha: f64,
    beta: f64,
    lambda: f64,
    pn_inv: &DMatrix<f64>,
) -> Result<SpectralBound> {
    check_lambda_open(lambda)?;
    check_range("alpha", alpha, alpha > 0.0)?;
    check_range("beta", beta, beta >= alpha)?;
    let geo = 1.0 - lambda.powi(n_window as i32 + 1);
    let eye = DMatrix::identity(pn_inv.nrows(), pn_inv.ncols());
    Ok(SpectralBound {
        lower: BoundSide::Scalar(lambda.powi(n_window as i32) * (1.0 - lambda) * alpha / geo),
        upper: BoundSide::Matrix(eye * (beta / geo) + pn_inv),
    })
}

/// Smallest window length N for which the converse bounds apply.
pub fn prop5_min_window(lambda: f64, alpha_bar: f64, beta_bar: f64) -> f64 {
    (lambda * beta_bar - alpha_bar) / ((1.0 - lambda) * alpha_bar)
}

/// Window bounds implied by ᾱI ≤ P_k⁻¹ ≤ β̄I:
/// [(1+(1−λ)N)ᾱ − λβ̄] I ≤ F_{j,j+N} ≤ (1−λᴺ⁺¹)/(λᴺ(1−λ)) β̄ I.
pub fn bound_prop5(lambda: f64, alpha_bar: f64, beta_bar: f64, n_window: usize) -> Result<(f64, f64)> {
    check_lambda_open(lambda)?;
    check_range("alpha_bar", alpha_bar, alpha_bar > 0.0)?;
    check_range("beta_bar", beta_bar, beta_bar >= alpha_bar)?;
    let need = prop5_min_window(lambda, alpha_bar, beta_bar);
    // Rounding in the ratio must not reject the boundary case N = need.
    if (n_window as f64) < need - 1e-9 * need.abs().max(1.0) {
        return Err(RlsError::ParameterOutOfRange(format!(
            "N = {n_window} below the required {need}"
        )));
    }
    let nf = n_window as f64;
    let lower = (1.0 + (1.0 - lambda) * nf) * alpha_bar - lambda * beta_bar;
    let upper = (1.0 - lambda.powi(n_window as i32 + 1)) / (lambda.powi(n_window as i32) * (1.0 - lambda)) * beta_bar;
    Ok((lower, upper))
}

/// Lower bound on P_k⁻¹ under variable-direction forgetting, same form as
/// the uniform one: λᴺ(1−λ)α/(1−λᴺ⁺¹).
pub fn bound_prop10(n_window: usize, alpha: f64, lambda: f64) -> Result<f64> {
    check_lambda_open(lambda)?;
    check_range("alpha", alpha, alpha > 0.0)?;
    Ok(lambda.powi(n_window as i32) * (1.0 - lambda) * alpha / (1.0 - lambda.powi(n_window as i32 + 1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub kind: BoundKind,
    pub steps_checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Smallest normalized margin seen; negative beyond −slack means a violation.
    pub worst_margin: f64,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn side_margin(x: &DMatrix<f64>, side: &BoundSide, lower: bool) -> Option<f64> {
    let diff = match side {
        BoundSide::None => return None,
        BoundSide::Scalar(c) => {
            let e = linalg::sym_eigenvalues_asc(x);
            return Some(if lower { e[0] - c } else { c - e[e.len() - 1] });
        }
        BoundSide::Matrix(m) => {
            if lower {
                x - m
            } else {
                m - x
            }
        }
    };
    Some(linalg::sym_eigenvalues_asc(&diff)[0])
}

/// Loewner-order check of each P⁻¹ against its bound. `bounds` holds either
/// one bound for all steps or one per step; `first_step` is the run index of
/// `p_inv[0]`, reported in `first_violation`.
pub fn check_bounds(
    kind: BoundKind,
    first_step: usize,
    p_inv: &[DMatrix<f64>],
    bounds: &[SpectralBound],
) -> BoundCheck {
    let mut out = BoundCheck {
        kind,
        steps_checked: 0,
        violations: 0,
        first_violation: None,
        worst_margin: f64::INFINITY,
    };
    for (i, x) in p_inv.iter().enumerate() {
        let b = match bounds.len() {
            0 => break,
            1 => &bounds[0],
            _ => match bounds.get(i) {
                Some(b) => b,
                None => break,
            },
        };
        let scale = linalg::max_abs(x).max(1.0);
        out.steps_checked += 1;
        for m in [side_margin(x, &b.lower, true), side_margin(x, &b.upper, false)]
            .into_iter()
            .flatten()
        {
            let rel = m / scale;
            out.worst_margin = out.worst_margin.min(rel);
            if rel < -BOUND_SLACK || rel.is_nan() {
                out.violations += 1;
                out.first_violation.get_or_insert(first_step + i);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn constant_scalar_window() {
        let phi = 1.7;
        let regs = vec![scalar(phi); 10];
        let w = window_gram(&regs, 3, 1).unwrap();
        assert!((w.f[(0, 0)] - 2.0 * phi * phi).abs() < 1e-14);
        // Definition holds with α = φ̄², β = 3φ̄².
        assert!(w.sigma[0] >= phi * phi && w.sigma[0] <= 3.0 * phi * phi);
    }

    #[test]
    fn harmonic_decay_window_vanishes() {
        let regs: Vec<_> = (0..2000).map(|k| scalar(1.0 / ((k + 1) as f64).sqrt())).collect();
        for n in [1, 5, 20] {
            for j in [0, 10, 100, 1000] {
                let w = window_gram(&regs, j, n).unwrap();
                assert!(w.sigma[0] <= (n + 1) as f64 / (j + 1) as f64 + 1e-15);
            }
        }
    }

    #[test]
    fn zero_regressors_zero_gram() {
        let regs = vec![DMatrix::zeros(1, 3); 5];
        let w = window_gram(&regs, 0, 4).unwrap();
        assert_eq!(w.f, DMatrix::zeros(3, 3));
        assert!(!pe_scan(&regs, 2, DEFAULT_PE_TOL).unwrap().is_pe);
    }

    #[test]
    fn window_out_of_range() {
        let regs = vec![scalar(1.0); 5];
        assert!(matches!(
            window_gram(&regs, 3, 2),
            Err(RlsError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            pe_scan(&regs, 5, 1e-12),
            Err(RlsError::InsufficientData { .. })
        ));
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(condition_number(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        assert!((condition_number(&dmatrix![10.0, 0.0; 0.0, 0.1]).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn prop3_floor_terms() {
        let p0 = DMatrix::identity(2, 2) * 0.5;
        let b = bound_prop3(3, 2, 1.0, 4.0, &p0).unwrap();
        match (&b.lower, &b.upper) {
            (BoundSide::Matrix(l), BoundSide::Matrix(u)) => {
                assert_eq!(l[(0, 0)], 1.5);
                assert_eq!(u[(0, 0)], 4.5);
            }
            _ => panic!("prop3 bounds are matrices"),
        }
        let b = bound_prop3(4, 2, 1.0, 4.0, &p0).unwrap();
        if let BoundSide::Matrix(u) = &b.upper {
            assert_eq!(u[(1, 1)], 8.5);
        }
        assert!(bound_prop3(2, 2, 1.0, 4.0, &p0).is_err());
    }

    #[test]
    fn prop4_lower_limit() {
        let n = 7;
        let lam = 1.0 - 1e-9;
        match bound_prop4(n, 2.0, 3.0, lam, &DMatrix::zeros(1, 1)).unwrap().lower {
            BoundSide::Scalar(c) => assert!((c - 2.0 / (n + 1) as f64).abs() < 1e-6),
            _ => panic!(),
        }
        assert!(bound_prop4(n, 2.0, 3.0, 1.0, &DMatrix::zeros(1, 1)).is_err());
        assert_eq!(
            bound_prop10(n, 2.0, 0.5).unwrap(),
            0.5f64.powi(7) * 0.5 * 2.0 / (1.0 - 0.5f64.powi(8))
        );
    }

    #[test]
    fn prop5_requires_long_window() {
        let need = prop5_min_window(0.9, 1.0, 2.0);
        assert!((need - 8.0).abs() < 1e-12);
        assert!(bound_prop5(0.9, 1.0, 2.0, 7).is_err());
        let (lo, hi) = bound_prop5(0.9, 1.0, 2.0, 8).unwrap();
        assert!((lo - 0.0).abs() < 1e-12);
        assert!(hi > 0.0);
    }

    #[test]
    fn unbounded_check_never_fails() {
        let xs = vec![dmatrix![1.0, 0.0; 0.0, 1e-20], dmatrix![1e20, 0.0; 0.0, 1.0]];
        let c = check_bounds(BoundKind::Custom, 0, &xs, &[SpectralBound::unbounded()]);
        assert_eq!(c.violations, 0);
        assert_eq!(c.steps_checked, 2);
        let tight = SpectralBound {
            lower: BoundSide::Scalar(0.0),
            upper: BoundSide::Scalar(f64::INFINITY),
        };
        assert!(check_bounds(BoundKind::Custom, 0, &xs, &[tight]).passed());
    }

    #[test]
    fn check_counts_each_violated_side() {
        let xs = vec![dmatrix![2.0], dmatrix![0.5], dmatrix![5.0]];
        let b = SpectralBound {
            lower: BoundSide::Scalar(1.0),
            upper: BoundSide::Scalar(4.0),
        };
        let c = check_bounds(BoundKind::Custom, 10, &xs, &[b]);
        assert_eq!(c.violations, 2);
        assert_eq!(c.first_violation, Some(11));
    }
}
