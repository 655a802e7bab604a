//! Spectral bounds on P_k⁻¹ replayed on the excitation scenarios.

use nalgebra::DMatrix;
use rls_core::excitation::DEFAULT_PE_TOL;
use rls_core::linalg::sym_eigenvalues_asc;
use rls_core::{
    bound_prop10, bound_prop3, bound_prop4, bound_prop5, check_bounds, pe_scan, BoundCheck, BoundKind, BoundSide,
    ForgettingStrategy, SpectralBound,
};

use super::{builtin, replay, with_strategy, CheckResult, Entry, Suite, VerifyOptions};
use crate::error::Result;
use crate::scenario::Scenario;

pub(crate) fn entries() -> Vec<Entry> {
    vec![
        Entry {
            id: "C05",
            title: "Prop-4 bounds hold on the three-sine regressor",
            suite: Suite::Bounds,
            check: c05,
        },
        Entry {
            id: "C11",
            title: "Kreisselmeier information floor",
            suite: Suite::Bounds,
            check: c11,
        },
        Entry {
            id: "B01",
            title: "Prop-3 bounds without forgetting",
            suite: Suite::Bounds,
            check: b01,
        },
        Entry {
            id: "B02",
            title: "Prop-10 lower bound under VDF",
            suite: Suite::Bounds,
            check: b02,
        },
        Entry {
            id: "B03",
            title: "Prop-5 window bounds from replayed P_k^-1",
            suite: Suite::Bounds,
            check: b03,
        },
    ]
}

fn describe(c: &BoundCheck) -> String {
    let first = c
        .first_violation
        .map_or_else(String::new, |k| format!(", first at k = {k}"));
    format!(
        "{} violations in {} steps{first}, worst margin {:.3e}",
        c.violations, c.steps_checked, c.worst_margin
    )
}

struct Replayed {
    p_inv: Vec<DMatrix<f64>>,
    regressors: Vec<DMatrix<f64>>,
}

fn replay_information(sc: &Scenario) -> Result<Replayed> {
    let rep = replay(sc)?;
    Ok(Replayed {
        p_inv: rep.information()?,
        regressors: rep.points.iter().map(|d| d.phi.clone()).collect(),
    })
}

fn c05(opts: &VerifyOptions) -> Result<CheckResult> {
    let sc = builtin("pe-bounds")?;
    let lambda = sc.estimator.strategy.lambda();
    let bound_lambda = opts.corrupt_lambda.unwrap_or(lambda);
    let rep = replay_information(&sc)?;
    let mut passed = true;
    let mut parts = Vec::new();
    if bound_lambda != lambda {
        parts.push(format!(
            "bound evaluated with corrupted lambda {bound_lambda} (data lambda {lambda})"
        ));
    }
    for n_window in [2usize, 10] {
        let pe = pe_scan(&rep.regressors, n_window, DEFAULT_PE_TOL)?;
        let bound = bound_prop4(n_window, pe.alpha_hat, pe.beta_hat, bound_lambda, &rep.p_inv[n_window])?;
        let check = check_bounds(BoundKind::Prop4, n_window + 1, &rep.p_inv[n_window + 1..], &[bound]);
        passed &= check.passed() && pe.is_pe;
        let verdict = if check.passed() {
            String::new()
        } else {
            " Prop-4 violation".into()
        };
        parts.push(format!(
            "N={n_window}: alpha={:.4e} beta={:.4e} ({}), {}{verdict}",
            pe.alpha_hat,
            pe.beta_hat,
            pe.verdict_label(),
            describe(&check)
        ));
    }
    Ok(CheckResult::new(
        "C05",
        "Prop-4 bounds hold on the three-sine regressor",
        passed,
        parts.join("; "),
    ))
}

fn kreisselmeier_floor(sc: &Scenario) -> Result<(f64, f64, usize)> {
    let alpha = match sc.estimator.strategy {
        ForgettingStrategy::Kreisselmeier { alpha, .. } => alpha,
        _ => unreachable!("caller passes a Kreisselmeier scenario"),
    };
    let rep = replay_information(sc)?;
    let min = rep
        .p_inv
        .iter()
        .map(|m| sym_eigenvalues_asc(m)[0])
        .fold(f64::INFINITY, f64::min);
    Ok((alpha, min, rep.p_inv.len()))
}

fn c11(_: &VerifyOptions) -> Result<CheckResult> {
    let sub = builtin("kreisselmeier-subspace")?;
    let sine = with_strategy(
        builtin("pe-bounds")?.with_overrides(Some(sub.steps), None)?,
        sub.estimator.strategy.clone(),
    );
    let mut passed = true;
    let mut parts = Vec::new();
    for (label, sc) in [("subspace-sine", &sub), ("three-sine", &sine)] {
        let p0_floor = sym_eigenvalues_asc(&sc.r_matrix()?)[0];
        let (alpha, min, count) = kreisselmeier_floor(sc)?;
        passed &= p0_floor >= alpha && min >= alpha - 1e-9;
        parts.push(format!(
            "{label}: min eig P_k^-1 {min:.12} over {count} states vs alpha {alpha}"
        ));
    }
    Ok(CheckResult::new(
        "C11",
        "Kreisselmeier information floor",
        passed,
        parts.join("; "),
    ))
}

fn b01(_: &VerifyOptions) -> Result<CheckResult> {
    let sc = with_strategy(
        builtin("pe-bounds")?.with_overrides(Some(2000), None)?,
        ForgettingStrategy::None,
    );
    let rep = replay_information(&sc)?;
    let n_window = 2;
    let pe = pe_scan(&rep.regressors, n_window, DEFAULT_PE_TOL)?;
    let bounds = (n_window + 1..rep.p_inv.len())
        .map(|k| bound_prop3(k, n_window, pe.alpha_hat, pe.beta_hat, &rep.p_inv[0]))
        .collect::<rls_core::Result<Vec<_>>>()?;
    let check = check_bounds(BoundKind::Prop3, n_window + 1, &rep.p_inv[n_window + 1..], &bounds);
    Ok(CheckResult::new(
        "B01",
        "Prop-3 bounds without forgetting",
        check.passed(),
        describe(&check),
    ))
}

fn b02(_: &VerifyOptions) -> Result<CheckResult> {
    let lambda = 0.99;
    let sc = with_strategy(
        builtin("pe-bounds")?.with_overrides(Some(2000), None)?,
        ForgettingStrategy::vdf(lambda, 1e-8),
    );
    let rep = replay_information(&sc)?;
    let n_window = 2;
    let pe = pe_scan(&rep.regressors, n_window, DEFAULT_PE_TOL)?;
    let lower = bound_prop10(n_window, pe.alpha_hat, lambda)?;
    let bound = SpectralBound {
        lower: BoundSide::Scalar(lower),
        upper: BoundSide::None,
    };
    let check = check_bounds(BoundKind::Prop10, n_window + 1, &rep.p_inv[n_window + 1..], &[bound]);
    Ok(CheckResult::new(
        "B02",
        "Prop-10 lower bound under VDF",
        check.passed(),
        format!("lower bound {lower:.4e}; {}", describe(&check)),
    ))
}

fn b03(_: &VerifyOptions) -> Result<CheckResult> {
    let sc = builtin("scalar-constant")?.with_overrides(Some(2000), None)?;
    let lambda = sc.estimator.strategy.lambda();
    let rep = replay_information(&sc)?;
    let eigs: Vec<f64> = rep
        .p_inv
        .iter()
        .flat_map(|m| sym_eigenvalues_asc(m).iter().copied().collect::<Vec<_>>())
        .collect();
    let alpha_bar = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let beta_bar = eigs.iter().copied().fold(0.0, f64::max);
    let need = rls_core::excitation::prop5_min_window(lambda, alpha_bar, beta_bar);
    let n_window = need.ceil().max(0.0) as usize;
    let (lo, hi) = bound_prop5(lambda, alpha_bar, beta_bar, n_window)?;
    let pe = pe_scan(&rep.regressors, n_window, DEFAULT_PE_TOL)?;
    let scale = pe.beta_hat.max(1.0);
    let passed = pe.alpha_hat >= lo - 1e-9 * scale && pe.beta_hat <= hi + 1e-9 * scale;
    Ok(CheckResult::new(
        "B03",
        "Prop-5 window bounds from replayed P_k^-1",
        passed,
        format!(
            "alpha_bar {alpha_bar:.4}, beta_bar {beta_bar:.4}, N = {n_window}; windows span [{:.4e}, {:.4e}] within \
             [{lo:.4e}, {hi:.4e}]",
            pe.alpha_hat, pe.beta_hat
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_lambda_is_caught() {
        let r = c05(&VerifyOptions {
            corrupt_lambda: Some(0.9),
        })
        .unwrap();
        assert!(!r.passed, "{}", r.details);
        assert!(r.details.contains("Prop-4 violation"));
    }
}
