//! Drives an estimator through a scenario's data stream.

use nalgebra::DVector;
use rls_core::forgetting::{decompose_information, DEFAULT_EPSILON};
use rls_core::{init, step, step_information, DataPoint, EstimatorState, RlsError, TraceRecord};

use crate::error::Result;
use crate::scenario::{Scenario, UpdateForm};

/// Runs stop once κ(P_k) exceeds this.
pub const KAPPA_GUARD: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The guard tripped on row `k`, which is the last row recorded.
    Diverged {
        k: usize,
        reason: String,
    },
}

impl RunStatus {
    pub fn diverged(&self) -> bool {
        matches!(self, Self::Diverged { .. })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub theta_true: Option<DVector<f64>>,
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub p: usize,
    pub n: usize,
    pub lyapunov: bool,
    pub psi: bool,
}

pub fn run(sc: &Scenario) -> Result<RunOutput> {
    run_with(sc, |_, _, _, _| {})
}

fn is_numerical(e: &RlsError) -> bool {
    matches!(
        e,
        RlsError::NumericalBreakdown(_) | RlsError::NonFinite(_) | RlsError::SvdFailure | RlsError::NonSpdInput(_)
    )
}

/// Like [`run`], calling `observe(before, data, after, record)` after every step.
pub fn run_with<F>(sc: &Scenario, mut observe: F) -> Result<RunOutput>
where
    F: FnMut(&EstimatorState, &DataPoint, &EstimatorState, &TraceRecord),
{
    sc.validate()?;
    let data = sc.generate()?;
    let lyapunov = sc.wants_lyapunov(data.theta_true.is_some());
    let psi = sc.wants_psi();
    let mut state = init(sc.theta0(), &sc.r_matrix()?, sc.estimator.strategy.clone())?;
    let mut records = Vec::with_capacity(sc.steps);
    let mut status = RunStatus::Completed;

    for d in &data.points {
        let k = state.k();
        let stepped = match sc.estimator.form {
            UpdateForm::Covariance => step(&state, d),
            UpdateForm::Information => step_information(&state, d),
        };
        let (next, mut rec) = match stepped {
            Ok(v) => v,
            Err(e) if is_numerical(&e) => {
                status = RunStatus::Diverged {
                    k,
                    reason: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(truth) = &data.theta_true {
            rec.attach_truth(&next, truth);
            if !lyapunov {
                rec.v = None;
            }
        }
        if psi && rec.psi_col_norms.is_none() {
            rec.psi_col_norms = Some(match decompose_information(state.p(), &d.phi, DEFAULT_EPSILON) {
                Ok(dec) => dec.col_norms,
                Err(_) => DVector::from_element(state.n(), f64::NAN),
            });
        }
        if !psi {
            rec.psi_col_norms = None;
        }
        observe(&state, d, &next, &rec);
        let tripped = if !rec.is_finite() {
            Some("non-finite value in state".to_string())
        } else if rec.kappa_p > KAPPA_GUARD {
            Some(format!("kappa(P) = {:e} exceeds {:e}", rec.kappa_p, KAPPA_GUARD))
        } else {
            None
        };
        records.push(rec);
        if let Some(reason) = tripped {
            status = RunStatus::Diverged { k, reason };
            break;
        }
        state = next;
    }

    Ok(RunOutput {
        scenario: sc.clone(),
        theta_true: data.theta_true,
        records,
        status,
        p: sc.p(),
        n: sc.n(),
        lyapunov,
        psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn scalar_constant_reaches_steady_covariance() {
        let sc = catalog::builtin("scalar-constant").unwrap();
        let mut last_p = f64::NAN;
        let out = run_with(&sc, |_, _, after, _| last_p = after.p()[(0, 0)]).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.records.len(), 10_000);
        assert!((last_p - 0.1).abs() <= 1e-10);
    }

    #[test]
    fn subspace_sine_estimate_stays_on_the_line() {
        let sc = catalog::builtin("subspace-sine").unwrap();
        let out = run(&sc).unwrap();
        assert_eq!(out.records.len(), 1000);
        for r in &out.records {
            // Off-span component along [1, −1]/√2.
            let off = (r.theta[0] - r.theta[1]).abs() / 2f64.sqrt();
            assert!(
                off <= 1e-9 * r.theta.norm().max(1e-300) || off <= 1e-15,
                "k = {}: {off:e}",
                r.k
            );
        }
    }

    #[test]
    fn arx5_vdf_singular_values_stay_bounded() {
        // Replay value of max σ(P_k) over the whole run, against the maximum
        // over its first half: no growth once the transient has passed.
        let sc = catalog::builtin("arx5-vdf").unwrap();
        let out = run(&sc).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        let max_over = |rs: &[TraceRecord]| rs.iter().map(|r| r.sigma_p[0]).fold(0.0, f64::max);
        let half = out.records.len() / 2;
        let first = max_over(&out.records[..half]);
        let second = max_over(&out.records[half..]);
        assert!(second <= first, "σ_max grew: {second:e} > {first:e}");
        assert!(first.is_finite() && first < 1e10, "σ_max = {first:e}");
    }

    #[test]
    fn uniform_arx5_loses_conditioning() {
        let sc = catalog::builtin("arx5-kappa").unwrap();
        let out = run(&sc).unwrap();
        let kmax = out.records.iter().map(|r| r.kappa_p).fold(0.0, f64::max);
        assert!(out.status.diverged() || kmax > 1e10, "max κ = {kmax:e}");
    }
}
