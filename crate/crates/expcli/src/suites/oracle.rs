//! Recursions against closed-form or independently computed answers.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rls_core::linalg::symmetrize;
use rls_core::{
    batch_solve, init, kalman_predictor_step, step, step_covariance, step_information, DataPoint, ForgettingStrategy,
    History, StateSpace, VdfThetaUpdate,
};

use super::{
    frob_rel, randn, randn_vec, random_configs, rng, uniform_or_none, vec_rel, CheckResult, Entry, Suite, VerifyOptions,
};
use crate::error::Result;

pub(crate) fn entries() -> Vec<Entry> {
    vec![
        Entry {
            id: "C01",
            title: "recursive theta matches the batch minimizer",
            suite: Suite::Oracle,
            check: c01,
        },
        Entry {
            id: "C02",
            title: "covariance and information forms agree",
            suite: Suite::Oracle,
            check: c02,
        },
        Entry {
            id: "C10",
            title: "lambda = 1 RLS equals the one-step Kalman predictor",
            suite: Suite::Oracle,
            check: c10,
        },
        Entry {
            id: "C12",
            title: "cost-consistent VDF theta minimizes its quadratic",
            suite: Suite::Oracle,
            check: c12,
        },
    ]
}

const CONFIGS: usize = 20;
const CONFIG_SEED: u64 = 20_240_601;

fn c01(_: &VerifyOptions) -> Result<CheckResult> {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut total = 0;
    for cfg in random_configs(CONFIGS, CONFIG_SEED) {
        let mut state = init(cfg.theta0.clone(), &cfg.r, uniform_or_none(cfg.lambda))?;
        let mut history = History::new();
        for d in &cfg.points {
            history.push(d.clone())?;
            let (next, _) = step_covariance(&state, d)?;
            let batch = batch_solve(&history, cfg.lambda, &cfg.r, &cfg.theta0)?;
            worst = worst.max(vec_rel(next.theta(), &batch));
            total += 1;
            state = next;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let passed = worst <= 1e-8 && secs < 10.0;
    Ok(CheckResult::new(
        "C01",
        "recursive theta matches the batch minimizer",
        passed,
        format!(
            "max rel err {worst:.3e} (limit 1e-8) over {total} steps in {CONFIGS} configs; {secs:.2} s (limit 10 s)"
        ),
    ))
}

fn c02(_: &VerifyOptions) -> Result<CheckResult> {
    let mut worst_theta = 0.0f64;
    let mut worst_p = 0.0f64;
    for cfg in random_configs(CONFIGS, CONFIG_SEED) {
        let mut cov = init(cfg.theta0.clone(), &cfg.r, uniform_or_none(cfg.lambda))?;
        let mut inf = cov.clone();
        for d in &cfg.points {
            cov = step_covariance(&cov, d)?.0;
            inf = step_information(&inf, d)?.0;
            worst_theta = worst_theta.max(vec_rel(inf.theta(), cov.theta()));
            worst_p = worst_p.max(frob_rel(inf.p(), cov.p()));
        }
    }
    let worst = worst_theta.max(worst_p);
    Ok(CheckResult::new(
        "C02",
        "covariance and information forms agree",
        worst <= 1e-9,
        format!("max rel diff theta {worst_theta:.3e}, P {worst_p:.3e} (limit 1e-9)"),
    ))
}

fn c10(_: &VerifyOptions) -> Result<CheckResult> {
    let (n, p, steps) = (4, 2, 100);
    let mut g = rng(7);
    let theta0 = randn_vec(&mut g, n);
    let r = super::random_spd(&mut g, n);
    let mut rls = init(theta0.clone(), &r, ForgettingStrategy::None)?;
    let mut xhat = theta0;
    let mut pk = rls.p().clone();
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let phi = randn(&mut g, p, n);
        let y = randn_vec(&mut g, p);
        let sys = StateSpace {
            a: DMatrix::identity(n, n),
            b: DMatrix::zeros(n, 1),
            c: phi.clone(),
            q: DMatrix::zeros(n, n),
            rn: DMatrix::identity(p, p),
        };
        let (x_next, p_next) = kalman_predictor_step(&xhat, &pk, &sys, &DVector::zeros(1), &y)?;
        rls = step(&rls, &DataPoint::new(phi, y)?)?.0;
        worst = worst.max(vec_rel(&x_next, rls.theta())).max(frob_rel(&p_next, rls.p()));
        xhat = x_next;
        pk = p_next;
    }
    Ok(CheckResult::new(
        "C10",
        "lambda = 1 RLS equals the one-step Kalman predictor",
        worst <= 1e-12,
        format!("max rel diff {worst:.3e} over {steps} steps (limit 1e-12)"),
    ))
}

/// Cost-consistent VDF computed the slow way: own eigen-decomposition of P⁻¹,
/// own R_k, and a direct solve of (Σφᵀφ + R_k)θ = Σφᵀy + R_kθ0.
struct QuadraticOracle {
    lambda: f64,
    epsilon: f64,
    theta0: DVector<f64>,
    p_inv: DMatrix<f64>,
    r_k: DMatrix<f64>,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
}

impl QuadraticOracle {
    fn new(lambda: f64, epsilon: f64, r: &DMatrix<f64>, theta0: DVector<f64>) -> Self {
        let n = r.nrows();
        Self {
            lambda,
            epsilon,
            theta0,
            p_inv: r.clone(),
            r_k: r.clone(),
            gram: DMatrix::zeros(n, n),
            moment: DVector::zeros(n),
        }
    }

    fn push(&mut self, d: &DataPoint) -> Option<DVector<f64>> {
        let eig = self.p_inv.clone().symmetric_eigen();
        let psi = &d.phi * &eig.eigenvectors;
        let bar = DVector::from_iterator(
            psi.ncols(),
            psi.column_iter().map(|c| {
                if c.norm() > self.epsilon {
                    self.lambda.sqrt()
                } else {
                    1.0
                }
            }),
        );
        let big_lambda = &eig.eigenvectors * DMatrix::from_diagonal(&bar) * eig.eigenvectors.transpose();
        let forgotten = symmetrize(&(&big_lambda * &self.p_inv * &big_lambda));
        self.r_k = symmetrize(&(&self.r_k + &forgotten - &self.p_inv));
        self.p_inv = symmetrize(&(forgotten + d.phi.transpose() * &d.phi));
        self.gram += d.phi.transpose() * &d.phi;
        self.moment += d.phi.transpose() * &d.y;
        let lhs = &self.gram + &self.r_k;
        let rhs = &self.moment + &self.r_k * &self.theta0;
        lhs.lu().solve(&rhs)
    }
}

fn cost_consistent_case(r: &DMatrix<f64>, theta0: &DVector<f64>, points: &[DataPoint]) -> Result<(f64, usize)> {
    let (lambda, epsilon) = (0.95, 1e-8);
    let strategy = ForgettingStrategy::VariableDirection {
        lambda,
        epsilon,
        theta_update: VdfThetaUpdate::CostConsistent,
    };
    let mut state = init(theta0.clone(), r, strategy)?;
    let mut oracle = QuadraticOracle::new(lambda, epsilon, r, theta0.clone());
    let mut worst = 0.0f64;
    let mut min_rich = usize::MAX;
    for d in points {
        let (next, rec) = step(&state, d)?;
        let direct = oracle
            .push(d)
            .ok_or(rls_core::RlsError::NumericalBreakdown("oracle normal equations"))?;
        worst = worst.max(vec_rel(next.theta(), &direct));
        if let Some(c) = &rec.psi_col_norms {
            min_rich = min_rich.min(c.iter().filter(|&&x| x > epsilon).count());
        }
        state = next;
    }
    Ok((worst, min_rich))
}

fn c12(_: &VerifyOptions) -> Result<CheckResult> {
    let steps = 50;
    let mut g = rng(12);

    // All directions rich: full-rank random data, p = n.
    let n = 3;
    let theta = randn_vec(&mut g, n);
    let theta0 = randn_vec(&mut g, n);
    let points: Vec<DataPoint> = (0..steps)
        .map(|_| {
            let phi = randn(&mut g, n, n);
            let y = &phi * &theta + randn_vec(&mut g, n) * 0.05;
            DataPoint::new(phi, y)
        })
        .collect::<rls_core::Result<_>>()?;
    let (rich, rich_dirs) = cost_consistent_case(&DMatrix::identity(n, n), &theta0, &points)?;

    // Data confined to span(e1, e2): e3 is never rich.
    let r = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 1.5]);
    let points: Vec<DataPoint> = (0..steps)
        .map(|_| {
            let mut phi = randn(&mut g, 1, 3);
            phi[(0, 2)] = 0.0;
            let y = &phi * &theta + randn_vec(&mut g, 1) * 0.05;
            DataPoint::new(phi, y)
        })
        .collect::<rls_core::Result<_>>()?;
    let (partial, _) = cost_consistent_case(&r, &theta0, &points)?;

    let worst = rich.max(partial);
    Ok(CheckResult::new(
        "C12",
        "cost-consistent VDF theta minimizes its quadratic",
        worst <= 1e-8 && rich_dirs == n,
        format!(
            "max rel err {rich:.3e} all-rich ({rich_dirs} of {n} rich at every step), {partial:.3e} rank-deficient; \
             limit 1e-8 over {steps} steps"
        ),
    ))
}
