//! Estimator state, the two RLS update orderings, the batch oracle and the
//! diagnostics computed along a run.

use nalgebra::linalg::{Cholesky, LU};
use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Result, RlsError};
use crate::forgetting::{self, ForgettingStrategy, VdfThetaUpdate};
use crate::linalg::{self, symmetrize};

/// One measurement: `y = phi * theta` with `phi` of shape p×n.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub phi: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl DataPoint {
    pub fn new(phi: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if phi.nrows() == 0 || phi.ncols() == 0 {
            return Err(dim_mismatch(
                "DataPoint phi",
                "p >= 1, n >= 1",
                format!("{}x{}", phi.nrows(), phi.ncols()),
            ));
        }
        if y.len() != phi.nrows() {
            return Err(dim_mismatch("DataPoint y", phi.nrows(), y.len()));
        }
        if !linalg::is_finite(&phi) || y.iter().any(|v| !v.is_finite()) {
            return Err(RlsError::NonFinite("DataPoint"));
        }
        Ok(Self { phi, y })
    }

    /// Scalar measurement with a row regressor.
    pub fn row(phi: &[f64], y: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, phi.len(), phi), DVector::from_element(1, y))
    }

    /// Measurement generated exactly by `theta`.
    pub fn from_model(phi: DMatrix<f64>, theta: &DVector<f64>) -> Result<Self> {
        if phi.ncols() != theta.len() {
            return Err(dim_mismatch("DataPoint::from_model", phi.ncols(), theta.len()));
        }
        let y = &phi * theta;
        Self::new(phi, y)
    }

    pub fn p(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }
}

/// Data seen so far, all with the same (p, n).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    points: Vec<DataPoint>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<DataPoint>) -> Result<Self> {
        let mut h = Self::new();
        for d in points {
            h.push(d)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, d: DataPoint) -> Result<()> {
        if let Some(first) = self.points.first() {
            if first.p() != d.p() || first.n() != d.n() {
                return Err(dim_mismatch(
                    "History::push",
                    format!("{}x{}", first.p(), first.n()),
                    format!("{}x{}", d.p(), d.n()),
                ));
            }
        }
        self.points.push(d);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn regressors(&self) -> Vec<DMatrix<f64>> {
        self.points.iter().map(|d| d.phi.clone()).collect()
    }
}

/// Bookkeeping carried between steps by strategies that need it.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyState {
    Stateless,
    /// R_{k-1} and θ0 for the cost-consistent variable-direction update.
    CostConsistent {
        r_prev: DMatrix<f64>,
        theta0: DVector<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    k: usize,
    theta: DVector<f64>,
    p: DMatrix<f64>,
    p_inv: Option<DMatrix<f64>>,
    strategy: ForgettingStrategy,
    strategy_state: StrategyState,
}

impl EstimatorState {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p_inv_cache(&self) -> Option<&DMatrix<f64>> {
        self.p_inv.as_ref()
    }

    pub fn strategy(&self) -> &ForgettingStrategy {
        &self.strategy
    }

    pub fn strategy_state(&self) -> &StrategyState {
        &self.strategy_state
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// Builds a state mid-run, e.g. to start from a prescribed covariance.
    pub fn from_parts(k: usize, theta: DVector<f64>, p: DMatrix<f64>, strategy: ForgettingStrategy) -> Result<Self> {
        strategy.validate()?;
        if p.nrows() != theta.len() || !p.is_square() {
            return Err(dim_mismatch(
                "EstimatorState::from_parts",
                theta.len(),
                format!("{}x{}", p.nrows(), p.ncols()),
            ));
        }
        let p = symmetrize(&p);
        if !linalg::is_spd(&p) {
            return Err(RlsError::NonSpdInput("P"));
        }
        let strategy_state = match &strategy {
            ForgettingStrategy::VariableDirection {
                theta_update: VdfThetaUpdate::CostConsistent,
                ..
            } => StrategyState::CostConsistent {
                r_prev: linalg::spd_inverse(&p, "P")?,
                theta0: theta.clone(),
            },
            _ => StrategyState::Stateless,
        };
        Ok(Self {
            k,
            theta,
            p,
            p_inv: None,
            strategy,
            strategy_state,
        })
    }

    /// P⁻¹ from the cache when present, otherwise by Cholesky.
    pub fn information(&self) -> Result<DMatrix<f64>> {
        match &self.p_inv {
            Some(m) => Ok(m.clone()),
            None => linalg::spd_inverse(&self.p, "P").map_err(|_| RlsError::NumericalBreakdown("P is not invertible")),
        }
    }

    fn check_data(&self, d: &DataPoint) -> Result<()> {
        if d.n() != self.n() {
            return Err(dim_mismatch("regressor columns", self.n(), d.n()));
        }
        Ok(())
    }

    pub(crate) fn advanced(
        &self,
        theta: DVector<f64>,
        p: DMatrix<f64>,
        p_inv: Option<DMatrix<f64>>,
        strategy_state: StrategyState,
    ) -> Self {
        Self {
            k: self.k + 1,
            theta,
            p,
            p_inv,
            strategy: self.strategy.clone(),
            strategy_state,
        }
    }
}

/// Per-step diagnostics. Row `k` holds z_k (against θ_k) together with the
/// post-update θ_{k+1}, σ(P_{k+1}), κ(P_{k+1}) and V_{k+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub z: DVector<f64>,
    pub theta: DVector<f64>,
    pub theta_err_norm: Option<f64>,
    pub sigma_p: DVector<f64>,
    pub kappa_p: f64,
    pub v: Option<f64>,
    pub psi_col_norms: Option<DVector<f64>>,
}

impl TraceRecord {
    /// Spectrum of the new covariance. A non-finite covariance yields NaN
    /// entries rather than an error so callers can still log the row.
    pub fn from_state(k: usize, z: DVector<f64>, next: &EstimatorState) -> Self {
        let (sigma_p, kappa_p) = match linalg::singular_values_desc(next.p()) {
            Ok(s) => {
                let kappa = linalg::kappa_from_sorted(&s);
                (s, kappa)
            }
            Err(_) => (DVector::from_element(next.n(), f64::NAN), f64::NAN),
        };
        Self {
            k,
            z,
            theta: next.theta().clone(),
            theta_err_norm: None,
            sigma_p,
            kappa_p,
            v: None,
            psi_col_norms: None,
        }
    }

    /// Fills ‖θ̃‖ and V from the true parameter.
    pub fn attach_truth(&mut self, next: &EstimatorState, theta_true: &DVector<f64>) {
        self.theta_err_norm = Some((next.theta() - theta_true).norm());
        self.v = lyapunov_value(next, theta_true).ok();
    }

    pub fn is_finite(&self) -> bool {
        self.z
            .iter()
            .chain(self.theta.iter())
            .chain(self.sigma_p.iter())
            .all(|x| x.is_finite())
            && self.kappa_p.is_finite()
    }
}

pub fn init(theta0: DVector<f64>, r: &DMatrix<f64>, strategy: ForgettingStrategy) -> Result<EstimatorState> {
    strategy.validate()?;
    if !r.is_square() || r.nrows() != theta0.len() {
        return Err(dim_mismatch(
            "init",
            format!("{0}x{0}", theta0.len()),
            format!("{}x{}", r.nrows(), r.ncols()),
        ));
    }
    let r = symmetrize(r);
    let p = linalg::spd_inverse(&r, "R")?;
    let strategy_state = match &strategy {
        ForgettingStrategy::VariableDirection {
            theta_update: VdfThetaUpdate::CostConsistent,
            ..
        } => StrategyState::CostConsistent {
            r_prev: r.clone(),
            theta0: theta0.clone(),
        },
        _ => StrategyState::Stateless,
    };
    Ok(EstimatorState {
        k: 0,
        theta: theta0,
        p,
        p_inv: Some(r),
        strategy,
        strategy_state,
    })
}

pub fn predicted_error(state: &EstimatorState, d: &DataPoint) -> Result<DVector<f64>> {
    state.check_data(d)?;
    Ok(&d.phi * state.theta() - &d.y)
}

/// (P − Pφᵀ(λI + φPφᵀ)⁻¹φP)/λ together with the gain Pφᵀ(λI + φPφᵀ)⁻¹.
pub(crate) fn downdate(p: &DMatrix<f64>, phi: &DMatrix<f64>, lambda: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let rows = phi.nrows();
    let phi_p = phi * p;
    let s = symmetrize(&(DMatrix::identity(rows, rows) * lambda + &phi_p * phi.transpose()));
    let chol = Cholesky::new(s).ok_or(RlsError::NumericalBreakdown("λI + φPφᵀ is not positive definite"))?;
    let gain = chol.solve(&phi_p).transpose();
    let p_next = symmetrize(&((p - &gain * &phi_p) / lambda));
    Ok((p_next, gain))
}

fn uniform_lambda(state: &EstimatorState, operation: &'static str) -> Result<f64> {
    state.strategy().uniform_lambda().ok_or(RlsError::StrategyMismatch {
        strategy: state.strategy().tag(),
        operation,
    })
}

/// θ first through the p×p innovation solve, then P.
pub fn step_covariance(state: &EstimatorState, d: &DataPoint) -> Result<(EstimatorState, TraceRecord)> {
    let lambda = uniform_lambda(state, "step_covariance")?;
    let z = predicted_error(state, d)?;
    let (p_next, gain) = downdate(state.p(), &d.phi, lambda)?;
    let theta = state.theta() - &gain * &z;
    let next = state.advanced(theta, p_next, None, StrategyState::Stateless);
    let rec = TraceRecord::from_state(state.k(), z, &next);
    Ok((next, rec))
}

/// P⁻¹ ← λP⁻¹ + φᵀφ, P by an n×n solve, then θ with the new P.
pub fn step_information(state: &EstimatorState, d: &DataPoint) -> Result<(EstimatorState, TraceRecord)> {
    let lambda = uniform_lambda(state, "step_information")?;
    let z = predicted_error(state, d)?;
    let info = symmetrize(&(state.information()? * lambda + d.phi.transpose() * &d.phi));
    let p_next = linalg::spd_inverse(&info, "information matrix")
        .map_err(|_| RlsError::NumericalBreakdown("information matrix solve failed"))?;
    let theta = state.theta() - &p_next * d.phi.transpose() * &z;
    let next = state.advanced(theta, p_next, Some(info), StrategyState::Stateless);
    let rec = TraceRecord::from_state(state.k(), z, &next);
    Ok((next, rec))
}

/// Advances with whatever update the state's strategy calls for.
pub fn step(state: &EstimatorState, d: &DataPoint) -> Result<(EstimatorState, TraceRecord)> {
    match state.strategy().clone() {
        ForgettingStrategy::None | ForgettingStrategy::Uniform { .. } => step_covariance(state, d),
        ForgettingStrategy::VariableDirection {
            lambda,
            epsilon,
            theta_update,
        } => match theta_update {
            VdfThetaUpdate::Plain => forgetting::vdf_update(state, d, lambda, epsilon),
            VdfThetaUpdate::CostConsistent => {
                let theta0 = match state.strategy_state() {
                    StrategyState::CostConsistent { theta0, .. } => theta0.clone(),
                    StrategyState::Stateless => {
                        return Err(RlsError::StrategyMismatch {
                            strategy: "variable-direction",
                            operation: "cost-consistent update without R_k bookkeeping",
                        })
                    }
                };
                forgetting::vdf_update_cost_consistent(state, d, lambda, epsilon, &theta0)
            }
        },
        ForgettingStrategy::Kreisselmeier {
            lambda,
            alpha,
            beta,
            order,
            variant,
        } => {
            let z = predicted_error(state, d)?;
            let next = forgetting::kreisselmeier_update(state, d, lambda, alpha, beta, order, variant)?;
            let rec = TraceRecord::from_state(state.k(), z, &next);
            Ok((next, rec))
        }
        ForgettingStrategy::Cao { lambda } => {
            let z = predicted_error(state, d)?;
            let next = forgetting::cao_update(state, d, lambda)?;
            let rec = TraceRecord::from_state(state.k(), z, &next);
            Ok((next, rec))
        }
    }
}

/// Direct solve of the weighted normal equations
/// (Σ λ^{k−i} φᵢᵀφᵢ + λ^{k+1} R) θ = Σ λ^{k−i} φᵢᵀyᵢ + λ^{k+1} R θ0.
pub fn batch_solve(history: &History, lambda: f64, r: &DMatrix<f64>, theta0: &DVector<f64>) -> Result<DVector<f64>> {
    if history.is_empty() {
        return Err(RlsError::InsufficientData { needed: 1, got: 0 });
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(RlsError::ParameterOutOfRange(format!(
            "lambda = {lambda} not in (0, 1]"
        )));
    }
    let n = theta0.len();
    if r.nrows() != n || r.ncols() != n || history.points()[0].n() != n {
        return Err(dim_mismatch("batch_solve", n, history.points()[0].n()));
    }
    let k = history.len() - 1;
    let tail = lambda.powi((k + 1) as i32);
    let mut a = r * tail;
    let mut b = r * theta0 * tail;
    for (i, d) in history.points().iter().enumerate() {
        let w = lambda.powi((k - i) as i32);
        a += d.phi.transpose() * &d.phi * w;
        b += d.phi.transpose() * &d.y * w;
    }
    let chol = Cholesky::new(symmetrize(&a)).ok_or(RlsError::NumericalBreakdown("normal equations are not SPD"))?;
    Ok(chol.solve(&b))
}

/// θ̃ᵀP⁻¹θ̃ with θ̃ = θ − θ_true.
pub fn lyapunov_value(state: &EstimatorState, theta_true: &DVector<f64>) -> Result<f64> {
    if theta_true.len() != state.n() {
        return Err(dim_mismatch("lyapunov_value", state.n(), theta_true.len()));
    }
    let err = state.theta() - theta_true;
    if let Some(info) = state.p_inv_cache() {
        return Ok(err.dot(&(info * &err)).max(0.0));
    }
    let chol = linalg::cholesky(state.p(), "P")?;
    let w = chol
        .l()
        .solve_lower_triangular(&err)
        .ok_or(RlsError::NumericalBreakdown("triangular solve in lyapunov_value"))?;
    Ok(w.norm_squared())
}

/// 𝒜_k = ∏ (I − P_{i+1}φᵢᵀφᵢ) together with the range of the factor gains.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionProduct {
    pub matrix: DMatrix<f64>,
    /// Smallest and largest eigenvalue of P_{i+1}φᵢᵀφᵢ over all factors.
    pub gain_eig_min: f64,
    pub gain_eig_max: f64,
}

pub fn error_transition_product(history: &History, lambda: f64, r: &DMatrix<f64>) -> Result<TransitionProduct> {
    if history.is_empty() {
        return Err(RlsError::InsufficientData { needed: 1, got: 0 });
    }
    let n = r.nrows();
    let strategy = if lambda == 1.0 {
        ForgettingStrategy::None
    } else {
        ForgettingStrategy::Uniform { lambda }
    };
    let mut state = init(DVector::zeros(n), r, strategy)?;
    let mut product = DMatrix::identity(n, n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in history.points() {
        let (next, _) = step_information(&state, d)?;
        let gain = next.p() * d.phi.transpose() * &d.phi;
        product = (DMatrix::identity(n, n) - &gain) * product;
        // Nonzero eigenvalues of Pφᵀφ are those of φPφᵀ; the rest are zero.
        let eig = linalg::sym_eigenvalues_asc(&(&d.phi * next.p() * d.phi.transpose()));
        lo = lo.min(eig[0]);
        hi = hi.max(eig[eig.len() - 1]);
        if d.p() < n {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        state = next;
    }
    Ok(TransitionProduct {
        matrix: product,
        gain_eig_min: lo,
        gain_eig_max: hi,
    })
}

/// Linear-Gaussian model for the one-step predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub rn: DMatrix<f64>,
}

/// Optimal one-step predictor:
/// K = APCᵀ(Rn + CPCᵀ)⁻¹, x' = Ax + Bu + K(y − Cx),
/// P' = APAᵀ + Q − APCᵀ(Rn + CPCᵀ)⁻¹CPAᵀ.
pub fn kalman_predictor_step(
    xhat: &DVector<f64>,
    p: &DMatrix<f64>,
    sys: &StateSpace,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = xhat.len();
    if sys.a.shape() != (n, n) || p.shape() != (n, n) || sys.c.ncols() != n || sys.q.shape() != (n, n) {
        return Err(dim_mismatch(
            "kalman_predictor_step",
            n,
            format!("A {:?}, C {:?}", sys.a.shape(), sys.c.shape()),
        ));
    }
    let m = sys.c.nrows();
    if y.len() != m || sys.rn.shape() != (m, m) || sys.b.nrows() != n || sys.b.ncols() != u.len() {
        return Err(dim_mismatch("kalman_predictor_step", m, y.len()));
    }
    let apct = &sys.a * p * sys.c.transpose();
    let s = &sys.rn + &sys.c * p * sys.c.transpose();
    let lu = LU::new(s);
    // Kᵀ = S⁻ᵀ (APCᵀ)ᵀ; S is symmetric for symmetric Rn and P.
    let kt = lu
        .solve(&apct.transpose())
        .ok_or(RlsError::NumericalBreakdown("Rn + CPCᵀ is singular"))?;
    let k = kt.transpose();
    let x_next = &sys.a * xhat + &sys.b * u + &k * (y - &sys.c * xhat);
    let p_next = symmetrize(&(&sys.a * p * sys.a.transpose() + &sys.q - &k * apct.transpose()));
    Ok((x_next, p_next))
}
