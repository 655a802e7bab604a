//! Forgetting strategies: uniform, variable-direction (VDF) and the two
//! matrix-forgetting schemes of Kreisselmeier and Cao.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Result, RlsError};
use crate::estimator::{self, predicted_error, DataPoint, EstimatorState, StrategyState, TraceRecord};
use crate::linalg::{self, symmetrize};

pub const DEFAULT_EPSILON: f64 = 1e-8;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Which θ recursion accompanies the VDF covariance update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VdfThetaUpdate {
    /// θ_{k+1} = θ_k + P_{k+1}φᵀ(y − φθ_k).
    #[default]
    Plain,
    /// Adds P_{k+1}(R_k − R_{k−1})(θ0 − θ_k) so θ_{k+1} minimizes a fixed cost.
    CostConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KreisselmeierVariant {
    /// M = −(1−λ)(I − αP)^N P⁻¹
    I,
    /// M = −(1−λ)(P⁻¹ − αI)^N (P⁻¹ + βI)^{−N} P⁻¹
    II,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForgettingStrategy {
    None,
    Uniform {
        lambda: f64,
    },
    VariableDirection {
        lambda: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        theta_update: VdfThetaUpdate,
    },
    Kreisselmeier {
        lambda: f64,
        alpha: f64,
        #[serde(default)]
        beta: f64,
        order: u32,
        variant: KreisselmeierVariant,
    },
    Cao {
        lambda: f64,
    },
}

impl ForgettingStrategy {
    pub fn vdf(lambda: f64, epsilon: f64) -> Self {
        Self::VariableDirection {
            lambda,
            epsilon,
            theta_update: VdfThetaUpdate::Plain,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Uniform { .. } => "uniform",
            Self::VariableDirection { .. } => "variable-direction",
            Self::Kreisselmeier {
                variant: KreisselmeierVariant::I,
                ..
            } => "kreisselmeier-i",
            Self::Kreisselmeier {
                variant: KreisselmeierVariant::II,
                ..
            } => "kreisselmeier-ii",
            Self::Cao { .. } => "cao",
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Self::None => 1.0,
            Self::Uniform { lambda }
            | Self::VariableDirection { lambda, .. }
            | Self::Kreisselmeier { lambda, .. }
            | Self::Cao { lambda } => lambda,
        }
    }

    /// λ for strategies handled by the plain RLS recursions.
    pub fn uniform_lambda(&self) -> Option<f64> {
        match *self {
            Self::None => Some(1.0),
            Self::Uniform { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(RlsError::ParameterOutOfRange(format!(
                "lambda = {lambda} not in (0, 1]"
            )));
        }
        match *self {
            Self::VariableDirection { epsilon, .. } if !(epsilon > 0.0 && epsilon.is_finite()) => Err(
                RlsError::ParameterOutOfRange(format!("epsilon = {epsilon} must be positive")),
            ),
            Self::Kreisselmeier { alpha, beta, order, .. } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    Err(RlsError::ParameterOutOfRange(format!(
                        "alpha = {alpha} must be positive"
                    )))
                } else if !(beta >= 0.0 && beta.is_finite()) {
                    Err(RlsError::ParameterOutOfRange(format!(
                        "beta = {beta} must be nonnegative"
                    )))
                } else if order % 2 == 0 {
                    Err(RlsError::ParameterOutOfRange(format!(
                        "order N = {order} must be odd and positive"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// SVD of P read as the spectral picture of P⁻¹, plus how much of the
/// current regressor lands on each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationDecomposition {
    /// Columns ordered by descending singular value of P⁻¹.
    pub u: DMatrix<f64>,
    pub sigma_inv: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub col_norms: DVector<f64>,
    pub rich_mask: Vec<bool>,
}

impl InformationDecomposition {
    pub fn rich_count(&self) -> usize {
        self.rich_mask.iter().filter(|&&r| r).count()
    }

    /// U diag(σ⁻¹) Uᵀ, i.e. P⁻¹ rebuilt without a solve.
    pub fn information(&self) -> DMatrix<f64> {
        symmetrize(&(&self.u * DMatrix::from_diagonal(&self.sigma_inv) * self.u.transpose()))
    }
}

pub fn decompose_information(p: &DMatrix<f64>, phi: &DMatrix<f64>, epsilon: f64) -> Result<InformationDecomposition> {
    if !p.is_square() || phi.ncols() != p.nrows() {
        return Err(dim_mismatch("decompose_information", p.nrows(), phi.ncols()));
    }
    let (u_desc, s_desc) = linalg::svd_sorted(p)?;
    let n = s_desc.len();
    if s_desc[n - 1] <= 0.0 {
        return Err(RlsError::NonSpdInput("P is singular"));
    }
    // Smallest σ(P) is largest σ(P⁻¹).
    let mut u = DMatrix::zeros(n, n);
    let mut sigma_inv = DVector::zeros(n);
    for i in 0..n {
        u.set_column(i, &u_desc.column(n - 1 - i));
        sigma_inv[i] = 1.0 / s_desc[n - 1 - i];
    }
    let psi = phi * &u;
    let col_norms = DVector::from_iterator(n, psi.column_iter().map(|c| c.norm()));
    let rich_mask = col_norms.iter().map(|&c| c > epsilon).collect();
    Ok(InformationDecomposition {
        u,
        sigma_inv,
        psi,
        col_norms,
        rich_mask,
    })
}

/// Λ = U diag(λ̄) Uᵀ with λ̄ᵢ = √λ on rich directions and 1 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingMatrix {
    pub lambda_bar_diag: DVector<f64>,
    pub lambda: DMatrix<f64>,
    pub lambda_inv: DMatrix<f64>,
}

impl ForgettingMatrix {
    /// ΛP⁻¹Λ + φᵀφ.
    pub fn apply_information(&self, p_inv: &DMatrix<f64>, phi: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.lambda * p_inv * &self.lambda + phi.transpose() * phi))
    }

    /// Λ⁻¹PΛ⁻¹.
    pub fn inflate_covariance(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.lambda_inv * p * &self.lambda_inv))
    }
}

pub fn build_forgetting_matrix(decomp: &InformationDecomposition, lambda: f64) -> ForgettingMatrix {
    let root = lambda.sqrt();
    let lambda_bar_diag = DVector::from_iterator(
        decomp.rich_mask.len(),
        decomp.rich_mask.iter().map(|&r| if r { root } else { 1.0 }),
    );
    let inv_diag = lambda_bar_diag.map(|x| 1.0 / x);
    let u = &decomp.u;
    ForgettingMatrix {
        lambda: symmetrize(&(u * DMatrix::from_diagonal(&lambda_bar_diag) * u.transpose())),
        lambda_inv: symmetrize(&(u * DMatrix::from_diagonal(&inv_diag) * u.transpose())),
        lambda_bar_diag,
    }
}

struct VdfCovarianceStep {
    decomp: InformationDecomposition,
    forgetting: ForgettingMatrix,
    p_next: DMatrix<f64>,
    z: DVector<f64>,
}

fn vdf_covariance(state: &EstimatorState, d: &DataPoint, lambda: f64, epsilon: f64) -> Result<VdfCovarianceStep> {
    ForgettingStrategy::vdf(lambda, epsilon).validate()?;
    let z = predicted_error(state, d)?;
    let decomp = decompose_information(state.p(), &d.phi, epsilon)?;
    let forgetting = build_forgetting_matrix(&decomp, lambda);
    let p_bar = forgetting.inflate_covariance(state.p());
    let (p_next, _) = estimator::downdate(&p_bar, &d.phi, 1.0)?;
    Ok(VdfCovarianceStep {
        decomp,
        forgetting,
        p_next,
        z,
    })
}

fn vdf_record(state: &EstimatorState, step: VdfCovarianceStep, next: &EstimatorState) -> TraceRecord {
    let mut rec = TraceRecord::from_state(state.k(), step.z, next);
    rec.psi_col_norms = Some(step.decomp.col_norms);
    rec
}

/// Forgetting only along information-rich directions, covariance form:
/// P̄ = Λ⁻¹PΛ⁻¹, P' = P̄ − P̄φᵀ(I + φP̄φᵀ)⁻¹φP̄, then θ with P'.
pub fn vdf_update(
    state: &EstimatorState,
    d: &DataPoint,
    lambda: f64,
    epsilon: f64,
) -> Result<(EstimatorState, TraceRecord)> {
    let step = vdf_covariance(state, d, lambda, epsilon)?;
    let theta = state.theta() - &step.p_next * d.phi.transpose() * &step.z;
    let next = state.advanced(theta, step.p_next.clone(), None, state.strategy_state().clone());
    let rec = vdf_record(state, step, &next);
    Ok((next, rec))
}

/// VDF covariance update with the θ recursion that keeps θ_{k+1} the
/// minimizer of Σ|yᵢ − φᵢθ|² + (θ − θ0)ᵀR_k(θ − θ0).
pub fn vdf_update_cost_consistent(
    state: &EstimatorState,
    d: &DataPoint,
    lambda: f64,
    epsilon: f64,
    theta0: &DVector<f64>,
) -> Result<(EstimatorState, TraceRecord)> {
    let r_prev = match state.strategy_state() {
        StrategyState::CostConsistent { r_prev, .. } => r_prev.clone(),
        StrategyState::Stateless => {
            return Err(RlsError::StrategyMismatch {
                strategy: state.strategy().tag(),
                operation: "vdf_update_cost_consistent (no R_k bookkeeping)",
            })
        }
    };
    if theta0.len() != state.n() {
        return Err(dim_mismatch(
            "vdf_update_cost_consistent theta0",
            state.n(),
            theta0.len(),
        ));
    }
    let step = vdf_covariance(state, d, lambda, epsilon)?;
    // ΛP⁻¹Λ − P⁻¹ is diagonal in U: (λ̄ᵢ² − 1)σᵢ⁻¹.
    let delta_diag = DVector::from_iterator(
        state.n(),
        step.forgetting
            .lambda_bar_diag
            .iter()
            .zip(step.decomp.sigma_inv.iter())
            .map(|(&l, &s)| (l * l - 1.0) * s),
    );
    let u = &step.decomp.u;
    let delta_r = symmetrize(&(u * DMatrix::from_diagonal(&delta_diag) * u.transpose()));
    let r_next = symmetrize(&(&r_prev + &delta_r));
    let theta =
        state.theta() - &step.p_next * d.phi.transpose() * &step.z + &step.p_next * &delta_r * (theta0 - state.theta());
    let next = state.advanced(
        theta,
        step.p_next.clone(),
        None,
        StrategyState::CostConsistent {
            r_prev: r_next,
            theta0: theta0.clone(),
        },
    );
    let rec = vdf_record(state, step, &next);
    Ok((next, rec))
}

/// Information update with an arbitrary forgetting term M:
/// (I + MP)P⁻¹ + φᵀφ, evaluated as P⁻¹ + M + φᵀφ.
pub fn matrix_forgetting_information(p_inv: &DMatrix<f64>, m: &DMatrix<f64>, phi: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(p_inv + m + phi.transpose() * phi))
}

fn matrix_power(m: &DMatrix<f64>, exp: u32) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..exp {
        out = &out * m;
    }
    out
}

/// The forgetting term M_k for either Kreisselmeier variant.
pub fn kreisselmeier_term(
    p: &DMatrix<f64>,
    p_inv: &DMatrix<f64>,
    lambda: f64,
    alpha: f64,
    beta: f64,
    order: u32,
    variant: KreisselmeierVariant,
) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let eye = DMatrix::identity(n, n);
    let shaped = match variant {
        KreisselmeierVariant::I => matrix_power(&(&eye - p * alpha), order),
        KreisselmeierVariant::II => {
            let shifted = linalg::spd_inverse(&(p_inv + &eye * beta), "P⁻¹ + βI")
                .map_err(|_| RlsError::NumericalBreakdown("P⁻¹ + βI is not invertible"))?;
            matrix_power(&(p_inv - &eye * alpha), order) * matrix_power(&shifted, order)
        }
    };
    Ok(symmetrize(&(shaped * p_inv * (lambda - 1.0))))
}

#[allow(clippy::too_many_arguments)]
pub fn kreisselmeier_update(
    state: &EstimatorState,
    d: &DataPoint,
    lambda: f64,
    alpha: f64,
    beta: f64,
    order: u32,
    variant: KreisselmeierVariant,
) -> Result<EstimatorState> {
    ForgettingStrategy::Kreisselmeier {
        lambda,
        alpha,
        beta,
        order,
        variant,
    }
    .validate()?;
    let z = predicted_error(state, d)?;
    let p_inv = state.information()?;
    let m = kreisselmeier_term(state.p(), &p_inv, lambda, alpha, beta, order, variant)?;
    let info = matrix_forgetting_information(&p_inv, &m, &d.phi);
    let p_next = linalg::spd_inverse(&info, "information matrix")
        .map_err(|_| RlsError::NumericalBreakdown("Kreisselmeier information matrix is not SPD"))?;
    let theta = state.theta() - &p_next * d.phi.transpose() * &z;
    Ok(state.advanced(theta, p_next, Some(info), state.strategy_state().clone()))
}

/// Cao's directional forgetting for scalar measurements:
/// P̄ = P + ((1−λ)/λ)(φP⁻¹φᵀ)⁻¹φᵀφ (P̄ = P when φ = 0),
/// P' = P̄ − P̄φᵀ(1 + φP̄φᵀ)⁻¹φP̄.
pub fn cao_update(state: &EstimatorState, d: &DataPoint, lambda: f64) -> Result<EstimatorState> {
    if d.p() != 1 {
        return Err(RlsError::ScalarOnly { p: d.p() });
    }
    ForgettingStrategy::Cao { lambda }.validate()?;
    let z = predicted_error(state, d)?;
    let p = state.p();
    let p_bar = if d.phi.iter().all(|&x| x == 0.0) {
        p.clone()
    } else {
        let chol = linalg::cholesky(p, "P")?;
        let w = chol.solve(&d.phi.transpose());
        let quad = (&d.phi * w)[(0, 0)];
        if quad.is_nan() || quad <= 0.0 {
            return Err(RlsError::NumericalBreakdown("φP⁻¹φᵀ is not positive"));
        }
        symmetrize(&(p + d.phi.transpose() * &d.phi * ((1.0 - lambda) / (lambda * quad))))
    };
    let (p_next, _) = estimator::downdate(&p_bar, &d.phi, 1.0)?;
    let theta = state.theta() - &p_next * d.phi.transpose() * &z;
    Ok(state.advanced(theta, p_next, None, state.strategy_state().clone()))
}
