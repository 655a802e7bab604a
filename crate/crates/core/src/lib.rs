//! Recursive least squares with uniform and variable-direction forgetting.
//!
//! States are plain values: every update takes `&EstimatorState` and returns
//! the next state with a [`TraceRecord`] of diagnostics.

pub mod error;
pub mod estimator;
pub mod excitation;
pub mod forgetting;
pub mod linalg;
pub mod signalgen;

pub use error::{Result, RlsError};
pub use estimator::{
    batch_solve, error_transition_product, init, kalman_predictor_step, lyapunov_value, predicted_error, step,
    step_covariance, step_information, DataPoint, EstimatorState, History, StateSpace, StrategyState, TraceRecord,
    TransitionProduct,
};
pub use excitation::{
    bound_prop10, bound_prop3, bound_prop4, bound_prop5, check_bounds, condition_number, pe_scan, window_gram,
    BoundCheck, BoundKind, BoundSide, PeReport, SpectralBound, WindowGram,
};
pub use forgetting::{
    build_forgetting_matrix, cao_update, decompose_information, kreisselmeier_update, vdf_update,
    vdf_update_cost_consistent, ForgettingMatrix, ForgettingStrategy, InformationDecomposition, KreisselmeierVariant,
    VdfThetaUpdate,
};
pub use signalgen::{arx_regressor, gaussian_white, scripted_regressors, simulate, three_sine, GeneratorSpec, LtiSiso};
