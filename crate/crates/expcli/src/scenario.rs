//! Scenario files: what data to generate and how to estimate from it.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rls_core::signalgen::{self, RegressorOrder};
use rls_core::{DataPoint, ForgettingStrategy, GeneratorSpec, LtiSiso};
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, Result};

/// Largest |y − φθ| tolerated when θ is derived from a transfer function.
const ARX_CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    /// The worked example this scenario reproduces.
    #[serde(default)]
    pub mirrors: String,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    pub regressor: RegressorBuilder,
    #[serde(default)]
    pub theta_true: Option<Vec<f64>>,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub pe_window: Option<usize>,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegressorBuilder {
    /// Regressors written down directly (scalar or subspace scripts).
    Scripted { generator: GeneratorSpec },
    /// φ_k = [u_{k−l} for l in lags], y = φθ_true.
    Lagged { input: GeneratorSpec, lags: Vec<usize> },
    /// Input through num/den, then the ARX regressor of past inputs and outputs.
    Arx {
        input: GeneratorSpec,
        num: Vec<f64>,
        den: Vec<f64>,
        nb: usize,
        na: usize,
        #[serde(default)]
        order: RegressorOrder,
    },
    /// Independent N(0, std²) entries, p×width per step, y = φθ_true.
    WhiteRegressor {
        #[serde(default = "one")]
        rows: usize,
        width: usize,
        std: f64,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateForm {
    #[default]
    Covariance,
    Information,
}

/// R = c·I, diag(d) or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RSpec {
    Scale(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Default for RSpec {
    fn default() -> Self {
        Self::Scale(1.0)
    }
}

impl RSpec {
    pub fn matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::Scale(c) => Ok(DMatrix::identity(n, n) * *c),
            Self::Diagonal(d) if d.len() == n => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
            Self::Full(rows) if rows.len() == n && rows.iter().all(|r| r.len() == n) => {
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
            _ => Err(ExpError::config(
                "estimator.r",
                format!("expected a scalar, {n} diagonal entries or an {n}x{n} matrix"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub strategy: ForgettingStrategy,
    #[serde(default)]
    pub form: UpdateForm,
    /// Defaults to zero.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub r: RSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// V column; defaults to on whenever θ_true is known.
    #[serde(default)]
    pub lyapunov: Option<bool>,
    /// ψ column norms; defaults to on for variable-direction forgetting.
    #[serde(default)]
    pub psi: Option<bool>,
}

/// Data stream produced by a scenario.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub points: Vec<DataPoint>,
    pub theta_true: Option<DVector<f64>>,
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ExpError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn with_overrides(mut self, steps: Option<usize>, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = steps {
            self.steps = s;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(ExpError::config("name", "must not be empty"));
        }
        if self.steps == 0 {
            return Err(ExpError::config("steps", "must be at least 1"));
        }
        self.estimator
            .strategy
            .validate()
            .map_err(|e| ExpError::config("estimator.strategy", e.to_string()))?;
        let gen_check =
            |field: &str, g: &GeneratorSpec| g.validate().map_err(|e| ExpError::config(field, e.to_string()));
        match &self.regressor {
            RegressorBuilder::Scripted { generator } => {
                gen_check("regressor.generator", generator)?;
                if generator.script_width().is_none() {
                    return Err(ExpError::config(
                        "regressor.generator",
                        "input signals need a lagged or arx regressor",
                    ));
                }
                if self.theta_true.is_none() {
                    return Err(ExpError::config("theta_true", "required for scripted regressors"));
                }
            }
            RegressorBuilder::Lagged { input, lags } => {
                gen_check("regressor.input", input)?;
                if !input.is_input() {
                    return Err(ExpError::config("regressor.input", "must be an input signal"));
                }
                if lags.is_empty() {
                    return Err(ExpError::config("regressor.lags", "must not be empty"));
                }
                if self.theta_true.is_none() {
                    return Err(ExpError::config("theta_true", "required for lagged regressors"));
                }
            }
            RegressorBuilder::Arx {
                input,
                num,
                den,
                nb,
                na,
                ..
            } => {
                gen_check("regressor.input", input)?;
                if !input.is_input() {
                    return Err(ExpError::config("regressor.input", "must be an input signal"));
                }
                LtiSiso::new(num.clone(), den.clone())
                    .map_err(|e| ExpError::config("regressor.num/den", e.to_string()))?;
                if nb + na == 0 {
                    return Err(ExpError::config("regressor.nb/na", "regressor would be empty"));
                }
            }
            RegressorBuilder::WhiteRegressor { rows, width, std } => {
                if *rows == 0 || *width == 0 || std.is_nan() || *std <= 0.0 {
                    return Err(ExpError::config(
                        "regressor",
                        "white-regressor needs rows, width ≥ 1 and std > 0",
                    ));
                }
                if self.theta_true.is_none() {
                    return Err(ExpError::config("theta_true", "required for white regressors"));
                }
            }
        }
        let n = self.n();
        if let Some(t) = &self.theta_true {
            if t.len() != n {
                return Err(ExpError::config(
                    "theta_true",
                    format!("expected {n} entries, got {}", t.len()),
                ));
            }
        }
        if let Some(t) = &self.estimator.theta0 {
            if t.len() != n {
                return Err(ExpError::config(
                    "estimator.theta0",
                    format!("expected {n} entries, got {}", t.len()),
                ));
            }
        }
        let r = self.estimator.r.matrix(n)?;
        if !rls_core::linalg::is_spd(&r) {
            return Err(ExpError::config("estimator.r", "must be symmetric positive definite"));
        }
        if matches!(self.estimator.strategy, ForgettingStrategy::Cao { .. }) && self.p() != 1 {
            return Err(ExpError::config(
                "estimator.strategy",
                "cao forgetting needs scalar measurements",
            ));
        }
        if self.estimator.form == UpdateForm::Information && self.estimator.strategy.uniform_lambda().is_none() {
            return Err(ExpError::config(
                "estimator.form",
                "information form applies to none/uniform strategies only",
            ));
        }
        Ok(())
    }

    /// Parameter count.
    pub fn n(&self) -> usize {
        match &self.regressor {
            RegressorBuilder::Scripted { generator } => generator.script_width().unwrap_or(0),
            RegressorBuilder::Lagged { lags, .. } => lags.len(),
            RegressorBuilder::Arx { nb, na, .. } => nb + na,
            RegressorBuilder::WhiteRegressor { width, .. } => *width,
        }
    }

    /// Measurement count per step.
    pub fn p(&self) -> usize {
        match &self.regressor {
            RegressorBuilder::WhiteRegressor { rows, .. } => *rows,
            _ => 1,
        }
    }

    pub fn r_matrix(&self) -> Result<DMatrix<f64>> {
        self.estimator.r.matrix(self.n())
    }

    pub fn theta0(&self) -> DVector<f64> {
        match &self.estimator.theta0 {
            Some(t) => DVector::from_column_slice(t),
            None => DVector::zeros(self.n()),
        }
    }

    pub fn wants_lyapunov(&self, has_truth: bool) -> bool {
        has_truth && self.outputs.lyapunov.unwrap_or(true)
    }

    pub fn wants_psi(&self) -> bool {
        self.outputs.psi.unwrap_or(matches!(
            self.estimator.strategy,
            ForgettingStrategy::VariableDirection { .. }
        ))
    }

    fn seeded(&self, g: &GeneratorSpec) -> GeneratorSpec {
        match *g {
            GeneratorSpec::GaussianWhite { std, .. } => GeneratorSpec::GaussianWhite { seed: self.seed, std },
            ref other => other.clone(),
        }
    }

    /// Deterministic (φ_k, y_k) for k = 0..steps.
    pub fn generate(&self) -> Result<GeneratedData> {
        let steps = self.steps;
        let given = self.theta_true.as_ref().map(|t| DVector::from_column_slice(t));
        match &self.regressor {
            RegressorBuilder::Scripted { generator } => {
                let theta = given.expect("validated");
                let points = signalgen::scripted_regressors(&self.seeded(generator), &theta, steps)?;
                Ok(GeneratedData {
                    points,
                    theta_true: Some(theta),
                })
            }
            RegressorBuilder::Lagged { input, lags } => {
                let theta = given.expect("validated");
                let u = self.seeded(input).input(steps)?;
                let points = (0..steps)
                    .map(|k| {
                        let row: Vec<f64> = lags.iter().map(|&l| if l <= k { u[k - l] } else { 0.0 }).collect();
                        DataPoint::from_model(DMatrix::from_row_slice(1, row.len(), &row), &theta)
                    })
                    .collect::<rls_core::Result<Vec<_>>>()?;
                Ok(GeneratedData {
                    points,
                    theta_true: Some(theta),
                })
            }
            RegressorBuilder::Arx {
                input,
                num,
                den,
                nb,
                na,
                order,
            } => {
                let sys = LtiSiso::new(num.clone(), den.clone())?;
                let u = self.seeded(input).input(steps)?;
                let y = signalgen::simulate(&sys, u.iter().copied(), steps);
                let derived = {
                    let t = sys.arx_parameters(*nb, *na);
                    match order {
                        RegressorOrder::InputsFirst => t,
                        RegressorOrder::OutputsFirst => {
                            DVector::from_iterator(nb + na, t.iter().skip(*nb).chain(t.iter().take(*nb)).copied())
                        }
                    }
                };
                let mut points = Vec::with_capacity(steps);
                for k in 0..steps {
                    let phi = signalgen::arx_regressor(&u, &y, k, *nb, *na, *order);
                    let resid = (&phi * &derived)[0] - y[k];
                    if resid.abs() > ARX_CONSISTENCY_TOL * y[k].abs().max(1.0) {
                        return Err(ExpError::config(
                            "regressor.nb/na",
                            format!("y_k ≠ φ_kθ at k = {k} (residual {resid:e}); orders too small for num/den"),
                        ));
                    }
                    points.push(DataPoint::new(phi, DVector::from_element(1, y[k]))?);
                }
                let theta = match given {
                    Some(t) => t,
                    None => derived,
                };
                Ok(GeneratedData {
                    points,
                    theta_true: Some(theta),
                })
            }
            RegressorBuilder::WhiteRegressor { rows, width, std } => {
                let theta = given.expect("validated");
                let mut noise = signalgen::gaussian_white(self.seed, *std)?;
                let points = (0..steps)
                    .map(|_| {
                        let phi = DMatrix::from_fn(*rows, *width, |_, _| noise.next().expect("infinite stream"));
                        DataPoint::from_model(phi, &theta)
                    })
                    .collect::<rls_core::Result<Vec<_>>>()?;
                Ok(GeneratedData {
                    points,
                    theta_true: Some(theta),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
description = "test"
steps = 10
theta_true = [0.4, 1.4]

[regressor]
kind = "scripted"
generator = { kind = "subspace-sine", period = 100.0, width = 2 }

[estimator]
strategy = { kind = "variable-direction", lambda = 0.9 }
"#;

    #[test]
    fn parses_with_defaults() {
        let sc = Scenario::from_toml_str(MINIMAL, "inline").unwrap();
        assert_eq!(sc.estimator.strategy, ForgettingStrategy::vdf(0.9, 1e-8));
        assert_eq!(sc.estimator.r, RSpec::Scale(1.0));
        assert_eq!(sc.n(), 2);
        assert!(sc.wants_psi());
        let again = Scenario::from_toml_str(&sc.to_toml(), "roundtrip").unwrap();
        assert_eq!(again, sc);
    }

    #[test]
    fn field_level_errors() {
        let bad = MINIMAL.replace("lambda = 0.9", "lambda = 1.5");
        match Scenario::from_toml_str(&bad, "inline") {
            Err(ExpError::Config { field, .. }) => assert_eq!(field, "estimator.strategy"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = MINIMAL.replace("[0.4, 1.4]", "[0.4]");
        assert!(
            matches!(Scenario::from_toml_str(&bad, "inline"), Err(ExpError::Config { field, .. }) if field == "theta_true")
        );
        let bad = MINIMAL.replace("steps = 10", "steps = 10\nbogus = 1");
        assert!(matches!(
            Scenario::from_toml_str(&bad, "inline"),
            Err(ExpError::Parse { .. })
        ));
    }

    #[test]
    fn arx_order_too_small_is_a_config_error() {
        let text = r#"
name = "t"
description = "test"
steps = 20
[regressor]
kind = "arx"
input = { kind = "three-sine" }
num = [0.8]
den = [1.0, -0.4]
nb = 1
na = 0
[estimator]
strategy = { kind = "none" }
"#;
        assert!(matches!(
            Scenario::from_toml_str(text, "inline").unwrap().generate(),
            Err(ExpError::Config { .. })
        ));
    }

    #[test]
    fn seed_reaches_white_noise_input() {
        let text = r#"
name = "t"
description = "test"
steps = 5
seed = 3
[regressor]
kind = "arx"
input = { kind = "gaussian-white", std = 1.0 }
num = [1.0, 0.8, 0.5]
den = [1.0, 0.0, 0.0, 0.0]
nb = 3
na = 0
[estimator]
strategy = { kind = "none" }
"#;
        let sc = Scenario::from_toml_str(text, "inline").unwrap();
        let a = sc.generate().unwrap();
        let b = sc.clone().with_overrides(None, Some(4)).unwrap().generate().unwrap();
        let first: Vec<f64> = signalgen::gaussian_white(3, 1.0).unwrap().take(1).collect();
        assert_eq!(a.points[1].phi[(0, 0)], first[0]);
        assert_ne!(a.points[1].phi, b.points[1].phi);
        assert_eq!(a.theta_true.unwrap().as_slice(), &[1.0, 0.8, 0.5]);
    }
}
