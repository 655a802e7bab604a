//! Deterministic inputs, transfer-function simulation and regressor builders.
//! All difference equations start from rest and histories are zero-padded.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Result, RlsError};
use crate::estimator::DataPoint;

/// Name written into output headers next to the seed.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), Normal via rand_distr 0.5";

/// Periods of the three harmonics; the signal repeats every 17·23·53 steps.
pub const THREE_SINE_PERIODS: [f64; 3] = [17.0, 23.0, 53.0];
pub const THREE_SINE_PERIOD: usize = 17 * 23 * 53;

pub fn three_sine(k: usize) -> f64 {
    THREE_SINE_PERIODS.iter().map(|t| (2.0 * PI * k as f64 / t).sin()).sum()
}

/// Discrete SISO transfer function num(q)/den(q) in descending powers of q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSiso {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl LtiSiso {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.first() != Some(&1.0) {
            return Err(RlsError::ParameterOutOfRange("denominator must be monic".into()));
        }
        if num.is_empty() || num.len() > den.len() {
            return Err(RlsError::ParameterOutOfRange(format!(
                "numerator degree {} exceeds denominator degree {}",
                num.len().saturating_sub(1),
                den.len() - 1
            )));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(RlsError::NonFinite("transfer function coefficients"));
        }
        Ok(Self { num, den })
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// Coefficient of u_{k−i}, i = 0..=order.
    fn input_taps(&self) -> Vec<f64> {
        let pad = self.den.len() - self.num.len();
        let mut taps = vec![0.0; pad];
        taps.extend_from_slice(&self.num);
        taps
    }

    /// θ for the regressor [u_{k−1} … u_{k−nb}, y_{k−1} … y_{k−na}]:
    /// input taps followed by the negated denominator tail.
    pub fn arx_parameters(&self, nb: usize, na: usize) -> DVector<f64> {
        let taps = self.input_taps();
        let b = (1..=nb).map(|i| taps.get(i).copied().unwrap_or(0.0));
        let a = (1..=na).map(|i| -self.den.get(i).copied().unwrap_or(0.0));
        DVector::from_iterator(nb + na, b.chain(a))
    }
}

/// Output of `sys` driven by `input` from rest, `steps` samples.
pub fn simulate(sys: &LtiSiso, input: impl IntoIterator<Item = f64>, steps: usize) -> Vec<f64> {
    let taps = sys.input_taps();
    let order = sys.order();
    let mut u_line: VecDeque<f64> = VecDeque::from(vec![0.0; order + 1]);
    let mut y_line: VecDeque<f64> = VecDeque::from(vec![0.0; order]);
    let mut out = Vec::with_capacity(steps);
    for u in input.into_iter().take(steps) {
        u_line.pop_back();
        u_line.push_front(u);
        let mut y: f64 = taps.iter().zip(u_line.iter()).map(|(b, u)| b * u).sum();
        y -= sys.den[1..].iter().zip(y_line.iter()).map(|(a, y)| a * y).sum::<f64>();
        if order > 0 {
            y_line.pop_back();
            y_line.push_front(y);
        }
        out.push(y);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorOrder {
    #[default]
    InputsFirst,
    OutputsFirst,
}

/// [u_{k−1} … u_{k−nb}, y_{k−1} … y_{k−na}] (or outputs first), with
/// samples before time 0 taken as zero.
pub fn arx_regressor(u: &[f64], y: &[f64], k: usize, nb: usize, na: usize, order: RegressorOrder) -> DMatrix<f64> {
    let past = |s: &[f64], lag: usize| {
        if lag <= k {
            s.get(k - lag).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    };
    let us = (1..=nb).map(|i| past(u, i));
    let ys = (1..=na).map(|i| past(y, i));
    let row: Vec<f64> = match order {
        RegressorOrder::InputsFirst => us.chain(ys).collect(),
        RegressorOrder::OutputsFirst => ys.chain(us).collect(),
    };
    DMatrix::from_row_slice(1, nb + na, &row)
}

/// Deterministic zero-mean Gaussian white noise.
#[derive(Debug, Clone)]
pub struct GaussianWhite {
    rng: ChaCha8Rng,
    dist: Normal<f64>,
}

impl Iterator for GaussianWhite {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.dist.sample(&mut self.rng))
    }
}

pub fn gaussian_white(seed: u64, std: f64) -> Result<GaussianWhite> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(RlsError::ParameterOutOfRange(format!("std = {std} must be positive")));
    }
    let dist = Normal::new(0.0, std).map_err(|e| RlsError::ParameterOutOfRange(e.to_string()))?;
    Ok(GaussianWhite {
        rng: ChaCha8Rng::seed_from_u64(seed),
        dist,
    })
}

/// Input signals and directly scripted regressor sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    ThreeSine,
    Constant {
        value: f64,
    },
    SwitchedThreeSineToConstant {
        switch_step: usize,
        value: f64,
    },
    /// Scenario files usually omit `seed`; the runner substitutes the scenario seed.
    GaussianWhite {
        #[serde(default)]
        seed: u64,
        std: f64,
    },
    /// φ_k = 1/√(k+1), scalar.
    HarmonicDecay,
    /// φ_k = value for k < k0 and 0 afterwards, scalar.
    ZeroAfter {
        k0: usize,
        value: f64,
    },
    /// φ_k = sin(2πk/period)·[1 … 1].
    SubspaceSine {
        period: f64,
        width: usize,
    },
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RlsError::ParameterOutOfRange(m));
        match *self {
            Self::Constant { value }
            | Self::ZeroAfter { value, .. }
            | Self::SwitchedThreeSineToConstant { value, .. }
                if !value.is_finite() =>
            {
                bad(format!("value = {value} must be finite"))
            }
            Self::GaussianWhite { std, .. } if !(std > 0.0 && std.is_finite()) => {
                bad(format!("std = {std} must be positive"))
            }
            Self::SubspaceSine { period, width } if !(period > 0.0 && period.is_finite()) || width == 0 => bad(
                format!("subspace-sine needs period > 0 and width ≥ 1 (got {period}, {width})"),
            ),
            _ => Ok(()),
        }
    }

    /// Whether this is a scalar input stream (as opposed to a regressor script).
    /// `Constant` serves as both.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Self::ThreeSine
                | Self::Constant { .. }
                | Self::SwitchedThreeSineToConstant { .. }
                | Self::GaussianWhite { .. }
        )
    }

    pub fn input(&self, steps: usize) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            Self::ThreeSine => (0..steps).map(three_sine).collect(),
            Self::Constant { value } => vec![value; steps],
            Self::SwitchedThreeSineToConstant { switch_step, value } => (0..steps)
                .map(|k| if k < switch_step { three_sine(k) } else { value })
                .collect(),
            Self::GaussianWhite { seed, std } => gaussian_white(seed, std)?.take(steps).collect(),
            _ => {
                return Err(RlsError::ParameterOutOfRange(
                    "generator is a regressor script, not an input signal".into(),
                ))
            }
        })
    }

    /// Number of regressor columns a script produces.
    pub fn script_width(&self) -> Option<usize> {
        match *self {
            Self::Constant { .. } | Self::HarmonicDecay | Self::ZeroAfter { .. } => Some(1),
            Self::SubspaceSine { width, .. } => Some(width),
            _ => None,
        }
    }
}

/// Regressor scripts paired with y = φθ.
pub fn scripted_regressors(spec: &GeneratorSpec, theta: &DVector<f64>, steps: usize) -> Result<Vec<DataPoint>> {
    spec.validate()?;
    let width = spec
        .script_width()
        .ok_or_else(|| RlsError::ParameterOutOfRange("generator is an input signal, not a regressor script".into()))?;
    if theta.len() != width {
        return Err(dim_mismatch("scripted_regressors theta", width, theta.len()));
    }
    (0..steps)
        .map(|k| {
            let phi = match *spec {
                GeneratorSpec::Constant { value } => DMatrix::from_element(1, 1, value),
                GeneratorSpec::HarmonicDecay => DMatrix::from_element(1, 1, 1.0 / ((k + 1) as f64).sqrt()),
                GeneratorSpec::ZeroAfter { k0, value } => DMatrix::from_element(1, 1, if k < k0 { value } else { 0.0 }),
                GeneratorSpec::SubspaceSine { period, width } => {
                    DMatrix::from_element(1, width, (2.0 * PI * k as f64 / period).sin())
                }
                _ => unreachable!("script_width filters input kinds"),
            };
            DataPoint::from_model(phi, theta)
        })
        .collect()
}
