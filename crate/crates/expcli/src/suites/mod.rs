//! Verification suites. Every check returns a [`CheckResult`] whose details
//! carry the observed margin.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rls_core::{DataPoint, EstimatorState, ForgettingStrategy};

use crate::catalog;
use crate::error::{ExpError, Result};
use crate::runner::run_with;
use crate::scenario::Scenario;

pub mod bounds;
pub mod invariants;
pub mod oracle;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub details: String,
}

impl CheckResult {
    pub fn new(id: &str, title: &str, passed: bool, details: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            passed,
            details: details.into(),
        }
    }

    /// A check that could not run counts as failed.
    fn errored(id: &str, title: &str, e: ExpError) -> Self {
        Self::new(id, title, false, format!("error: {e}"))
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {} {}: {}", self.id, self.title, self.details)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Invariants,
    Bounds,
    All,
}

impl FromStr for Suite {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "invariants" => Ok(Self::Invariants),
            "bounds" => Ok(Self::Bounds),
            "all" => Ok(Self::All),
            other => Err(ExpError::config(
                "suite",
                format!("unknown suite '{other}' (oracle, invariants, bounds, all)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyOptions {
    /// Evaluate the Prop-4 bound with this λ instead of the one the data was
    /// generated with. Used as a negative control.
    pub corrupt_lambda: Option<f64>,
}

pub(crate) type Check = fn(&VerifyOptions) -> Result<CheckResult>;

pub(crate) struct Entry {
    pub id: &'static str,
    pub title: &'static str,
    pub suite: Suite,
    pub check: Check,
}

fn registry() -> Vec<Entry> {
    let mut all = Vec::new();
    all.extend(oracle::entries());
    all.extend(invariants::entries());
    all.extend(bounds::entries());
    all.sort_by_key(|e| e.id);
    all
}

fn execute(e: &Entry, opts: &VerifyOptions) -> CheckResult {
    (e.check)(opts).unwrap_or_else(|err| CheckResult::errored(e.id, e.title, err))
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Vec<CheckResult> {
    registry()
        .iter()
        .filter(|e| suite == Suite::All || e.suite == suite)
        .map(|e| execute(e, opts))
        .collect()
}

/// The thirteen numbered acceptance criteria, C01 to C13, in order.
pub fn acceptance() -> Vec<CheckResult> {
    let opts = VerifyOptions::default();
    registry()
        .iter()
        .filter(|e| is_criterion(e.id))
        .map(|e| execute(e, &opts))
        .collect()
}

pub fn is_criterion(id: &str) -> bool {
    id.len() == 3 && id.starts_with('C') && id[1..].parse::<u8>().is_ok_and(|n| (1..=13).contains(&n))
}

// Shared helpers.

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub(crate) fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Well-conditioned random SPD matrix.
pub(crate) fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = randn(rng, n, n) * 0.5;
    &a * a.transpose() + DMatrix::identity(n, n) * (0.5 + rng.random::<f64>())
}

pub(crate) fn uniform_or_none(lambda: f64) -> ForgettingStrategy {
    if lambda == 1.0 {
        ForgettingStrategy::None
    } else {
        ForgettingStrategy::Uniform { lambda }
    }
}

/// Random estimation problem used by the oracle checks.
#[derive(Debug, Clone)]
pub(crate) struct RandomConfig {
    pub lambda: f64,
    pub r: DMatrix<f64>,
    pub theta0: DVector<f64>,
    pub points: Vec<DataPoint>,
}

pub(crate) fn random_configs(count: usize, seed: u64) -> Vec<RandomConfig> {
    let mut g = rng(seed);
    let lambdas = [1.0, 0.99, 0.9];
    (0..count)
        .map(|i| {
            let n = g.random_range(1..=6);
            let p = g.random_range(1..=3);
            let k = g.random_range(1..=200);
            let theta = randn_vec(&mut g, n);
            let points = (0..k)
                .map(|_| {
                    let phi = randn(&mut g, p, n);
                    // A little output noise so the data are not exactly consistent.
                    let y = &phi * &theta + randn_vec(&mut g, p) * 0.1;
                    DataPoint::new(phi, y).expect("shapes agree")
                })
                .collect();
            RandomConfig {
                lambda: lambdas[i % lambdas.len()],
                r: random_spd(&mut g, n),
                theta0: randn_vec(&mut g, n),
                points,
            }
        })
        .collect()
}

/// Full replay of a scenario: records plus every post-update state.
pub(crate) struct Replay {
    pub initial: EstimatorState,
    pub states: Vec<EstimatorState>,
    pub points: Vec<DataPoint>,
}

impl Replay {
    /// P_k⁻¹ for k = 0..=len.
    pub fn information(&self) -> Result<Vec<DMatrix<f64>>> {
        std::iter::once(&self.initial)
            .chain(&self.states)
            .map(|s| s.information().map_err(ExpError::from))
            .collect()
    }
}

pub(crate) fn replay(sc: &Scenario) -> Result<Replay> {
    let mut initial = None;
    let mut states = Vec::with_capacity(sc.steps);
    let mut points = Vec::with_capacity(sc.steps);
    run_with(sc, |before, d, after, _| {
        initial.get_or_insert_with(|| before.clone());
        states.push(after.clone());
        points.push(d.clone());
    })?;
    let initial = match initial {
        Some(s) => s,
        None => rls_core::init(sc.theta0(), &sc.r_matrix()?, sc.estimator.strategy.clone())?,
    };
    Ok(Replay {
        initial,
        states,
        points,
    })
}

pub(crate) fn builtin(name: &str) -> Result<Scenario> {
    catalog::builtin(name).ok_or_else(|| ExpError::UnknownScenario(name.into()))
}

pub(crate) fn with_strategy(mut sc: Scenario, strategy: ForgettingStrategy) -> Scenario {
    sc.estimator.strategy = strategy;
    sc
}

/// Least-squares slope of ys against xs.
pub(crate) fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub(crate) fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub(crate) fn vec_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
