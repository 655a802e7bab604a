//! Trajectory properties of the example scenarios.

use nalgebra::DMatrix;
use rls_core::forgetting::decompose_information;
use rls_core::linalg::sym_eigenvalues_asc;
use rls_core::{error_transition_product, init, step, DataPoint, ForgettingStrategy, History, TraceRecord};

use super::{
    builtin, frob_rel, randn, randn_vec, replay, rng, slope, vec_rel, with_strategy, CheckResult, Entry, Suite,
    VerifyOptions,
};
use crate::error::Result;
use crate::runner::{run, RunStatus};

pub(crate) fn entries() -> Vec<Entry> {
    vec![
        Entry {
            id: "C03",
            title: "convergence-rate slopes",
            suite: Suite::Invariants,
            check: c03,
        },
        Entry {
            id: "C04",
            title: "scalar asymptotics",
            suite: Suite::Invariants,
            check: c04,
        },
        Entry {
            id: "C06",
            title: "predicted error converges to zero",
            suite: Suite::Invariants,
            check: c06,
        },
        Entry {
            id: "C07",
            title: "loss of excitation: uniform vs VDF",
            suite: Suite::Invariants,
            check: c07,
        },
        Entry {
            id: "C08",
            title: "VDF leaves non-rich directions alone",
            suite: Suite::Invariants,
            check: c08,
        },
        Entry {
            id: "C09",
            title: "VDF reduces to uniform forgetting",
            suite: Suite::Invariants,
            check: c09,
        },
        Entry {
            id: "C13",
            title: "error transition product vanishes",
            suite: Suite::Invariants,
            check: c13,
        },
    ]
}

fn err_norms(records: &[TraceRecord]) -> Vec<f64> {
    records.iter().map(|r| r.theta_err_norm.unwrap_or(f64::NAN)).collect()
}

/// Row k holds θ_{k+1}, so the error at time t = k+1.
fn c03(_: &VerifyOptions) -> Result<CheckResult> {
    let mut lines = Vec::new();
    let mut passed = true;
    for seed in [1u64, 2, 3] {
        let sc = builtin("fir3-rate")?.with_overrides(None, Some(seed))?;
        let e = err_norms(&run(&sc)?.records);
        let (xs, ys): (Vec<f64>, Vec<f64>) = (100..=10_000usize)
            .filter(|&t| t <= e.len())
            .map(|t| ((t as f64).ln(), e[t - 1].ln()))
            .unzip();
        let s = slope(&xs, &ys);
        let ok = (-1.3..=-0.7).contains(&s);
        passed &= ok;
        lines.push(format!("seed {seed} lambda=1 log-log slope {s:.3}"));

        for (name, lambda) in [("fir3-rate-0.999", 0.999f64), ("fir3-rate-0.99", 0.99)] {
            let sc = builtin(name)?.with_overrides(None, Some(seed))?;
            let e = err_norms(&run(&sc)?.records);
            // Skip the transient, stop at the numerical floor.
            let start = (3.0 / (1.0 - lambda)).ceil() as usize;
            let (xs, ys): (Vec<f64>, Vec<f64>) = (start..=e.len())
                .take_while(|&t| e[t - 1] >= 1e-10)
                .map(|t| (t as f64, e[t - 1].ln()))
                .unzip();
            let (s, rel) = if xs.len() >= 10 {
                let s = slope(&xs, &ys);
                (s, (s / lambda.ln() - 1.0).abs())
            } else {
                (f64::NAN, f64::INFINITY)
            };
            let ok = rel <= 0.15;
            passed &= ok;
            lines.push(format!(
                "seed {seed} lambda={lambda} slope {s:.4e} vs ln(lambda) {:.4e} ({:.1}% off, {} pts)",
                lambda.ln(),
                rel * 100.0,
                xs.len()
            ));
        }
    }
    Ok(CheckResult::new(
        "C03",
        "convergence-rate slopes",
        passed,
        lines.join("; "),
    ))
}

fn c04(_: &VerifyOptions) -> Result<CheckResult> {
    let out = run(&builtin("scalar-constant")?)?;
    let p_final = out.records.last().map(|r| r.sigma_p[0]).unwrap_or(f64::NAN);
    let steady = (p_final - 0.1).abs();

    let sc = builtin("scalar-zero-after")?;
    let lambda = sc.estimator.strategy.lambda();
    let k0 = match &sc.regressor {
        crate::scenario::RegressorBuilder::Scripted {
            generator: rls_core::GeneratorSpec::ZeroAfter { k0, .. },
        } => *k0,
        _ => unreachable!("scalar-zero-after is a zero-after script"),
    };
    let rec = run(&sc)?.records;
    let mut ratio_err = 0.0f64;
    let mut drift = 0.0f64;
    // Row k ≥ k0 maps P_k to P_{k+1} with φ_k = 0.
    for k in k0.max(1)..rec.len() {
        ratio_err = ratio_err.max((rec[k].sigma_p[0] * lambda / rec[k - 1].sigma_p[0] - 1.0).abs());
        drift = drift.max((rec[k].theta[0] - rec[k - 1].theta[0]).abs());
    }
    let passed = steady <= 1e-10 && ratio_err <= 1e-12 && drift == 0.0;
    Ok(CheckResult::new(
        "C04",
        "scalar asymptotics",
        passed,
        format!(
            "|P_final - 0.1| = {steady:.3e} (limit 1e-10); growth ratio err {ratio_err:.3e} (limit 1e-12); \
             theta drift after k0 {drift:.3e} over {} steps",
            rec.len().saturating_sub(k0)
        ),
    ))
}

fn tail_max_z(records: &[TraceRecord], tail: usize) -> f64 {
    records[records.len().saturating_sub(tail)..]
        .iter()
        .flat_map(|r| r.z.iter())
        .fold(0.0, |m, z| m.max(z.abs()))
}

fn c06(_: &VerifyOptions) -> Result<CheckResult> {
    let first = run(&builtin("first-order")?)?;
    let vdf = run(&builtin("arx5-vdf")?)?;
    let a = tail_max_z(&first.records, 100);
    let b = tail_max_z(&vdf.records, 100);
    let complete = first.status == RunStatus::Completed && vdf.status == RunStatus::Completed;
    Ok(CheckResult::new(
        "C06",
        "predicted error converges to zero",
        a < 1e-6 && b < 1e-6 && complete,
        format!("max|z| over last 100 steps: first-order {a:.3e}, arx5-vdf {b:.3e} (limit 1e-6)"),
    ))
}

fn c07(_: &VerifyOptions) -> Result<CheckResult> {
    let uniform = run(&builtin("arx5-uniform")?)?;
    let kmax = uniform.records.iter().map(|r| r.kappa_p).fold(0.0, f64::max);
    let uniform_ok = uniform.status.diverged() || kmax > 1e10;

    let sc = builtin("arx5-vdf-theta")?;
    let sigma0 = sc
        .r_matrix()?
        .try_inverse()
        .map(|p| sym_eigenvalues_asc(&p).max())
        .unwrap_or(f64::NAN);
    let epsilon = match sc.estimator.strategy {
        ForgettingStrategy::VariableDirection { epsilon, .. } => epsilon,
        _ => unreachable!("arx5-vdf-theta uses variable-direction forgetting"),
    };
    let vdf = run(&sc)?;
    let smax = vdf.records.iter().map(|r| r.sigma_p[0]).fold(0.0, f64::max);
    let tail = &vdf.records[vdf.records.len().saturating_sub(100)..];
    let rich: Vec<usize> = tail
        .iter()
        .map(|r| {
            r.psi_col_norms
                .as_ref()
                .map_or(0, |c| c.iter().filter(|&&x| x > epsilon).count())
        })
        .collect();
    let (rmin, rmax) = (
        rich.iter().copied().min().unwrap_or(0),
        rich.iter().copied().max().unwrap_or(0),
    );
    let vdf_ok = vdf.status == RunStatus::Completed && smax <= 1e3 * sigma0 && rmin == 6 && rmax == 6;
    Ok(CheckResult::new(
        "C07",
        "loss of excitation: uniform vs VDF",
        uniform_ok && vdf_ok,
        format!(
            "uniform: max kappa {kmax:.3e}, guard {}; VDF: {:?}, max sigma_max(P) {smax:.3e} vs 1e3*sigma_max(P0) \
             = {:.3e}, rich directions over last 100 steps {rmin}..{rmax} (want 6)",
            if uniform.status.diverged() {
                "tripped"
            } else {
                "not tripped"
            },
            vdf.status,
            1e3 * sigma0
        ),
    ))
}

fn c08(_: &VerifyOptions) -> Result<CheckResult> {
    let sc = with_strategy(builtin("subspace-sine")?, ForgettingStrategy::vdf(0.99, 1e-8));
    let rep = replay(&sc)?;
    let mut worst = 0.0f64;
    let mut non_rich = 0usize;
    let mut state = &rep.initial;
    for (d, next) in rep.points.iter().zip(&rep.states) {
        let dec = decompose_information(state.p(), &d.phi, 1e-8)?;
        let p_inv_next = next.information()?;
        for i in (0..dec.rich_mask.len()).filter(|&i| !dec.rich_mask[i]) {
            let u = dec.u.column(i);
            let s = dec.sigma_inv[i];
            let rayleigh = (u.transpose() * &p_inv_next * u)[(0, 0)];
            let residual = (&p_inv_next * u - u * s).norm();
            worst = worst.max((rayleigh - s).abs() / s).max(residual / s);
            non_rich += 1;
        }
        state = next;
    }
    Ok(CheckResult::new(
        "C08",
        "VDF leaves non-rich directions alone",
        worst <= 1e-9 && non_rich > 0,
        format!("max rel change {worst:.3e} over {non_rich} non-rich direction-steps (limit 1e-9)"),
    ))
}

fn c09(_: &VerifyOptions) -> Result<CheckResult> {
    let (n, steps, lambda, epsilon) = (3, 500, 0.99, 1e-12);
    let mut g = rng(9);
    let theta = randn_vec(&mut g, n);
    let mut vdf = init(
        nalgebra::DVector::zeros(n),
        &DMatrix::identity(n, n),
        ForgettingStrategy::vdf(lambda, epsilon),
    )?;
    let mut uni = init(
        nalgebra::DVector::zeros(n),
        &DMatrix::identity(n, n),
        ForgettingStrategy::Uniform { lambda },
    )?;
    let mut worst = 0.0f64;
    let mut min_col = f64::INFINITY;
    for _ in 0..steps {
        let d = DataPoint::from_model(randn(&mut g, 1, n), &theta)?;
        let (v, rec) = step(&vdf, &d)?;
        let (u, _) = step(&uni, &d)?;
        if let Some(c) = &rec.psi_col_norms {
            min_col = min_col.min(c.min());
        }
        worst = worst.max(vec_rel(v.theta(), u.theta())).max(frob_rel(v.p(), u.p()));
        vdf = v;
        uni = u;
    }
    Ok(CheckResult::new(
        "C09",
        "VDF reduces to uniform forgetting",
        worst <= 1e-8 && min_col > epsilon,
        format!(
            "max rel diff {worst:.3e} over {steps} steps (limit 1e-8); min column norm {min_col:.3e} > eps {epsilon:e}"
        ),
    ))
}

fn c13(_: &VerifyOptions) -> Result<CheckResult> {
    let sc = builtin("pe-bounds")?.with_overrides(Some(2000), None)?;
    let lambda = 0.99;
    let history = History::from_points(sc.generate()?.points)?;
    let tp = error_transition_product(&history, lambda, &sc.r_matrix()?)?;
    let norm = tp.matrix.clone().svd(false, false).singular_values.max();
    let in_range = tp.gain_eig_min >= -1e-10 && tp.gain_eig_max <= 1.0 + 1e-10;
    Ok(CheckResult::new(
        "C13",
        "error transition product vanishes",
        norm < 1e-6 && in_range,
        format!(
            "||A_k|| = {norm:.3e} at k = {} (limit 1e-6); gain spectrum [{:.3e}, {:.12}] (allowed [-1e-10, 1+1e-10])",
            history.len(),
            tp.gain_eig_min,
            tp.gain_eig_max
        ),
    ))
}
