use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rls_core::forgetting::{kreisselmeier_term, matrix_forgetting_information};
use rls_core::linalg::{is_spd, max_abs, rel_diff, rel_diff_vec, sym_eigenvalues_asc};
use rls_core::{
    batch_solve, build_forgetting_matrix, decompose_information, init, lyapunov_value, step, step_covariance,
    step_information, window_gram, DataPoint, EstimatorState, ForgettingStrategy, History, KreisselmeierVariant,
    StrategyState, VdfThetaUpdate,
};

fn randn(g: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| g.sample(StandardNormal))
}

fn randn_vec(g: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| g.sample(StandardNormal))
}

fn random_spd(g: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = randn(g, n, n) * 0.5;
    &a * a.transpose() + DMatrix::identity(n, n) * (0.5 + g.random::<f64>())
}

fn forgetting(lambda: f64) -> ForgettingStrategy {
    if lambda == 1.0 {
        ForgettingStrategy::None
    } else {
        ForgettingStrategy::Uniform { lambda }
    }
}

/// (n, p, steps, λ, seed) for the random-data properties.
fn config() -> impl Strategy<Value = (usize, usize, usize, f64, u64)> {
    (
        1usize..=6,
        1usize..=3,
        1usize..=200,
        prop::sample::select(vec![1.0, 0.999, 0.99, 0.9]),
        any::<u64>(),
    )
}

fn noisy_points(g: &mut ChaCha8Rng, n: usize, p: usize, steps: usize) -> Vec<DataPoint> {
    let theta = randn_vec(g, n);
    (0..steps)
        .map(|_| {
            let phi = randn(g, p, n);
            let y = &phi * &theta + randn_vec(g, p) * 0.1;
            DataPoint::new(phi, y).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn recursion_matches_batch_minimizer((n, p, steps, lambda, seed) in config()) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let r = random_spd(&mut g, n);
        let theta0 = randn_vec(&mut g, n);
        let points = noisy_points(&mut g, n, p, steps);
        let mut state = init(theta0.clone(), &r, forgetting(lambda)).unwrap();
        let mut history = History::new();
        for d in points {
            history.push(d.clone()).unwrap();
            state = step_covariance(&state, &d).unwrap().0;
            let batch = batch_solve(&history, lambda, &r, &theta0).unwrap();
            let err = (state.theta() - &batch).norm() / batch.norm().max(f64::MIN_POSITIVE);
            prop_assert!(err <= 1e-8, "k = {}: {err:e}", history.len());
        }
    }

    #[test]
    fn covariance_and_information_forms_agree((n, p, steps, lambda, seed) in config()) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let r = random_spd(&mut g, n);
        let mut cov = init(randn_vec(&mut g, n), &r, forgetting(lambda)).unwrap();
        let mut inf = cov.clone();
        for d in noisy_points(&mut g, n, p, steps) {
            cov = step_covariance(&cov, &d).unwrap().0;
            inf = step_information(&inf, &d).unwrap().0;
            prop_assert!((inf.p() - cov.p()).norm() <= 1e-9 * cov.p().norm());
            prop_assert!((inf.theta() - cov.theta()).norm() <= 1e-9 * cov.theta().norm().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn every_strategy_keeps_covariance_spd(seed in any::<u64>(), n in 1usize..=5, which in 0usize..6) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let strategy = match which {
            0 => ForgettingStrategy::None,
            1 => ForgettingStrategy::Uniform { lambda: 0.95 },
            2 => ForgettingStrategy::vdf(0.9, 1e-8),
            3 => ForgettingStrategy::Kreisselmeier {
                lambda: 0.9, alpha: 0.5, beta: 0.0, order: 3, variant: KreisselmeierVariant::I,
            },
            4 => ForgettingStrategy::Kreisselmeier {
                lambda: 0.9, alpha: 0.5, beta: 0.1, order: 1, variant: KreisselmeierVariant::II,
            },
            _ => ForgettingStrategy::Cao { lambda: 0.95 },
        };
        let mut state = init(DVector::zeros(n), &DMatrix::identity(n, n), strategy).unwrap();
        for k in 0..150 {
            // Excitation confined to the first coordinate half the time.
            let mut phi = randn(&mut g, 1, n);
            if k % 2 == 1 {
                phi.columns_mut(1, n - 1).fill(0.0);
            }
            let y = randn_vec(&mut g, 1);
            state = step(&state, &DataPoint::new(phi, y).unwrap()).unwrap().0;
            prop_assert!(is_spd(state.p()), "P not SPD at k = {k}");
        }
    }

    #[test]
    fn estimates_stay_in_the_regressor_span(seed in any::<u64>(), n in 2usize..=6, lambda in 0.98f64..=1.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let v = randn_vec(&mut g, n).normalize();
        let truth = randn_vec(&mut g, n);
        let mut state = init(DVector::zeros(n), &DMatrix::identity(n, n), forgetting(lambda)).unwrap();
        for _ in 0..100 {
            let s: f64 = g.sample(StandardNormal);
            let d = DataPoint::from_model(DMatrix::from_row_slice(1, n, (&v * s).as_slice()), &truth).unwrap();
            state = step(&state, &d).unwrap().0;
            let th = state.theta();
            let off = (th - &v * v.dot(th)).norm();
            prop_assert!(off <= 1e-9 * th.norm() || off <= 1e-300, "off-span {off:e}, |theta| {:e}", th.norm());
        }
    }

    #[test]
    fn error_recursion_is_consistent((n, p, steps, lambda, seed) in config()) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let truth = randn_vec(&mut g, n);
        let mut state = init(DVector::zeros(n), &random_spd(&mut g, n), forgetting(lambda)).unwrap();
        for _ in 0..steps {
            let d = DataPoint::from_model(randn(&mut g, p, n), &truth).unwrap();
            let err = state.theta() - &truth;
            let p_inv = state.information().unwrap();
            let (next, _) = step(&state, &d).unwrap();
            let direct = next.theta() - &truth;
            let eye = DMatrix::identity(n, n);
            let via_gain = (eye - next.p() * d.phi.transpose() * &d.phi) * &err;
            let via_info = next.p() * &p_inv * &err * lambda;
            let scale = err.norm().max(1.0);
            prop_assert!((&direct - via_gain).norm() <= 1e-9 * scale);
            prop_assert!((&direct - via_info).norm() <= 1e-9 * scale);
            state = next;
        }
    }

    #[test]
    fn lyapunov_value_never_increases(seed in any::<u64>(), n in 1usize..=6, vdf in any::<bool>(), lambda in 0.9f64..1.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let truth = randn_vec(&mut g, n);
        let strategy = if vdf { ForgettingStrategy::vdf(lambda, 1e-8) } else { ForgettingStrategy::Uniform { lambda } };
        let mut state = init(DVector::zeros(n), &DMatrix::identity(n, n), strategy).unwrap();
        let mut v = lyapunov_value(&state, &truth).unwrap();
        for k in 0..150 {
            let mut phi = randn(&mut g, 1, n);
            if k % 3 != 0 {
                phi[(0, 0)] = 0.0;
            }
            state = step(&state, &DataPoint::from_model(phi, &truth).unwrap()).unwrap().0;
            let next = lyapunov_value(&state, &truth).unwrap();
            prop_assert!(next >= 0.0 && next <= v + 1e-12 * v.max(1.0), "k = {k}: {next:e} > {v:e}");
            v = next;
        }
    }

    #[test]
    fn update_matrix_is_positive_definite(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=3, lambda in 0.5f64..=1.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let pm = random_spd(&mut g, n);
        let phi = randn(&mut g, p, n) * 3.0;
        let gram = &phi * &pm * phi.transpose();
        let s = DMatrix::identity(p, p) * lambda + &gram;
        let m = DMatrix::identity(p, p) - &gram * s.try_inverse().unwrap();
        let m = (&m + m.transpose()) * 0.5;
        prop_assert!(sym_eigenvalues_asc(&m)[0] > 0.0);
    }

    #[test]
    fn forgetting_matrix_sandwich_and_commutation(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=3, lambda in 0.5f64..1.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let pm = random_spd(&mut g, n);
        let mut phi = randn(&mut g, p, n);
        if n > 1 {
            phi.column_mut(n - 1).fill(0.0);
        }
        let dec = decompose_information(&pm, &phi, 1e-8).unwrap();
        let fm = build_forgetting_matrix(&dec, lambda);
        let p_inv = dec.information();
        let forgotten = &fm.lambda * &p_inv * &fm.lambda;
        let scale = max_abs(&p_inv).max(1.0);
        prop_assert!(sym_eigenvalues_asc(&(&forgotten - &p_inv * lambda))[0] >= -1e-10 * scale);
        prop_assert!(sym_eigenvalues_asc(&(&p_inv - &forgotten))[0] >= -1e-10 * scale);
        prop_assert!(max_abs(&(&fm.lambda * &p_inv - &p_inv * &fm.lambda)) <= 1e-9 * max_abs(&p_inv));

        // Eigenvalues of Λ are the λ̄ entries.
        let mut want: Vec<f64> = fm.lambda_bar_diag.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let got = sym_eigenvalues_asc(&fm.lambda);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let ortho = dec.u.transpose() * &dec.u - DMatrix::identity(n, n);
        prop_assert!(max_abs(&ortho) <= 1e-10);
    }

    #[test]
    fn vdf_information_and_covariance_forms_are_inverse(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=3, lambda in 0.5f64..1.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let pm = random_spd(&mut g, n);
        let mut phi = randn(&mut g, p, n);
        if n > 2 {
            phi.columns_mut(n - 2, 2).fill(0.0);
        }
        let state = EstimatorState::from_parts(0, DVector::zeros(n), pm.clone(), ForgettingStrategy::vdf(lambda, 1e-8)).unwrap();
        let d = DataPoint::new(phi.clone(), DVector::zeros(p)).unwrap();
        let (next, _) = step(&state, &d).unwrap();
        let dec = decompose_information(&pm, &phi, 1e-8).unwrap();
        let info = build_forgetting_matrix(&dec, lambda).apply_information(&dec.information(), &phi);
        prop_assert!(is_spd(&info));
        let kappa = rls_core::condition_number(next.p()).unwrap();
        let prod = next.p() * &info - DMatrix::identity(n, n);
        prop_assert!(max_abs(&prod) <= 1e-8 * kappa);
    }

    #[test]
    fn larger_threshold_shrinks_the_rich_set(seed in any::<u64>(), n in 1usize..=6, e1 in -12f64..0.0, de in 0f64..4.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let pm = random_spd(&mut g, n);
        let phi = randn(&mut g, 1, n) * 1e-3;
        let small = decompose_information(&pm, &phi, 10f64.powf(e1)).unwrap();
        let large = decompose_information(&pm, &phi, 10f64.powf(e1 + de)).unwrap();
        for (a, b) in large.rich_mask.iter().zip(&small.rich_mask) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn cost_consistent_bookkeeping_stays_symmetric(seed in any::<u64>(), n in 1usize..=5) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let strategy = ForgettingStrategy::VariableDirection {
            lambda: 0.9, epsilon: 1e-8, theta_update: VdfThetaUpdate::CostConsistent,
        };
        let mut state = init(randn_vec(&mut g, n), &random_spd(&mut g, n), strategy).unwrap();
        for _ in 0..50 {
            let d = DataPoint::new(randn(&mut g, 1, n), randn_vec(&mut g, 1)).unwrap();
            state = step(&state, &d).unwrap().0;
            let StrategyState::CostConsistent { r_prev, .. } = state.strategy_state() else {
                panic!("cost-consistent state lost");
            };
            prop_assert!(max_abs(&(r_prev - r_prev.transpose())) <= 1e-10 * max_abs(r_prev).max(1.0));
        }
    }

    #[test]
    fn kreisselmeier_with_scaled_information_is_uniform(seed in any::<u64>(), n in 1usize..=5, lambda in 0.5f64..1.0) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let pm = random_spd(&mut g, n);
        let p_inv = pm.clone().try_inverse().unwrap();
        let phi = randn(&mut g, 2, n);
        let m = &p_inv * (lambda - 1.0);
        let got = matrix_forgetting_information(&p_inv, &m, &phi);
        let want = &p_inv * lambda + phi.transpose() * &phi;
        prop_assert!(rel_diff(&got, &want) <= 1e-12);
        // Variant I leaves P⁻¹ = αI fixed.
        let alpha = 0.7;
        let eye = DMatrix::identity(n, n);
        let term = kreisselmeier_term(&(&eye / alpha), &(&eye * alpha), lambda, alpha, 0.0, 3, KreisselmeierVariant::I).unwrap();
        prop_assert!(max_abs(&term) <= 1e-12);
    }

    #[test]
    fn window_sums_add_exactly(seed in any::<u64>(), n in 1usize..=4, j in 0usize..20, a in 0usize..15, b in 0usize..15) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        // Small integers keep every partial sum exact.
        let regs: Vec<DMatrix<f64>> =
            (0..60).map(|_| DMatrix::from_fn(1, n, |_, _| g.random_range(-8i32..=8) as f64)).collect();
        let k = j + a;
        let m = k + 1 + b;
        let left = window_gram(&regs, j, a).unwrap().f;
        let right = window_gram(&regs, k + 1, b).unwrap().f;
        let whole = window_gram(&regs, j, m - j).unwrap().f;
        prop_assert_eq!(left + right, whole);
    }

    #[test]
    fn longer_windows_never_lose_excitation(seed in any::<u64>(), n in 1usize..=4, j in 0usize..20, len in 0usize..20) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let regs: Vec<DMatrix<f64>> = (0..60).map(|_| randn(&mut g, 1, n)).collect();
        let short = window_gram(&regs, j, len).unwrap();
        let long = window_gram(&regs, j, len + 1).unwrap();
        let smin = |s: &DVector<f64>| s.min();
        prop_assert!(smin(&long.sigma) >= smin(&short.sigma) - 1e-12 * long.sigma.max().max(1.0));
    }

    #[test]
    fn no_forgetting_information_is_gram_plus_prior(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=3, steps in 1usize..100) {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let r = random_spd(&mut g, n);
        let mut state = init(DVector::zeros(n), &r, ForgettingStrategy::None).unwrap();
        let points = noisy_points(&mut g, n, p, steps);
        let regs: Vec<DMatrix<f64>> = points.iter().map(|d| d.phi.clone()).collect();
        for (k, d) in points.iter().enumerate() {
            state = step_covariance(&state, d).unwrap().0;
            let want = window_gram(&regs, 0, k).unwrap().f + &r;
            let got = state.p().clone().try_inverse().unwrap();
            prop_assert!(rel_diff(&got, &want) <= 1e-10 * rls_core::condition_number(state.p()).unwrap().max(1.0));
        }
    }
}

#[test]
fn theta_oracle_reversed_on_a_long_run() {
    let mut g = ChaCha8Rng::seed_from_u64(5);
    let r = random_spd(&mut g, 3);
    let theta0 = randn_vec(&mut g, 3);
    let points = noisy_points(&mut g, 3, 2, 400);
    let mut state = init(theta0.clone(), &r, ForgettingStrategy::Uniform { lambda: 0.98 }).unwrap();
    for d in &points {
        state = step(&state, d).unwrap().0;
    }
    let batch = batch_solve(&History::from_points(points).unwrap(), 0.98, &r, &theta0).unwrap();
    assert!(rel_diff_vec(&batch, state.theta()) <= 1e-8);
}
