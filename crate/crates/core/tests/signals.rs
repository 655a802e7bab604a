use nalgebra::DVector;
use proptest::prelude::*;
use rls_core::signalgen::RegressorOrder;
use rls_core::{arx_regressor, gaussian_white, scripted_regressors, simulate, GeneratorSpec, LtiSiso};

fn fir() -> LtiSiso {
    LtiSiso::new(vec![1.0, 0.8, 0.5], vec![1.0, 0.0, 0.0, 0.0]).unwrap()
}

fn arx5() -> LtiSiso {
    LtiSiso::new(
        vec![0.68, -0.16, -0.12, -0.18, 0.09],
        vec![1.0, -1.0, 0.41, -0.17, -0.03, 0.01],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn simulation_is_linear(seed_u in any::<u64>(), seed_v in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let sys = arx5();
        let steps = 300;
        let u: Vec<f64> = gaussian_white(seed_u, 1.0).unwrap().take(steps).collect();
        let v: Vec<f64> = gaussian_white(seed_v, 1.0).unwrap().take(steps).collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let yu = simulate(&sys, u, steps);
        let yv = simulate(&sys, v, steps);
        let ym = simulate(&sys, mix, steps);
        for k in 0..steps {
            let want = a * yu[k] + b * yv[k];
            prop_assert!((ym[k] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn arx_pairs_satisfy_the_exact_model(seed in any::<u64>(), outputs_first in any::<bool>()) {
        let sys = arx5();
        let order = if outputs_first { RegressorOrder::OutputsFirst } else { RegressorOrder::InputsFirst };
        let theta = match order {
            RegressorOrder::InputsFirst => sys.arx_parameters(5, 5),
            RegressorOrder::OutputsFirst => {
                let t = sys.arx_parameters(5, 5);
                DVector::from_iterator(10, t.iter().skip(5).chain(t.iter().take(5)).copied())
            }
        };
        let steps = 400;
        let u: Vec<f64> = gaussian_white(seed, 1.0).unwrap().take(steps).collect();
        let y = simulate(&sys, u.clone(), steps);
        for k in 0..steps {
            let phi = arx_regressor(&u, &y, k, 5, 5, order);
            let pred = (&phi * &theta)[0];
            prop_assert!((pred - y[k]).abs() <= 1e-12 * y[k].abs().max(1.0));
        }
    }

    #[test]
    fn scripted_pairs_satisfy_the_exact_model(t0 in -2.0f64..2.0, t1 in -2.0f64..2.0, k0 in 0usize..50) {
        let theta = DVector::from_vec(vec![t0, t1]);
        for d in scripted_regressors(&GeneratorSpec::SubspaceSine { period: 100.0, width: 2 }, &theta, 200).unwrap() {
            prop_assert!(((&d.phi * &theta)[0] - d.y[0]).abs() <= 1e-12);
        }
        let scalar = DVector::from_element(1, t0);
        for d in scripted_regressors(&GeneratorSpec::ZeroAfter { k0, value: 1.0 }, &scalar, 100).unwrap() {
            prop_assert!(((&d.phi * &scalar)[0] - d.y[0]).abs() <= 1e-12);
        }
    }
}

#[test]
fn fir_impulse_response_is_its_numerator() {
    let mut u = vec![0.0; 8];
    u[0] = 1.0;
    assert_eq!(simulate(&fir(), u, 8), vec![0.0, 1.0, 0.8, 0.5, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn white_noise_statistics() {
    let n = 100_000;
    let xs: Vec<f64> = gaussian_white(42, 2.0).unwrap().take(n).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() <= 4.0 * 2.0 / (n as f64).sqrt());
    assert!((var.sqrt() / 2.0 - 1.0).abs() <= 0.02);
    let again: Vec<f64> = gaussian_white(42, 2.0).unwrap().take(n).collect();
    assert_eq!(xs, again);
}
