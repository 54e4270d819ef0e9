mod common;

use common::{bundle, max_residual_correlation, qtheta_mismatches, stratum_zeroing_violations};
use proptest::prelude::*;
use swing_bsde::bsde::{simulate_and_price, JumpEstimator, SolverOptions};
use swing_bsde::regression::{Degree, RegressionConfig};
use swing_bsde::{MarketParams, SchemeParams, SwingContract};

#[test]
fn exhausted_strata_are_exactly_zero() {
    let market = MarketParams::reference_put();
    for (n_max, delta, lambda) in [(1, 0.0, 5.0), (2, 0.1, 5.0), (3, 0.05, 8.0)] {
        let contract = if n_max == 1 {
            SwingContract::american()
        } else {
            SwingContract::new(n_max, delta).unwrap()
        };
        for estimator in [JumpEstimator::Conditioned, JumpEstimator::Compensated] {
            let scheme = SchemeParams::new(lambda, 10.0, 40, 20_000, 3).unwrap();
            let options = SolverOptions {
                jump_estimator: estimator,
                ..SolverOptions::default()
            };
            let (bad, checked) = stratum_zeroing_violations(&market, &contract, &scheme, &options);
            assert!(checked > 0, "no exhausted paths for n_max = {n_max}");
            assert_eq!(bad, 0, "n_max = {n_max}, {estimator:?}");
        }
    }
}

#[test]
fn same_seed_same_bits() {
    let market = MarketParams::reference_put();
    let contract = SwingContract::new(2, 0.1).unwrap();
    let scheme = SchemeParams::new(4.0, 5.0, 40, 10_000, 77).unwrap();
    let a = simulate_and_price(&market, &contract, &scheme, &SolverOptions::default()).unwrap();
    let b = simulate_and_price(&market, &contract, &scheme, &SolverOptions::default()).unwrap();
    assert_eq!(a.price.to_bits(), b.price.to_bits());
    assert_eq!(a.v0.unwrap().to_bits(), b.v0.unwrap().to_bits());
    assert_eq!(a.steps, b.steps);
    assert_eq!(bundle(&market, 40, 5000, Some(4.0), 9), bundle(&market, 40, 5000, Some(4.0), 9));

    let other = SchemeParams { seed: 78, ..scheme };
    let c = simulate_and_price(&market, &contract, &other, &SolverOptions::default()).unwrap();
    assert_ne!(a.price.to_bits(), c.price.to_bits());
}

#[test]
fn grid_rights_and_clock_match_jump_times() {
    let market = MarketParams::reference_put();
    for (n_steps, lambda) in [(20, 3.0), (160, 5.0), (7, 40.0)] {
        let b = bundle(&market, n_steps, 10_000, Some(lambda), n_steps as u64);
        assert!(b.jumps().total() > 0);
        assert_eq!(qtheta_mismatches(&b), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residuals_are_orthogonal_to_the_basis(
        seed in any::<u64>(),
        n in 500usize..5000,
        two_features in any::<bool>(),
        noise in 0.0f64..2.0,
    ) {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..150.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&t)
            .map(|(x, t)| (100.0 - x).max(0.0) * (1.0 + t) + noise * rng.random_range(-1.0..1.0))
            .collect();
        let config = RegressionConfig {
            c_basis: 1e-2,
            min_per_cell: 50,
            degree: Degree::Affine,
            ridge: 1e-10,
        };
        let features: Vec<&[f64]> = if two_features { vec![&x, &t] } else { vec![&x] };
        let worst = max_residual_correlation(&features, &y, &config);
        prop_assert!(worst <= 1e-8, "{}", worst);
    }
}
