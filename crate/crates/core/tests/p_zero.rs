//! With a zero penalty the recursion is linear, so its time-zero value is
//! the discounted terminal gain averaged with the weight `Π (1 - dÑ_n)`.

mod common;

use common::{compare_zero_penalty, random_zero_penalty_cases, zero_penalty_run};
use swing_bsde::bsde::{JumpEstimator, SolverOptions};

#[test]
fn zero_penalty_matches_weighted_oracle() {
    for estimator in [JumpEstimator::Conditioned, JumpEstimator::Compensated] {
        let options = SolverOptions {
            jump_estimator: estimator,
            ..SolverOptions::default()
        };
        for case in random_zero_penalty_cases(11, 3) {
            let (_, weighted) = compare_zero_penalty(&case, 40_000, &[1, 2, 3], &options);
            assert!(
                weighted.within(3.0),
                "{estimator:?} {case:?}: {} vs {} (se {})",
                weighted.price,
                weighted.oracle,
                weighted.combined_se
            );
        }
    }
}

#[test]
fn weighting_costs_variance() {
    let case = random_zero_penalty_cases(5, 1)[0];
    let run = zero_penalty_run(&case, 50_000, 9, &SolverOptions::default());
    assert!(run.weighted > 0.0 && run.average > 0.0);
    assert!(run.weighted_se > run.average_se);
}
