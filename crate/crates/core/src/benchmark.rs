//! Reference prices: a Cox–Ross–Rubinstein tree for the American put and a
//! least-squares Monte Carlo swing pricer that iterates over the number of
//! rights.
//!
//! The iterative pricer values `v^j`, the option with `j` rights, by
//!
//! ```text
//! v^j(t_N) = φ(S_N)
//! v^j(t_n) = max{ φ(S_n) + e^{-rδ} E[v^{j-1}(t_n + δ) | S_n] ; e^{-r dt} E[v^j(t_{n+1}) | S_n] }
//! ```
//!
//! where the first branch drops the `v^{j-1}` term once `t_n + δ > T`, and
//! `v^0 = 0`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bsde::{PriceReport, StepDiagnostics, SOLVER_REGRESSION};
use crate::error::{invalid, Error, Result};
use crate::model::{MarketParams, SwingContract, TimeGrid};
use crate::regression::{Design, RegressionConfig, RegressionFit};
use crate::simulation::{PathBundle, SimulationConfig};
use crate::stats::mean_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialConfig {
    pub steps: usize,
}

impl BinomialConfig {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "the tree needs at least one step"));
        }
        Ok(Self { steps })
    }
}

/// American put on a CRR tree with `u = e^{σ sqrt(dt)}`, `d = 1/u`.
///
/// When the volatility is too small for the risk-neutral probability to lie
/// in `[0, 1]`, it is clamped, which degenerates to the deterministic forward.
pub fn binomial_american_put(market: &MarketParams, steps: usize) -> Result<f64> {
    market.validate()?;
    let config = BinomialConfig::new(steps)?;
    let n = config.steps;
    let dt = market.maturity / n as f64;
    let u = (market.sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = (market.rate * dt).exp();
    let p_up = if u > d { ((growth - d) / (u - d)).clamp(0.0, 1.0) } else { 1.0 };
    let discount = 1.0 / growth;

    // node i at level k has i up moves
    let mut values: Vec<f64> = (0..=n)
        .map(|i| market.payoff(market.spot * u.powi(i as i32) * d.powi((n - i) as i32)))
        .collect();
    for k in (0..n).rev() {
        for i in 0..=k {
            let hold = discount * (p_up * values[i + 1] + (1.0 - p_up) * values[i]);
            let spot = market.spot * u.powi(i as i32) * d.powi((k - i) as i32);
            values[i] = hold.max(market.payoff(spot));
        }
    }
    Ok(values[0])
}

/// What the iterative pricer stores as the per-path value of each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueConvention {
    /// Discounted cash flows realized along the path under the estimated
    /// exercise rule (Longstaff–Schwartz).
    Realized,
    /// The maximum of the two regression estimates (Tsitsiklis–Van Roy).
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeOptions {
    pub regression: RegressionConfig,
    pub convention: ValueConvention,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            regression: SOLVER_REGRESSION,
            convention: ValueConvention::Realized,
        }
    }
}

/// Per-level values on the last `len` dates, indexed by date modulo `len`.
struct Ring {
    len: usize,
    slices: Vec<Vec<f64>>,
}

impl Ring {
    fn new(len: usize, n_paths: usize) -> Self {
        Self {
            len,
            slices: vec![vec![0.0; n_paths]; len],
        }
    }

    fn at(&self, n: usize) -> &[f64] {
        &self.slices[n % self.len]
    }

    fn at_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.slices[n % self.len]
    }
}

/// Swing prices with `1..=n_max` rights on pure GBM paths.
///
/// All levels are swept backward together; each keeps only the dates
/// `t_{n+1} ..= t_{n+D}` it still needs (`D` = delay in steps).
pub fn iterative_swing_price(
    market: &MarketParams,
    contract: &SwingContract,
    paths: &PathBundle,
    options: &IterativeOptions,
) -> Result<PriceReport> {
    let start = Instant::now();
    market.validate()?;
    contract.validate()?;
    let grid = *paths.grid();
    if (grid.maturity() - market.maturity).abs() > 1e-12 * market.maturity {
        return Err(invalid("paths", "simulated horizon differs from the option maturity"));
    }
    let n_steps = grid.n_steps();
    let n_paths = paths.n_paths();
    let n_max = contract.n_max;
    let delay = if n_max >= 2 { contract.delay_steps(&grid)? } else { 0 };
    let dt = grid.dt();
    let hold_discount = (-market.rate * dt).exp();
    let delay_discount = (-market.rate * contract.delta).exp();
    let cfg = &options.regression;

    // level j lives in rings[j - 1]
    let ring_len = delay.min(n_steps) + 1;
    let mut rings: Vec<Ring> = (0..n_max).map(|_| Ring::new(ring_len, n_paths)).collect();
    let payoff_at = |n: usize| -> Vec<f64> { paths.spots().row(n).iter().map(|&s| market.payoff(s)).collect() };
    let terminal = payoff_at(n_steps);
    for ring in &mut rings {
        ring.at_mut(n_steps).copy_from_slice(&terminal);
    }

    let mut steps = Vec::with_capacity(n_steps.saturating_sub(1));
    for n in (1..n_steps).rev() {
        let spots = paths.spots().row(n);
        let features = [spots];
        let design = Design::new(&features, cfg).map_err(|e| level_error(1, n, e))?;
        let exercise_payoff = payoff_at(n);
        let next_right = n + delay <= n_steps;

        let mut hold_fits: Vec<RegressionFit> = Vec::with_capacity(n_max);
        let mut after_fits: Vec<Option<RegressionFit>> = Vec::with_capacity(n_max);
        for j in 1..=n_max {
            let hold = design
                .fit(rings[j - 1].at(n + 1), cfg)
                .map_err(|e| level_error(j, n, e))?;
            hold_fits.push(hold);
            let after = if j >= 2 && next_right {
                Some(
                    design
                        .fit(rings[j - 2].at(n + delay), cfg)
                        .map_err(|e| level_error(j, n, e))?,
                )
            } else {
                None
            };
            after_fits.push(after);
        }

        // compute every level before writing: level j reads level j-1 at n + D
        let mut new_values: Vec<Vec<f64>> = Vec::with_capacity(n_max);
        for j in 1..=n_max {
            let hold_hat = design.fitted(&hold_fits[j - 1]);
            let after_hat = after_fits[j - 1].as_ref().map(|f| design.fitted(f));
            let mut values = Vec::with_capacity(n_paths);
            for m in 0..n_paths {
                let continuation = hold_discount * hold_hat[m];
                let remaining = after_hat.as_ref().map_or(0.0, |a| delay_discount * a[m]);
                let exercise = exercise_payoff[m] + remaining;
                let value = match options.convention {
                    ValueConvention::Estimated => exercise.max(continuation),
                    ValueConvention::Realized => {
                        if exercise_payoff[m] > 0.0 && exercise >= continuation {
                            let realized_rest = if j >= 2 && next_right {
                                delay_discount * rings[j - 2].at(n + delay)[m]
                            } else {
                                0.0
                            };
                            exercise_payoff[m] + realized_rest
                        } else {
                            hold_discount * rings[j - 1].at(n + 1)[m]
                        }
                    }
                };
                if !value.is_finite() {
                    return Err(level_error(
                        j,
                        n,
                        Error::NonFinite {
                            what: "iterative value",
                            step: n,
                            path: m,
                        },
                    ));
                }
                values.push(value);
            }
            new_values.push(values);
        }
        for (ring, values) in rings.iter_mut().zip(new_values) {
            ring.at_mut(n).copy_from_slice(&values);
        }
        steps.push(StepDiagnostics {
            step: n,
            stratum_sizes: vec![n_paths],
            basis_counts: vec![design.basis().n_cells()],
        });
    }
    steps.reverse();

    // t_0: one starting point, so expectations are sample means
    let exercise_now = market.payoff(market.spot);
    let next_right = delay <= n_steps;
    let mut level_prices = Vec::with_capacity(n_max);
    let mut stderr = 0.0;
    for j in 1..=n_max {
        let hold: Vec<f64> = rings[j - 1].at(1).iter().map(|v| hold_discount * v).collect();
        let (hold_mean, hold_se) = mean_stderr(&hold);
        let (rest_mean, rest_se) = if j >= 2 && next_right {
            let rest: Vec<f64> = rings[j - 2].at(delay).iter().map(|v| delay_discount * v).collect();
            mean_stderr(&rest)
        } else {
            (0.0, 0.0)
        };
        let exercise = exercise_now + rest_mean;
        let (price, se) = if exercise > hold_mean { (exercise, rest_se) } else { (hold_mean, hold_se) };
        level_prices.push(price);
        stderr = se;
    }

    Ok(PriceReport {
        method: "iterative".into(),
        price: level_prices[n_max - 1],
        v0: None,
        stderr: Some(stderr),
        level_prices: Some(level_prices),
        n_paths,
        n_steps,
        lambda: None,
        penalty: None,
        n_max,
        delta: contract.delta,
        seed: paths.seed(),
        multi_jump_frac: 0.0,
        steps,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Simulate GBM paths and run [`iterative_swing_price`].
pub fn simulate_and_iterate(
    market: &MarketParams,
    contract: &SwingContract,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    options: &IterativeOptions,
) -> Result<PriceReport> {
    let grid = TimeGrid::new(market.maturity, n_steps)?;
    let config = SimulationConfig {
        n_paths,
        seed,
        intensity: None,
        store_brownian: false,
    };
    let paths = PathBundle::simulate(market, &grid, &config)?;
    iterative_swing_price(market, contract, &paths, options)
}

fn level_error(level: usize, step: usize, source: Error) -> Error {
    Error::Level {
        level,
        step,
        source: Box::new(source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market() -> MarketParams {
        MarketParams::reference_put()
    }

    #[test]
    fn binomial_reference_value() {
        let p = binomial_american_put(&market(), 2000).unwrap();
        assert!((9.86..=9.90).contains(&p), "p={p}");
    }

    #[test]
    fn binomial_degenerate_cases() {
        let mut m = market();
        m.strike = 0.0;
        assert_eq!(binomial_american_put(&m, 100).unwrap(), 0.0);
        let mut m = market();
        m.sigma = 1e-8;
        assert!(binomial_american_put(&m, 500).unwrap() < 1e-6);
        assert!(binomial_american_put(&market(), 0).is_err());
    }

    #[test]
    fn binomial_refinement_differences_shrink() {
        let prices: Vec<f64> = [250, 500, 1000, 2000, 4000]
            .iter()
            .map(|&s| binomial_american_put(&market(), s).unwrap())
            .collect();
        let diffs: Vec<f64> = prices.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
    }

    #[test]
    fn binomial_dominates_intrinsic_and_european() {
        let m = market();
        let p = binomial_american_put(&m, 500).unwrap();
        // Black–Scholes put for the reference market
        let european = 9.3542;
        assert!(p > european && p > m.payoff(m.spot));
    }

    fn run(contract: &SwingContract, n_steps: usize, n_paths: usize, convention: ValueConvention) -> PriceReport {
        let options = IterativeOptions {
            convention,
            ..IterativeOptions::default()
        };
        simulate_and_iterate(&market(), contract, n_steps, n_paths, 11, &options).unwrap()
    }

    #[test]
    fn levels_increase_and_are_bounded_by_copies_of_one_right() {
        for convention in [ValueConvention::Realized, ValueConvention::Estimated] {
            let r = run(&SwingContract::new(3, 0.1).unwrap(), 50, 20_000, convention);
            let v = r.level_prices.unwrap();
            assert_eq!(v.len(), 3);
            assert!(v[0] > 0.0);
            for j in 1..3 {
                assert!(v[j] >= v[j - 1], "{v:?}");
                assert!(v[j] <= (j + 1) as f64 * v[0] + 3.0 * r.stderr.unwrap(), "{v:?}");
            }
        }
    }

    #[test]
    fn delay_beyond_maturity_leaves_one_right() {
        let r = run(&SwingContract::new(3, 2.0).unwrap(), 20, 5_000, ValueConvention::Realized);
        let v = r.level_prices.unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[1], v[2]);
    }

    #[test]
    fn worthless_payoff_prices_zero() {
        let mut m = market();
        m.strike = 0.0;
        let r = simulate_and_iterate(&m, &SwingContract::new(2, 0.1).unwrap(), 20, 1_000, 3, &IterativeOptions::default())
            .unwrap();
        assert_eq!(r.level_prices.unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_misaligned_delay() {
        let err = simulate_and_iterate(&market(), &SwingContract::new(2, 0.013).unwrap(), 20, 100, 3, &IterativeOptions::default());
        assert!(err.is_err());
    }
}
