//! Market, contract and scheme parameters, plus the pointwise functions the
//! backward scheme is built from: the put payoff, the swing intervention gain
//! and the penalized driver.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Black–Scholes market for a put on a single underlying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Risk-free rate, per year.
    pub rate: f64,
    /// Volatility, per square-root year.
    pub sigma: f64,
    /// Initial spot.
    pub spot: f64,
    pub strike: f64,
    /// Maturity in years.
    pub maturity: f64,
}

impl MarketParams {
    pub fn new(rate: f64, sigma: f64, spot: f64, strike: f64, maturity: f64) -> Result<Self> {
        let market = Self {
            rate,
            sigma,
            spot,
            strike,
            maturity,
        };
        market.validate()?;
        Ok(market)
    }

    /// The put used throughout the numerical section: K = s = 100, r = 5%,
    /// sigma = 30%, one year.
    pub fn reference_put() -> Self {
        Self {
            rate: 0.05,
            sigma: 0.3,
            spot: 100.0,
            strike: 100.0,
            maturity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be > 0, got {}", self.maturity)));
        }
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(invalid("spot", format!("must be > 0, got {}", self.spot)));
        }
        // a zero strike is allowed: the put is then worthless
        if !(self.strike >= 0.0 && self.strike.is_finite()) {
            return Err(invalid("strike", format!("must be >= 0, got {}", self.strike)));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", format!("must be >= 0, got {}", self.rate)));
        }
        Ok(())
    }

    /// Put payoff `(K - s)^+`.
    #[inline]
    pub fn payoff(&self, s: f64) -> f64 {
        payoff(s, self.strike)
    }
}

/// Exercise rights and refraction delay of a swing contract.
///
/// `n_max = 1` is the American put; its delay is irrelevant and may be zero.
/// With two or more rights the delay must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingContract {
    pub n_max: usize,
    /// Minimum time between two exercises, in years.
    pub delta: f64,
}

impl SwingContract {
    pub fn new(n_max: usize, delta: f64) -> Result<Self> {
        let contract = Self { n_max, delta };
        contract.validate()?;
        Ok(contract)
    }

    /// Single exercise right, no delay.
    pub fn american() -> Self {
        Self {
            n_max: 1,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(invalid("n_max", "at least one exercise right is required"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be >= 0, got {}", self.delta)));
        }
        if self.n_max >= 2 && self.delta <= 0.0 {
            return Err(invalid(
                "delta",
                "a positive refraction delay is required with two or more rights",
            ));
        }
        Ok(())
    }

    /// Number of grid steps spanned by the delay. Fails unless the delay is
    /// an integer multiple of the time step.
    pub fn delay_steps(&self, grid: &TimeGrid) -> Result<usize> {
        let ratio = self.delta / grid.dt();
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(
                "delta",
                format!(
                    "delay {} is not a multiple of the time step {} (ratio {ratio})",
                    self.delta,
                    grid.dt()
                ),
            ));
        }
        Ok(steps as usize)
    }

    /// Intervention gain for this contract, see [`intervention_gain`].
    #[inline]
    pub fn gain(&self, market: &MarketParams, s: f64, q: u32, theta: f64) -> f64 {
        intervention_gain(s, q, theta, market.strike, self)
    }
}

/// Discretization and penalization parameters of the backward scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Intensity of the auxiliary Poisson process, per year.
    pub lambda: f64,
    /// Penalty coefficient `p`.
    pub penalty: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl SchemeParams {
    pub fn new(lambda: f64, penalty: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<Self> {
        let scheme = Self {
            lambda,
            penalty,
            n_steps,
            n_paths,
            seed,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be > 0, got {}", self.lambda)));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(invalid("penalty", format!("must be >= 0, got {}", self.penalty)));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be >= 1"));
        }
        Ok(())
    }
}

/// Uniform grid `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    maturity: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(maturity: f64, n_steps: usize) -> Result<Self> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be > 0, got {maturity}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        Ok(Self { maturity, n_steps })
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.maturity / self.n_steps as f64
    }

    /// `t_n`, computed as `T * n / N` so that `t_N == T` exactly.
    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.maturity
        } else {
            self.maturity * n as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.time(n)).collect()
    }
}

/// Put reward `(K - s)^+`.
#[inline]
pub fn payoff(s: f64, strike: f64) -> f64 {
    (strike - s).max(0.0)
}

/// Swing intervention gain: the payoff if the delay since the last exercise
/// has elapsed (`theta >= delta`) and a right remains (`q <= n_max - 1`),
/// zero otherwise.
#[inline]
pub fn intervention_gain(s: f64, q: u32, theta: f64, strike: f64, contract: &SwingContract) -> f64 {
    if theta >= contract.delta && (q as usize) < contract.n_max {
        payoff(s, strike)
    } else {
        0.0
    }
}

/// Penalized driver `f + (p (v + kappa)^+ - v) lambda`, per unit time.
#[inline]
pub fn penalized_driver(f_value: f64, kappa_value: f64, v: f64, penalty: f64, lambda: f64) -> f64 {
    f_value + (penalty * (v + kappa_value).max(0.0) - v) * lambda
}
