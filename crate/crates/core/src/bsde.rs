//! Backward schemes for the penalized BSDE with jumps.
//!
//! The swing solver runs, on simulated `(S, Q, Θ)` paths,
//!
//! ```text
//! Y_N = κ(S_N, Q_N, Θ_N)
//! V_n = E[Y_{n+1} dÑ_n | F_n] / (λ dt)
//! Y_n = (E[Y_{n+1} | F_n] + [p (V_n + κ(S_n, Q_n, Θ_n))^+ - V_n] λ dt) / (1 + r dt)
//! ```
//!
//! with the paths split by the rights counter `Q_n`: paths that have used
//! all rights carry `Y = V = 0`, and each remaining stratum gets its own
//! regressions on `(S, Θ)` (on `S` alone for a single right).
//!
//! The generic solver handles a scalar state `X` with running profit `f`,
//! terminal gain `g` and intervention gain `κ`, and also returns the
//! diffusion component `Z_n = E[Y_{n+1} dW_n | F_n] / dt`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{MarketParams, SchemeParams, SwingContract, TimeGrid};
use crate::regression::{Degree, Design, RegressionConfig, RegressionFit, MAX_FEATURES};
use crate::simulation::{PathBundle, SimulationConfig, StepArray};

/// Per-path `(Y, V)` (and `Z` for the generic solver) at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Option<Vec<f64>>,
    /// Fitted `Y` as a function of the state (swing solver only).
    pub value: Option<ValueFunction>,
}

impl BackwardState {
    fn zeros(n_paths: usize) -> Self {
        Self {
            y: vec![0.0; n_paths],
            v: vec![0.0; n_paths],
            z: None,
            value: None,
        }
    }
}

/// Paths grouped by rights used: `members[q]` holds the paths with `Q = q`
/// for `q < n_max`, and `members[n_max]` those with `Q >= n_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strata {
    pub members: Vec<Vec<usize>>,
}

impl Strata {
    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Paths whose rights are exhausted.
    pub fn exhausted(&self) -> &[usize] {
        self.members.last().map_or(&[], Vec::as_slice)
    }
}

pub fn stratify(bundle: &PathBundle, n: usize, n_max: usize) -> Strata {
    let mut members = vec![Vec::new(); n_max + 1];
    for (m, &q) in bundle.rights().row(n).iter().enumerate() {
        members[(q as usize).min(n_max)].push(m);
    }
    Strata { members }
}

/// Options of the swing solver beyond the regression itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub regression: RegressionConfig,
    pub basis_scale: BasisScale,
    pub jump_estimator: JumpEstimator,
    /// When set, estimated jump components are floored at `-clip * K`.
    pub v_clip: Option<f64>,
}

/// What the per-stratum cell count is proportional to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisScale {
    /// Paths currently in the stratum.
    Stratum,
    /// All simulated paths; strata still cap cells by `min_per_cell`.
    Paths,
}

/// How the conditional expectations of a step are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpEstimator {
    /// Regress `Y_{n+1}` and `Y_{n+1} dÑ` on the stratum's paths.
    Compensated,
    /// Regress, for each tick count `k`, the fitted next value after `k`
    /// ticks, and weight by the Poisson probabilities.
    Conditioned,
}

/// Regression settings used by the solver and benchmarks unless overridden.
pub const SOLVER_REGRESSION: RegressionConfig = RegressionConfig {
    c_basis: 2.5e-4,
    min_per_cell: 30,
    degree: Degree::Affine,
    ridge: 1e-10,
};

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            regression: SOLVER_REGRESSION,
            basis_scale: BasisScale::Paths,
            jump_estimator: JumpEstimator::Conditioned,
            v_clip: None,
        }
    }
}

/// Stratum sizes and regression cell counts of one backward step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub stratum_sizes: Vec<usize>,
    pub basis_counts: Vec<usize>,
}

/// Result of one pricing run; shared by the BSDE solver and the benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub method: String,
    pub price: f64,
    /// Jump component at `t_0` (BSDE only).
    pub v0: Option<f64>,
    /// Monte Carlo standard error when the method provides one.
    pub stderr: Option<f64>,
    /// Prices with `1..=n_max` rights (iterative benchmark only).
    pub level_prices: Option<Vec<f64>>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub lambda: Option<f64>,
    pub penalty: Option<f64>,
    pub n_max: usize,
    pub delta: f64,
    pub seed: u64,
    pub multi_jump_frac: f64,
    pub steps: Vec<StepDiagnostics>,
    pub wall_ms: f64,
}

impl PriceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `Y_N = κ(S_N, Q_N, Θ_N)` on every path.
pub fn terminal_condition(bundle: &PathBundle, market: &MarketParams, contract: &SwingContract) -> BackwardState {
    let n = bundle.n_steps();
    let mut state = BackwardState::zeros(bundle.n_paths());
    for (m, y) in state.y.iter_mut().enumerate() {
        *y = contract.gain(market, bundle.spot(m, n), bundle.q(m, n), bundle.theta(m, n));
    }
    state.value = Some(ValueFunction::Terminal);
    state
}

fn check_scheme(bundle: &PathBundle, market: &MarketParams, contract: &SwingContract, scheme: &SchemeParams) -> Result<()> {
    market.validate()?;
    contract.validate()?;
    scheme.validate()?;
    if bundle.intensity() != Some(scheme.lambda) {
        return Err(invalid("lambda", "bundle was simulated with a different intensity"));
    }
    if bundle.n_steps() != scheme.n_steps {
        return Err(invalid("n_steps", "bundle grid differs from the scheme"));
    }
    contract.delay_steps(bundle.grid())?;
    Ok(())
}

/// Fitted conditional expectations of one stratum at one date.
#[derive(Debug, Clone, PartialEq)]
pub enum StratumFit {
    /// `fits[k]` estimates `E[Y^{q+k}_{n+1}(S_{n+1}, Θ') | S_n, Θ_n]`, the
    /// value one step ahead had the Poisson clock ticked `k` times.
    Conditioned(Vec<RegressionFit>),
    /// Direct fits of `E[Y_{n+1}]` and `E[Y_{n+1} dÑ]`.
    Direct { y: RegressionFit, ydn: RegressionFit },
}

/// The scheme's `Y` at one date as a function of `(S, Q, Θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueFunction {
    /// `Y_N = κ`.
    Terminal,
    /// Per-stratum regressions; `None` marks a stratum that had no paths.
    Fitted(Vec<Option<StratumFit>>),
}

/// Constants of one backward step.
struct StepContext<'a> {
    market: &'a MarketParams,
    contract: &'a SwingContract,
    scheme: &'a SchemeParams,
    lambda_dt: f64,
    discount: f64,
    v_floor: f64,
}

impl<'a> StepContext<'a> {
    fn new(
        dt: f64,
        market: &'a MarketParams,
        contract: &'a SwingContract,
        scheme: &'a SchemeParams,
        options: &SolverOptions,
    ) -> Self {
        Self {
            market,
            contract,
            scheme,
            lambda_dt: scheme.lambda * dt,
            discount: 1.0 / (1.0 + market.rate * dt),
            v_floor: options.v_clip.map_or(f64::NEG_INFINITY, |c| -c * market.strike),
        }
    }

    /// Regression query for a state; Θ only matters through the delay test,
    /// so `Θ ∧ δ` carries the same information with an atom at `δ`.
    fn query(&self, s: f64, theta: f64) -> [f64; MAX_FEATURES] {
        [s, theta.min(self.contract.delta)]
    }

    fn n_features(&self) -> usize {
        if self.contract.n_max >= 2 {
            2
        } else {
            1
        }
    }

    /// Probability of `k` ticks in one step.
    fn tick_probability(&self, k: usize) -> f64 {
        let x = self.lambda_dt;
        (-x).exp() * x.powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>()
    }

    /// `(E[Y_{n+1}], E[Y_{n+1} dÑ])` at a state of stratum `q`.
    fn expectations(&self, fit: &StratumFit, q: usize, s: f64, theta: f64) -> (f64, f64) {
        let query = self.query(s, theta);
        let query = &query[..self.n_features()];
        match fit {
            StratumFit::Direct { y, ydn } => (y.predict(query), ydn.predict(query)),
            StratumFit::Conditioned(fits) => {
                debug_assert_eq!(fits.len(), self.contract.n_max - q);
                fits.iter().enumerate().fold((0.0, 0.0), |(ey, eydn), (k, f)| {
                    let e = self.tick_probability(k) * f.predict(query);
                    (ey + e, eydn + (k as f64 - self.lambda_dt) * e)
                })
            }
        }
    }

    /// `(Y_n, V_n)` from the two conditional expectations.
    fn update(&self, cond_y: f64, cond_ydn: f64, s: f64, q: usize, theta: f64) -> (f64, f64) {
        let v = (cond_ydn / self.lambda_dt).max(self.v_floor);
        let kappa = self.contract.gain(self.market, s, q as u32, theta);
        let y = self.discount * (cond_y + (self.scheme.penalty * (v + kappa).max(0.0) - v) * self.lambda_dt);
        (y, v)
    }

    /// `Y` of stratum `q` at `(s, theta)` under `value`, or `None` when the
    /// stratum was not fitted.
    fn evaluate(&self, value: &ValueFunction, q: usize, s: f64, theta: f64) -> Option<f64> {
        if q >= self.contract.n_max {
            return Some(0.0);
        }
        match value {
            ValueFunction::Terminal => Some(self.contract.gain(self.market, s, q as u32, theta)),
            ValueFunction::Fitted(strata) => strata[q].as_ref().map(|fit| {
                let (ey, eydn) = self.expectations(fit, q, s, theta);
                self.update(ey, eydn, s, q, theta).0
            }),
        }
    }
}

/// Targets of the conditioned estimator for stratum `q` at step `n`: for
/// every member and every tick count `k < n_max - q`, the next value had the
/// clock ticked `k` times over the step. The increment is independent of the
/// Brownian path, so these regress to `E[Y_{n+1} | F_n, dN = k]`. After a
/// tick, Θ at `t_{n+1}` is replaced by its mean `dt / 2` under a single
/// uniform arrival.
fn conditioned_targets(
    ctx: &StepContext,
    next: &ValueFunction,
    bundle: &PathBundle,
    members: &[usize],
    n: usize,
    q: usize,
) -> Option<Vec<Vec<f64>>> {
    let grid = bundle.grid();
    let (t_now, t_next) = (grid.time(n), grid.time(n + 1));
    let half_step = 0.5 * (t_next - t_now);
    (0..ctx.contract.n_max - q)
        .map(|k| {
            members
                .iter()
                .map(|&m| {
                    let s_next = bundle.spot(m, n + 1);
                    let theta_next = if k > 0 {
                        half_step
                    } else if q == 0 {
                        t_next
                    } else {
                        t_next - (t_now - bundle.theta(m, n))
                    };
                    ctx.evaluate(next, q + k, s_next, theta_next)
                })
                .collect()
        })
        .collect()
}

/// One step of the stratified swing scheme, from `t_{n+1}` to `t_n`.
#[allow(clippy::too_many_arguments)]
pub fn swing_backward_step(
    next: &BackwardState,
    bundle: &PathBundle,
    strata: &Strata,
    n: usize,
    market: &MarketParams,
    contract: &SwingContract,
    scheme: &SchemeParams,
    options: &SolverOptions,
) -> Result<(BackwardState, StepDiagnostics)> {
    let ctx = StepContext::new(bundle.grid().dt(), market, contract, scheme, options);
    let cfg = &options.regression;
    let mut state = BackwardState::zeros(bundle.n_paths());
    let mut basis_counts = vec![0; contract.n_max + 1];
    let mut fitted = vec![None; contract.n_max];

    for (q, members) in strata.members.iter().enumerate().take(contract.n_max) {
        if members.is_empty() {
            continue;
        }
        let wrap = |source: Error| Error::Step {
            step: n,
            stratum: q,
            source: Box::new(source),
        };
        let spots: Vec<f64> = members.iter().map(|&m| bundle.spot(m, n)).collect();
        let thetas: Vec<f64> = members.iter().map(|&m| bundle.theta(m, n)).collect();
        let capped: Vec<f64> = thetas.iter().map(|&t| t.min(contract.delta)).collect();
        let features: Vec<&[f64]> = if ctx.n_features() == 2 { vec![&spots, &capped] } else { vec![&spots] };
        let reference = match options.basis_scale {
            BasisScale::Stratum => members.len(),
            BasisScale::Paths => bundle.n_paths(),
        };
        let design = Design::scaled(&features, reference, cfg).map_err(wrap)?;
        basis_counts[q] = design.basis().n_cells();

        let targets = match (&next.value, options.jump_estimator) {
            (Some(value), JumpEstimator::Conditioned) => conditioned_targets(&ctx, value, bundle, members, n, q),
            _ => None,
        };
        let fit = match targets {
            Some(targets) => StratumFit::Conditioned(
                targets
                    .iter()
                    .map(|t| design.fit(t, cfg))
                    .collect::<Result<_>>()
                    .map_err(wrap)?,
            ),
            None => {
                let y: Vec<f64> = members.iter().map(|&m| next.y[m]).collect();
                let ydn: Vec<f64> = members
                    .iter()
                    .map(|&m| next.y[m] * bundle.dn_compensated(m, n))
                    .collect();
                StratumFit::Direct {
                    y: design.fit(&y, cfg).map_err(wrap)?,
                    ydn: design.fit(&ydn, cfg).map_err(wrap)?,
                }
            }
        };

        for (i, &m) in members.iter().enumerate() {
            let (ey, eydn) = ctx.expectations(&fit, q, spots[i], thetas[i]);
            let (y, v) = ctx.update(ey, eydn, spots[i], q, thetas[i]);
            if !(y.is_finite() && v.is_finite()) {
                return Err(wrap(Error::NonFinite {
                    what: "backward state",
                    step: n,
                    path: m,
                }));
            }
            state.y[m] = y;
            state.v[m] = v;
        }
        fitted[q] = Some(fit);
    }
    state.value = Some(ValueFunction::Fitted(fitted));

    Ok((
        state,
        StepDiagnostics {
            step: n,
            stratum_sizes: strata.sizes(),
            basis_counts,
        },
    ))
}

/// Time-zero estimate from the state at `t_1`: all paths share `t_0`, so
/// the conditional expectations are plain sample means. When the state
/// carries a value function, the means are taken over the conditioned
/// targets (as in [`swing_backward_step`]); otherwise over `Y_1` and
/// `Y_1 dÑ_0`. Returns `(Y_0, V_0)`.
pub fn time_zero_estimate(
    next: &BackwardState,
    bundle: &PathBundle,
    market: &MarketParams,
    contract: &SwingContract,
    scheme: &SchemeParams,
) -> (f64, f64) {
    let ctx = StepContext::new(bundle.grid().dt(), market, contract, scheme, &SolverOptions::default());
    let m_paths = bundle.n_paths() as f64;
    let all: Vec<usize> = (0..bundle.n_paths()).collect();
    let conditioned = next
        .value
        .as_ref()
        .and_then(|value| conditioned_targets(&ctx, value, bundle, &all, 0, 0));
    let (mean_y, mean_ydn) = match conditioned {
        Some(targets) => targets.iter().enumerate().fold((0.0, 0.0), |(ey, eydn), (k, t)| {
            let e = ctx.tick_probability(k) * t.iter().sum::<f64>() / m_paths;
            (ey + e, eydn + (k as f64 - ctx.lambda_dt) * e)
        }),
        None => (
            next.y.iter().sum::<f64>() / m_paths,
            next.y
                .iter()
                .enumerate()
                .map(|(m, y)| y * bundle.dn_compensated(m, 0))
                .sum::<f64>()
                / m_paths,
        ),
    };
    // Θ_0 = 0, so the gain only survives for a contract without delay
    let v0 = mean_ydn / ctx.lambda_dt;
    let kappa = contract.gain(market, market.spot, 0, 0.0);
    let y0 = ctx.discount * (mean_y + (scheme.penalty * (v0 + kappa).max(0.0) - v0) * ctx.lambda_dt);
    (y0, v0)
}

/// Full backward recursion on a simulated bundle.
pub fn price_swing(
    bundle: &PathBundle,
    market: &MarketParams,
    contract: &SwingContract,
    scheme: &SchemeParams,
    options: &SolverOptions,
) -> Result<PriceReport> {
    price_swing_observed(bundle, market, contract, scheme, options, |_, _, _| {})
}

/// [`price_swing`] calling `observer(n, state, strata)` after every step
/// `n = N-1, ..., 1` and once with the terminal state (`n = N`).
pub fn price_swing_observed<F>(
    bundle: &PathBundle,
    market: &MarketParams,
    contract: &SwingContract,
    scheme: &SchemeParams,
    options: &SolverOptions,
    mut observer: F,
) -> Result<PriceReport>
where
    F: FnMut(usize, &BackwardState, &Strata),
{
    let start = Instant::now();
    check_scheme(bundle, market, contract, scheme)?;
    let n_steps = bundle.n_steps();

    let mut state = terminal_condition(bundle, market, contract);
    observer(n_steps, &state, &stratify(bundle, n_steps, contract.n_max));
    let mut steps = Vec::with_capacity(n_steps);
    for n in (1..n_steps).rev() {
        let strata = stratify(bundle, n, contract.n_max);
        let (next, diag) = swing_backward_step(&state, bundle, &strata, n, market, contract, scheme, options)?;
        observer(n, &next, &strata);
        state = next;
        steps.push(diag);
    }
    let (price, v0) = time_zero_estimate(&state, bundle, market, contract, scheme);
    steps.reverse();

    Ok(PriceReport {
        method: "bsde".into(),
        price,
        v0: Some(v0),
        stderr: None,
        level_prices: None,
        n_paths: bundle.n_paths(),
        n_steps,
        lambda: Some(scheme.lambda),
        penalty: Some(scheme.penalty),
        n_max: contract.n_max,
        delta: contract.delta,
        seed: bundle.seed(),
        multi_jump_frac: bundle.multi_jump_fraction(),
        steps,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Simulate the paths the scheme asks for, then run [`price_swing`].
pub fn simulate_and_price(
    market: &MarketParams,
    contract: &SwingContract,
    scheme: &SchemeParams,
    options: &SolverOptions,
) -> Result<PriceReport> {
    scheme.validate()?;
    let grid = TimeGrid::new(market.maturity, scheme.n_steps)?;
    contract.delay_steps(&grid)?;
    let start = Instant::now();
    let bundle = PathBundle::simulate(
        market,
        &grid,
        &SimulationConfig {
            n_paths: scheme.n_paths,
            seed: scheme.seed,
            intensity: Some(scheme.lambda),
            store_brownian: false,
        },
    )?;
    let mut report = price_swing(&bundle, market, contract, scheme, options)?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Estimator of `E[target | feature]` evaluated at every sample, for several
/// targets sharing one feature column.
pub trait ConditionalExpectation {
    fn estimate(&self, feature: &[f64], targets: &[&[f64]]) -> Result<Vec<Vec<f64>>>;
}

/// Local-basis least squares, the estimator used in production runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RegressionEstimator(pub RegressionConfig);

impl ConditionalExpectation for RegressionEstimator {
    fn estimate(&self, feature: &[f64], targets: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let design = Design::new(&[feature], &self.0)?;
        targets
            .iter()
            .map(|t| design.fit(t, &self.0).map(|f| design.fitted(&f)))
            .collect()
    }
}

/// Coefficients of a scalar penalized BSDE: terminal gain `g`, running
/// profit `f`, intervention gain `κ`.
pub struct GenericProblem<G, F, K> {
    pub terminal: G,
    pub running: F,
    pub gain: K,
    pub penalty: f64,
    pub lambda: f64,
}

/// One step of the generic scheme from `t_{n+1}` to `t_n`:
/// `V = E[Y dÑ]/(λ dt)`, `Z = E[Y dW]/dt`,
/// `Y = E[Y] + [f(X) + (p (V + κ(X))^+ - V) λ] dt`.
#[allow(clippy::too_many_arguments)]
pub fn generic_backward_step<G, F, K, E>(
    next_y: &[f64],
    x: &[f64],
    dw: &[f64],
    dn: &[u32],
    dt: f64,
    problem: &GenericProblem<G, F, K>,
    estimator: &E,
) -> Result<BackwardState>
where
    F: Fn(f64) -> f64,
    K: Fn(f64) -> f64,
    E: ConditionalExpectation + ?Sized,
{
    let n_paths = next_y.len();
    if x.len() != n_paths || dw.len() != n_paths || dn.len() != n_paths {
        return Err(invalid("paths", "state and increment slices differ in length"));
    }
    let lambda_dt = problem.lambda * dt;
    let target_v: Vec<f64> = next_y
        .iter()
        .zip(dn)
        .map(|(y, &k)| y * (k as f64 - lambda_dt))
        .collect();
    let target_z: Vec<f64> = next_y.iter().zip(dw).map(|(y, w)| y * w).collect();
    let cond = estimator.estimate(x, &[next_y, &target_v, &target_z])?;
    let (cond_y, cond_v, cond_z) = (&cond[0], &cond[1], &cond[2]);

    let mut state = BackwardState {
        y: Vec::with_capacity(n_paths),
        v: Vec::with_capacity(n_paths),
        z: Some(Vec::with_capacity(n_paths)),
        value: None,
    };
    for m in 0..n_paths {
        let v = cond_v[m] / lambda_dt;
        let z = cond_z[m] / dt;
        let drift = crate::model::penalized_driver((problem.running)(x[m]), (problem.gain)(x[m]), v, problem.penalty, problem.lambda);
        let y = cond_y[m] + drift * dt;
        state.y.push(y);
        state.v.push(v);
        state.z.as_mut().expect("z allocated").push(z);
    }
    Ok(state)
}

/// Time-zero `(Y, Z, V)` of the generic scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenericSolution {
    pub y0: f64,
    pub z0: f64,
    pub v0: f64,
}

/// Runs [`generic_backward_step`] from `Y_N = g(X_N)` down to `t_0`.
pub fn solve_generic<G, F, K, E>(
    x: &StepArray<f64>,
    dw: &StepArray<f64>,
    dn: &StepArray<u32>,
    grid: &TimeGrid,
    problem: &GenericProblem<G, F, K>,
    estimator: &E,
) -> Result<GenericSolution>
where
    G: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
    K: Fn(f64) -> f64,
    E: ConditionalExpectation + ?Sized,
{
    let n_steps = grid.n_steps();
    if x.n_rows() != n_steps + 1 || dw.n_rows() != n_steps || dn.n_rows() != n_steps {
        return Err(invalid("paths", "array shapes do not match the grid"));
    }
    let mut y: Vec<f64> = x.row(n_steps).iter().map(|&v| (problem.terminal)(v)).collect();
    let mut last = None;
    for n in (0..n_steps).rev() {
        let state = generic_backward_step(&y, x.row(n), dw.row(n), dn.row(n), grid.dt(), problem, estimator)?;
        y = state.y.clone();
        last = Some(state);
    }
    let state = last.expect("at least one step");
    let m = state.y.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / m;
    Ok(GenericSolution {
        y0: mean(&state.y),
        z0: mean(state.z.as_deref().unwrap_or(&[])),
        v0: mean(&state.v),
    })
}
