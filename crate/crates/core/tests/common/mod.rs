//! Oracles and checks shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swing_bsde::bsde::{
    price_swing, price_swing_observed, solve_generic, ConditionalExpectation, GenericProblem, GenericSolution,
    SolverOptions,
};
use swing_bsde::regression::{Design, RegressionConfig};
use swing_bsde::simulation::{PathBundle, SimulationConfig, StepArray};
use swing_bsde::stats::mean_stderr;
use swing_bsde::{MarketParams, Result, SchemeParams, SwingContract, TimeGrid};

pub fn bundle(market: &MarketParams, n_steps: usize, n_paths: usize, lambda: Option<f64>, seed: u64) -> PathBundle {
    let grid = TimeGrid::new(market.maturity, n_steps).unwrap();
    PathBundle::simulate(
        market,
        &grid,
        &SimulationConfig {
            n_paths,
            seed,
            intensity: lambda,
            store_brownian: false,
        },
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Two-period finite-outcome fixture for the generic scheme.
//
// X moves by w + c dN per period, w in {-h, 0, h} with probabilities
// 1/6, 2/3, 1/6 (variance h²/3 = dt when h = sqrt(3 dt)) and dN in {0, 1}
// with probability 1/2 each, so λ dt = 1/2. Enumerating the outcomes with
// integer multiplicities (1, 4, 1) x (1, 1) makes sample means equal the
// exact expectations.

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub x0: f64,
    pub dt: f64,
    pub jump: f64,
    pub strike: f64,
    pub drift: f64,
    pub penalty: f64,
}

impl Fixture {
    pub fn h(&self) -> f64 {
        (3.0 * self.dt).sqrt()
    }

    pub fn lambda(&self) -> f64 {
        0.5 / self.dt
    }

    fn outcomes(&self) -> Vec<(f64, f64, u32)> {
        let h = self.h();
        let mut out = Vec::new();
        for (w, p) in [(-h, 1.0 / 6.0), (0.0, 2.0 / 3.0), (h, 1.0 / 6.0)] {
            for dn in [0u32, 1] {
                out.push((w, p * 0.5, dn));
            }
        }
        out
    }

    pub fn g(&self, x: f64) -> f64 {
        (self.strike - x).max(0.0)
    }

    pub fn f(&self, x: f64) -> f64 {
        self.drift * x
    }

    pub fn kappa(&self, x: f64) -> f64 {
        (self.strike - x).max(0.0) + 0.1
    }

    fn step(&self, x: f64, next: impl Fn(f64) -> f64) -> (f64, f64, f64) {
        let (mut ey, mut eydn, mut eydw) = (0.0, 0.0, 0.0);
        for (w, p, dn) in self.outcomes() {
            let y = next(x + w + self.jump * dn as f64);
            ey += p * y;
            eydn += p * y * (dn as f64 - 0.5);
            eydw += p * y * w;
        }
        let lambda = self.lambda();
        let v = eydn / (lambda * self.dt);
        let z = eydw / self.dt;
        let y = ey + (self.f(x) + (self.penalty * (v + self.kappa(x)).max(0.0) - v) * lambda) * self.dt;
        (y, z, v)
    }

    /// Hand-written recursion over the outcome tree.
    pub fn exact(&self) -> GenericSolution {
        let y1 = |x: f64| self.step(x, |x2| self.g(x2)).0;
        let (y0, z0, v0) = self.step(self.x0, y1);
        GenericSolution { y0, z0, v0 }
    }

    /// The scheme run on the enumerated paths with a grouping estimator.
    pub fn scheme(&self) -> Result<GenericSolution> {
        let mut weighted = Vec::new();
        for (w, p, dn) in self.outcomes() {
            let copies = (p * 12.0).round() as usize;
            weighted.extend(std::iter::repeat_n((w, dn), copies));
        }
        let n_paths = weighted.len() * weighted.len();
        let mut x = StepArray::zeros(3, n_paths);
        let mut dw = StepArray::zeros(2, n_paths);
        let mut dn = StepArray::zeros(2, n_paths);
        let mut m = 0;
        for &(w0, d0) in &weighted {
            for &(w1, d1) in &weighted {
                let x1 = self.x0 + w0 + self.jump * d0 as f64;
                x.set(m, 0, self.x0);
                x.set(m, 1, x1);
                x.set(m, 2, x1 + w1 + self.jump * d1 as f64);
                dw.set(m, 0, w0);
                dw.set(m, 1, w1);
                dn.set(m, 0, d0);
                dn.set(m, 1, d1);
                m += 1;
            }
        }
        let grid = TimeGrid::new(2.0 * self.dt, 2)?;
        let problem = GenericProblem {
            terminal: |x: f64| self.g(x),
            running: |x: f64| self.f(x),
            gain: |x: f64| self.kappa(x),
            penalty: self.penalty,
            lambda: self.lambda(),
        };
        solve_generic(&x, &dw, &dn, &grid, &problem, &GroupMeans)
    }
}

/// Exact conditional expectation for a feature with finitely many values:
/// the mean over samples sharing the value.
pub struct GroupMeans;

impl ConditionalExpectation for GroupMeans {
    fn estimate(&self, feature: &[f64], targets: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, x) in feature.iter().enumerate() {
            groups.entry(x.to_bits()).or_default().push(i);
        }
        Ok(targets
            .iter()
            .map(|t| {
                let mut out = vec![0.0; t.len()];
                for members in groups.values() {
                    let mean = members.iter().map(|&i| t[i]).sum::<f64>() / members.len() as f64;
                    for &i in members {
                        out[i] = mean;
                    }
                }
                out
            })
            .collect())
    }
}

pub fn max_abs_diff(a: &GenericSolution, b: &GenericSolution) -> f64 {
    (a.y0 - b.y0).abs().max((a.z0 - b.z0).abs()).max((a.v0 - b.v0).abs())
}

// ---------------------------------------------------------------------------
// Zero-penalty oracle.

#[derive(Debug, Clone, Copy)]
pub struct ZeroPenaltyCase {
    pub market: MarketParams,
    pub contract: SwingContract,
    pub lambda: f64,
    pub n_steps: usize,
}

pub fn random_zero_penalty_cases(seed: u64, count: usize) -> Vec<ZeroPenaltyCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let market = MarketParams::new(
                rng.random_range(0.0..0.06),
                rng.random_range(0.15..0.4),
                rng.random_range(85.0..115.0),
                100.0,
                1.0,
            )
            .unwrap();
            let n_steps = 40;
            let contract = if rng.random_bool(0.5) {
                SwingContract::american()
            } else {
                SwingContract::new(2, 0.025 * rng.random_range(2..=8) as f64).unwrap()
            };
            ZeroPenaltyCase {
                market,
                contract,
                lambda: rng.random_range(2.0..5.0),
                n_steps,
            }
        })
        .collect()
}

/// Price and the two candidate oracles on one bundle.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPenaltyRun {
    pub price: f64,
    /// Plain average of the discounted terminal gain.
    pub average: f64,
    pub average_se: f64,
    /// Average weighted by `Π (1 - dÑ_n)`.
    pub weighted: f64,
    pub weighted_se: f64,
}

pub fn zero_penalty_run(case: &ZeroPenaltyCase, n_paths: usize, seed: u64, options: &SolverOptions) -> ZeroPenaltyRun {
    let b = bundle(&case.market, case.n_steps, n_paths, Some(case.lambda), seed);
    let scheme = SchemeParams::new(case.lambda, 0.0, case.n_steps, n_paths, seed).unwrap();
    let price = price_swing(&b, &case.market, &case.contract, &scheme, options).unwrap().price;
    let n = case.n_steps;
    let disc = (1.0 + case.market.rate * b.grid().dt()).powi(-(n as i32));
    let kappa: Vec<f64> = (0..n_paths)
        .map(|m| disc * case.contract.gain(&case.market, b.spot(m, n), b.q(m, n), b.theta(m, n)))
        .collect();
    let weighted: Vec<f64> = (0..n_paths)
        .map(|m| kappa[m] * (0..n).map(|k| 1.0 - b.dn_compensated(m, k)).product::<f64>())
        .collect();
    let (average, average_se) = mean_stderr(&kappa);
    let (weighted, weighted_se) = mean_stderr(&weighted);
    ZeroPenaltyRun {
        price,
        average,
        average_se,
        weighted,
        weighted_se,
    }
}

/// Replicated comparison: mean price minus mean oracle, and their combined
/// standard error.
#[derive(Debug, Clone, Copy)]
pub struct OracleComparison {
    pub price: f64,
    pub oracle: f64,
    pub combined_se: f64,
}

impl OracleComparison {
    pub fn within(&self, k: f64) -> bool {
        (self.price - self.oracle).abs() <= k * self.combined_se
    }
}

pub fn compare_zero_penalty(
    case: &ZeroPenaltyCase,
    n_paths: usize,
    seeds: &[u64],
    options: &SolverOptions,
) -> (OracleComparison, OracleComparison) {
    let runs: Vec<ZeroPenaltyRun> = seeds.iter().map(|&s| zero_penalty_run(case, n_paths, s, options)).collect();
    let k = runs.len() as f64;
    let (price, price_se) = mean_stderr(&runs.iter().map(|r| r.price).collect::<Vec<_>>());
    let price_se = if price_se.is_finite() { price_se } else { 0.0 };
    let pooled = |se: &dyn Fn(&ZeroPenaltyRun) -> f64| (runs.iter().map(|r| se(r).powi(2)).sum::<f64>()).sqrt() / k;
    let average = runs.iter().map(|r| r.average).sum::<f64>() / k;
    let weighted = runs.iter().map(|r| r.weighted).sum::<f64>() / k;
    let average_se = pooled(&|r| r.average_se);
    let weighted_se = pooled(&|r| r.weighted_se);
    (
        OracleComparison {
            price,
            oracle: average,
            combined_se: (price_se.powi(2) + average_se.powi(2)).sqrt(),
        },
        OracleComparison {
            price,
            oracle: weighted,
            combined_se: (price_se.powi(2) + weighted_se.powi(2)).sqrt(),
        },
    )
}

// ---------------------------------------------------------------------------
// Structural checks.

/// Runs the solver and counts exhausted-stratum entries of `Y` or `V` that
/// are not exactly zero, over every observed step. Returns
/// `(violations, entries checked)`.
pub fn stratum_zeroing_violations(
    market: &MarketParams,
    contract: &SwingContract,
    scheme: &SchemeParams,
    options: &SolverOptions,
) -> (usize, usize) {
    let b = bundle(market, scheme.n_steps, scheme.n_paths, Some(scheme.lambda), scheme.seed);
    let (mut bad, mut checked) = (0, 0);
    price_swing_observed(&b, market, contract, scheme, options, |_, state, strata| {
        for &m in strata.exhausted() {
            checked += 1;
            if state.y[m] != 0.0 || state.v[m] != 0.0 {
                bad += 1;
            }
        }
    })
    .unwrap();
    (bad, checked)
}

/// Q and Θ on the grid recomputed from each path's jump times by binary
/// search; returns the number of mismatching (path, step) entries.
pub fn qtheta_mismatches(b: &PathBundle) -> usize {
    let grid = b.grid();
    let mut bad = 0;
    for m in 0..b.n_paths() {
        let jumps = b.jumps().path(m);
        for n in 0..=grid.n_steps() {
            let t = grid.time(n);
            let q = jumps.partition_point(|&s| s <= t);
            let theta = if q == 0 { t } else { t - jumps[q - 1] };
            if b.q(m, n) as usize != q || b.theta(m, n) != theta {
                bad += 1;
            }
        }
    }
    bad
}

/// Largest normalized inner product `|<r, φ>| / (|r| |φ|)` between the
/// in-sample residual and the basis functions of each cell (the indicator
/// and the centered features).
pub fn max_residual_correlation(features: &[&[f64]], targets: &[f64], config: &RegressionConfig) -> f64 {
    let design = Design::new(features, config).unwrap();
    let fit = design.fit(targets, config).unwrap();
    let fitted = design.fitted(&fit);
    let n_cells = design.basis().n_cells();
    let d = features.len();
    let mut members = vec![Vec::new(); n_cells];
    for (i, &c) in design.assignment().iter().enumerate() {
        members[c as usize].push(i);
    }
    let mut worst: f64 = 0.0;
    for idx in members.iter().filter(|v| !v.is_empty()) {
        let r: Vec<f64> = idx.iter().map(|&i| targets[i] - fitted[i]).collect();
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = targets.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if r_norm <= 1e-14 * scale * (idx.len() as f64).sqrt() {
            continue;
        }
        let ones = vec![1.0; idx.len()];
        let mut columns = vec![ones];
        for k in 0..d {
            let col: Vec<f64> = idx.iter().map(|&i| features[k][i]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            columns.push(col.iter().map(|v| v - mean).collect());
        }
        for phi in columns {
            let phi_norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if phi_norm == 0.0 {
                continue;
            }
            let dot: f64 = phi.iter().zip(&r).map(|(a, b)| a * b).sum();
            worst = worst.max(dot.abs() / (phi_norm * r_norm));
        }
    }
    worst
}
