//! Forward simulation: exact geometric Brownian motion on the grid, the
//! auxiliary Poisson process, and the rights counter `Q` / delay clock `Θ`
//! derived from its jump times.
//!
//! Every path draws from its own ChaCha stream (`seed`, stream = path index),
//! so a bundle is bitwise identical whatever the thread count.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{MarketParams, TimeGrid};

/// Dense per-step, per-path array, stored step-major so that a whole time
/// slice is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct StepArray<T> {
    n_rows: usize,
    n_paths: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> StepArray<T> {
    pub fn zeros(n_rows: usize, n_paths: usize) -> Self {
        Self {
            n_rows,
            n_paths,
            data: vec![T::default(); n_rows * n_paths],
        }
    }
}

impl<T: Copy> StepArray<T> {
    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[T] {
        &self.data[n * self.n_paths..(n + 1) * self.n_paths]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.data[n * self.n_paths..(n + 1) * self.n_paths]
    }

    #[inline]
    pub fn get(&self, path: usize, n: usize) -> T {
        self.data[n * self.n_paths + path]
    }

    #[inline]
    pub fn set(&mut self, path: usize, n: usize, value: T) {
        self.data[n * self.n_paths + path] = value;
    }

    /// All values of one path, in time order.
    pub fn path(&self, path: usize) -> Vec<T> {
        (0..self.n_rows).map(|n| self.get(path, n)).collect()
    }
}

/// Sorted Poisson event times in `(0, T]` for every path (compressed rows).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpTimes {
    offsets: Vec<usize>,
    times: Vec<f64>,
}

impl JumpTimes {
    pub fn from_paths<I, P>(paths: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[f64]>,
    {
        let mut offsets = vec![0];
        let mut times = Vec::new();
        for p in paths {
            times.extend_from_slice(p.as_ref());
            offsets.push(times.len());
        }
        Self { offsets, times }
    }

    pub fn n_paths(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    #[inline]
    pub fn path(&self, m: usize) -> &[f64] {
        &self.times[self.offsets[m]..self.offsets[m + 1]]
    }

    pub fn total(&self) -> usize {
        self.times.len()
    }
}

/// One GBM path on the grid: spots `S[0..=N]` and the Brownian increments
/// `dW[0..N]` they were built from. Exact in distribution at grid points.
pub fn simulate_gbm<R: Rng + ?Sized>(market: &MarketParams, grid: &TimeGrid, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let n_steps = grid.n_steps();
    let sqrt_dt = grid.dt().sqrt();
    let drift = market.rate - 0.5 * market.sigma * market.sigma;
    let mut spots = Vec::with_capacity(n_steps + 1);
    let mut increments = Vec::with_capacity(n_steps);
    let mut w = 0.0;
    spots.push(market.spot);
    for n in 0..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        let dw = sqrt_dt * z;
        increments.push(dw);
        w += dw;
        let t = grid.time(n + 1);
        spots.push(market.spot * (drift * t + market.sigma * w).exp());
    }
    (spots, increments)
}

/// Poisson event times on `(0, horizon]` from cumulative exponential
/// inter-arrival times with rate `lambda`.
pub fn simulate_poisson<R: Rng + ?Sized>(lambda: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    if horizon <= 0.0 {
        return times;
    }
    let mut t = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        t += e / lambda;
        if t > horizon {
            break;
        }
        times.push(t);
    }
    times
}

/// Rights counter and delay clock on the grid for one path:
/// `Q[n]` = number of jumps `<= t_n`, `Θ[n] = t_n - (last jump <= t_n)`, or
/// `t_n` when there has been no jump yet.
pub fn build_qtheta(jumps: &[f64], grid: &TimeGrid) -> (Vec<u32>, Vec<f64>) {
    let mut q = Vec::with_capacity(grid.n_steps() + 1);
    let mut theta = Vec::with_capacity(grid.n_steps() + 1);
    let mut count = 0usize;
    for n in 0..=grid.n_steps() {
        let t = grid.time(n);
        while count < jumps.len() && jumps[count] <= t {
            count += 1;
        }
        q.push(count as u32);
        theta.push(if count == 0 { t } else { t - jumps[count - 1] });
    }
    (q, theta)
}

/// What to simulate for a [`PathBundle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Intensity of the auxiliary Poisson process; `None` skips it (pure GBM).
    pub intensity: Option<f64>,
    /// Keep the Brownian increments (needed only by the generic solver).
    pub store_brownian: bool,
}

/// Simulated forward paths of `(S, Q, Θ)` with the increments the backward
/// scheme needs. `dN[n] = Q[n+1] - Q[n]` counts the jumps in `(t_n, t_{n+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    seed: u64,
    intensity: Option<f64>,
    spots: StepArray<f64>,
    rights: StepArray<u32>,
    brownian: Option<StepArray<f64>>,
    jumps: JumpTimes,
}

const CHUNK_PATHS: usize = 256;

struct Chunk {
    spots: Vec<Vec<f64>>,
    increments: Vec<Vec<f64>>,
    jumps: Vec<Vec<f64>>,
}

impl PathBundle {
    pub fn simulate(market: &MarketParams, grid: &TimeGrid, config: &SimulationConfig) -> Result<Self> {
        market.validate()?;
        if config.n_paths == 0 {
            return Err(invalid("n_paths", "must be >= 1"));
        }
        if let Some(lambda) = config.intensity {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(invalid("lambda", format!("must be > 0, got {lambda}")));
            }
        }
        let n_paths = config.n_paths;
        let n_steps = grid.n_steps();
        let mut spots = StepArray::zeros(n_steps + 1, n_paths);
        // pure GBM bundles carry no rights array (Q is identically zero)
        let mut rights = StepArray::zeros(if config.intensity.is_some() { n_steps + 1 } else { 0 }, n_paths);
        let mut brownian = config.store_brownian.then(|| StepArray::zeros(n_steps, n_paths));
        let mut jump_paths: Vec<Vec<f64>> = Vec::with_capacity(if config.intensity.is_some() { n_paths } else { 0 });

        let n_chunks = n_paths.div_ceil(CHUNK_PATHS);
        // Bound the transient path-major buffers to a few chunks per thread.
        let chunks_per_batch = 8 * rayon::current_num_threads();
        let mut chunk_start = 0;
        while chunk_start < n_chunks {
            let chunk_end = (chunk_start + chunks_per_batch).min(n_chunks);
            let batch: Vec<(usize, Chunk)> = (chunk_start..chunk_end)
                .into_par_iter()
                .map(|c| {
                    let first = c * CHUNK_PATHS;
                    let last = (first + CHUNK_PATHS).min(n_paths);
                    let mut chunk = Chunk {
                        spots: Vec::with_capacity(last - first),
                        increments: Vec::with_capacity(last - first),
                        jumps: Vec::with_capacity(last - first),
                    };
                    for m in first..last {
                        let mut rng = path_rng(config.seed, m);
                        let (s, dw) = simulate_gbm(market, grid, &mut rng);
                        chunk.spots.push(s);
                        chunk.increments.push(dw);
                        if let Some(lambda) = config.intensity {
                            chunk.jumps.push(simulate_poisson(lambda, grid.maturity(), &mut rng));
                        }
                    }
                    (first, chunk)
                })
                .collect();
            for (first, chunk) in batch {
                for (k, s) in chunk.spots.iter().enumerate() {
                    let m = first + k;
                    for (n, &v) in s.iter().enumerate() {
                        spots.set(m, n, v);
                    }
                    if let Some(b) = brownian.as_mut() {
                        for (n, &v) in chunk.increments[k].iter().enumerate() {
                            b.set(m, n, v);
                        }
                    }
                }
                for (k, jumps) in chunk.jumps.into_iter().enumerate() {
                    let (q, _) = build_qtheta(&jumps, grid);
                    for (n, &v) in q.iter().enumerate() {
                        rights.set(first + k, n, v);
                    }
                    jump_paths.push(jumps);
                }
            }
            chunk_start = chunk_end;
        }

        Ok(Self {
            grid: *grid,
            seed: config.seed,
            intensity: config.intensity,
            spots,
            rights,
            brownian,
            jumps: if config.intensity.is_some() {
                JumpTimes::from_paths(&jump_paths)
            } else {
                JumpTimes::from_paths(std::iter::repeat_n(&[][..], n_paths))
            },
        })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn n_paths(&self) -> usize {
        self.spots.n_paths()
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn intensity(&self) -> Option<f64> {
        self.intensity
    }

    pub fn spots(&self) -> &StepArray<f64> {
        &self.spots
    }

    /// `Q` on the grid; empty (zero rows) for a bundle without jumps.
    pub fn rights(&self) -> &StepArray<u32> {
        &self.rights
    }

    pub fn brownian(&self) -> Option<&StepArray<f64>> {
        self.brownian.as_ref()
    }

    pub fn jumps(&self) -> &JumpTimes {
        &self.jumps
    }

    #[inline]
    pub fn spot(&self, m: usize, n: usize) -> f64 {
        self.spots.get(m, n)
    }

    #[inline]
    pub fn q(&self, m: usize, n: usize) -> u32 {
        if self.intensity.is_none() {
            return 0;
        }
        self.rights.get(m, n)
    }

    /// Delay clock: time since the last jump at or before `t_n`.
    #[inline]
    pub fn theta(&self, m: usize, n: usize) -> f64 {
        let t = self.grid.time(n);
        match self.q(m, n) {
            0 => t,
            q => t - self.jumps.path(m)[q as usize - 1],
        }
    }

    /// Poisson increment on step `n`.
    #[inline]
    pub fn dn(&self, m: usize, n: usize) -> u32 {
        self.q(m, n + 1) - self.q(m, n)
    }

    /// Compensated increment `dN - lambda dt` on step `n`.
    #[inline]
    pub fn dn_compensated(&self, m: usize, n: usize) -> f64 {
        self.dn(m, n) as f64 - self.intensity.unwrap_or(0.0) * self.grid.dt()
    }

    pub fn theta_row(&self, n: usize) -> Vec<f64> {
        (0..self.n_paths()).map(|m| self.theta(m, n)).collect()
    }

    /// All Poisson increments as a step array with `N` rows.
    pub fn dn_array(&self) -> StepArray<u32> {
        let mut out = StepArray::zeros(self.n_steps(), self.n_paths());
        if self.intensity.is_none() {
            return out;
        }
        for n in 0..self.n_steps() {
            let (lo, hi) = (self.rights.row(n), self.rights.row(n + 1));
            for (o, (a, b)) in out.row_mut(n).iter_mut().zip(lo.iter().zip(hi)) {
                *o = b - a;
            }
        }
        out
    }

    /// Fraction of (path, step) cells with two or more jumps, a bias
    /// diagnostic for the backward scheme.
    pub fn multi_jump_fraction(&self) -> f64 {
        if self.intensity.is_none() {
            return 0.0;
        }
        let mut count = 0usize;
        for n in 0..self.n_steps() {
            let (lo, hi) = (self.rights.row(n), self.rights.row(n + 1));
            count += lo.iter().zip(hi).filter(|(a, b)| **b - **a >= 2).count();
        }
        count as f64 / (self.n_steps() * self.n_paths()) as f64
    }

    /// Debug dump: little-endian header (magic, M, N, dt, seed, brownian
    /// flag) followed by each path's `S`, `Q`, `Θ` and optionally `dW`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let (m_paths, n_steps) = (self.n_paths(), self.n_steps());
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(m_paths as u64).to_le_bytes())?;
        w.write_all(&(n_steps as u64).to_le_bytes())?;
        w.write_all(&self.grid.dt().to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&[self.brownian.is_some() as u8])?;
        for m in 0..m_paths {
            for n in 0..=n_steps {
                w.write_all(&self.spot(m, n).to_le_bytes())?;
            }
            for n in 0..=n_steps {
                w.write_all(&self.q(m, n).to_le_bytes())?;
            }
            for n in 0..=n_steps {
                w.write_all(&self.theta(m, n).to_le_bytes())?;
            }
            if let Some(b) = &self.brownian {
                for n in 0..n_steps {
                    w.write_all(&b.get(m, n).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }
}

pub const DUMP_MAGIC: &[u8; 8] = b"SWPBNDL1";

/// Independent random stream of path `m`.
pub fn path_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

/// Scalar jump-diffusion coefficients `b`, `sigma`, `gamma`.
pub struct JumpSdeCoefficients<B, S, G> {
    pub drift: B,
    pub diffusion: S,
    pub jump: G,
}

/// Euler scheme `X[n+1] = X[n] + b dt + sigma dW + gamma dN`, step-major.
pub fn euler_jump_sde<B, S, G>(
    coeffs: &JumpSdeCoefficients<B, S, G>,
    x0: f64,
    grid: &TimeGrid,
    dw: &StepArray<f64>,
    dn: &StepArray<u32>,
) -> Result<StepArray<f64>>
where
    B: Fn(f64) -> f64,
    S: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n_steps = grid.n_steps();
    let n_paths = dw.n_paths();
    if dw.n_rows() != n_steps || dn.n_rows() != n_steps || dn.n_paths() != n_paths {
        return Err(invalid("increments", "shape does not match the grid"));
    }
    let dt = grid.dt();
    let mut x = StepArray::zeros(n_steps + 1, n_paths);
    x.row_mut(0).fill(x0);
    for n in 0..n_steps {
        for m in 0..n_paths {
            let xn = x.get(m, n);
            let next = xn
                + (coeffs.drift)(xn) * dt
                + (coeffs.diffusion)(xn) * dw.get(m, n)
                + (coeffs.jump)(xn) * dn.get(m, n) as f64;
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    what: "jump SDE state",
                    step: n + 1,
                    path: m,
                });
            }
            x.set(m, n + 1, next);
        }
    }
    Ok(x)
}
