//! Experiment orchestration: parameter sweeps with replications, stability
//! and convergence diagnostics, flat key-value configuration, and CSV/JSON
//! output.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmark::{binomial_american_put, simulate_and_iterate, IterativeOptions};
use crate::bsde::{simulate_and_price, PriceReport, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::model::{MarketParams, SchemeParams, SwingContract};
use crate::stats::{mean_stderr, replication_seed};

/// Paths per run at desk scale.
pub const DESK_PATHS: usize = 200_000;
/// Paths per run at full scale.
pub const FULL_SCALE_PATHS: usize = 20_000_000;
pub const DEFAULT_REPS: usize = 8;
/// Default bound on `λ p² dt`.
pub const STABILITY_THRESHOLD: f64 = 1.0;
/// Above this one-step jump probability, multiple jumps per step matter.
pub const MULTI_JUMP_THRESHOLD: f64 = 0.1;

pub const CSV_COLUMNS: [&str; 12] = [
    "method",
    "lambda",
    "p",
    "N",
    "M",
    "n_max",
    "delta",
    "seed",
    "price",
    "stderr",
    "wall_ms",
    "multi_jump_frac",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bsde,
    Iterative,
    Binomial,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bsde => "bsde",
            Method::Iterative => "iterative",
            Method::Binomial => "binomial",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsde" => Ok(Method::Bsde),
            "iterative" => Ok(Method::Iterative),
            "binomial" => Ok(Method::Binomial),
            other => Err(invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(invalid("format", format!("unknown format `{other}`"))),
        }
    }
}

/// A sweep: the pricing method and one list per swept parameter. Rows are
/// the Cartesian product of the lists that matter for the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method: Method,
    pub market: MarketParams,
    pub lambdas: Vec<f64>,
    pub penalties: Vec<f64>,
    /// Time steps (tree steps for the binomial method).
    pub steps: Vec<usize>,
    pub paths: Vec<usize>,
    pub n_max: Vec<usize>,
    /// Ignored for a single right.
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub reps: usize,
    pub stability_threshold: f64,
    pub solver: SolverOptions,
    pub iterative: IterativeOptions,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            method: Method::Bsde,
            market: MarketParams::reference_put(),
            lambdas: vec![3.0],
            penalties: vec![5.0],
            steps: vec![160],
            paths: vec![DESK_PATHS],
            n_max: vec![1],
            deltas: vec![0.1],
            seed: 1,
            reps: DEFAULT_REPS,
            stability_threshold: STABILITY_THRESHOLD,
            solver: SolverOptions::default(),
            iterative: IterativeOptions::default(),
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

/// One sweep point before it runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub n_steps: usize,
    pub n_paths: Option<usize>,
    pub n_max: usize,
    pub delta: f64,
}

impl ExperimentSpec {
    /// American put, `λ ∈ {3,4,5} × N ∈ {20,…,320}`, `p = 5`.
    pub fn american_table() -> Self {
        Self {
            lambdas: vec![3.0, 4.0, 5.0],
            penalties: vec![5.0],
            steps: vec![20, 40, 80, 160, 320],
            n_max: vec![1],
            ..Self::default()
        }
    }

    /// Two rights, `δ ∈ {0.1,0.2,0.3} × p ∈ {5,10} × λ ∈ {3,4,5}`, `N = 160`.
    pub fn swing_table() -> Self {
        Self {
            lambdas: vec![3.0, 4.0, 5.0],
            penalties: vec![5.0, 10.0],
            steps: vec![160],
            n_max: vec![2],
            deltas: vec![0.1, 0.2, 0.3],
            ..Self::default()
        }
    }

    /// Sweep points in output order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        match self.method {
            Method::Binomial => {
                for &n_steps in &self.steps {
                    points.push(GridPoint {
                        lambda: None,
                        p: None,
                        n_steps,
                        n_paths: None,
                        n_max: 1,
                        delta: 0.0,
                    });
                }
            }
            Method::Iterative | Method::Bsde => {
                let bsde = self.method == Method::Bsde;
                let (lambdas, penalties): (Vec<Option<f64>>, Vec<Option<f64>>) = if bsde {
                    (
                        self.lambdas.iter().copied().map(Some).collect(),
                        self.penalties.iter().copied().map(Some).collect(),
                    )
                } else {
                    (vec![None], vec![None])
                };
                for &n_max in &self.n_max {
                    let deltas = if n_max == 1 { vec![0.0] } else { self.deltas.clone() };
                    for &delta in &deltas {
                        for &p in &penalties {
                            for &lambda in &lambdas {
                                for &n_steps in &self.steps {
                                    for &m in &self.paths {
                                        points.push(GridPoint {
                                            lambda,
                                            p,
                                            n_steps,
                                            n_paths: Some(m),
                                            n_max,
                                            delta,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        points
    }

    /// Use the full-scale path count instead of the desk default.
    pub fn full_scale(&mut self) {
        self.paths = vec![FULL_SCALE_PATHS];
    }

    /// Set one configuration key. Lists are comma-separated.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "method" => self.method = value.parse()?,
            "lambda" => self.lambdas = parse_list(key, value)?,
            "penalty" | "p" => self.penalties = parse_list(key, value)?,
            "steps" | "N" => self.steps = parse_list(key, value)?,
            "paths" | "M" => self.paths = parse_list(key, value)?,
            "nmax" | "n_max" => self.n_max = parse_list(key, value)?,
            "delay" | "delta" => self.deltas = parse_list(key, value)?,
            "strike" => self.market.strike = parse_one(key, value)?,
            "spot" => self.market.spot = parse_one(key, value)?,
            "rate" => self.market.rate = parse_one(key, value)?,
            "vol" | "sigma" => self.market.sigma = parse_one(key, value)?,
            "maturity" => self.market.maturity = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "reps" => self.reps = parse_one(key, value)?,
            "stability_threshold" => self.stability_threshold = parse_one(key, value)?,
            "c_basis" => {
                let c = parse_one(key, value)?;
                self.solver.regression.c_basis = c;
                self.iterative.regression.c_basis = c;
            }
            "min_per_cell" => {
                let n = parse_one(key, value)?;
                self.solver.regression.min_per_cell = n;
                self.iterative.regression.min_per_cell = n;
            }
            "full_scale" | "paper_scale" => {
                if parse_one::<bool>(key, value)? {
                    self.full_scale();
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            other => return Err(invalid("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a flat `key = value` file; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            self.apply(key, value).map_err(|e| Error::Config {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.reps == 0 {
            return Err(invalid("reps", "at least one replication is required"));
        }
        if self.stability_threshold.is_nan() || self.stability_threshold <= 0.0 {
            return Err(invalid("stability_threshold", "must be > 0"));
        }
        Ok(())
    }
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid("config", format!("cannot parse `{value}` for `{}`", key.trim())))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_one(key, v))
        .collect()
}

/// Stability of a `(λ, p, dt)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityDiagnostic {
    /// `λ p² dt`.
    pub ratio: f64,
    /// `λ dt`.
    pub jump_probability: f64,
    pub unstable: bool,
    pub multi_jump: bool,
}

impl StabilityDiagnostic {
    pub fn passes(&self) -> bool {
        !self.unstable
    }
}

/// [`stability_check_with`] at the default threshold.
pub fn stability_check(lambda: f64, p: f64, dt: f64) -> StabilityDiagnostic {
    stability_check_with(lambda, p, dt, STABILITY_THRESHOLD)
}

/// Flags `λ p² dt > threshold` (the step must be small against `1/(λ p²)`)
/// and `λ dt > 0.1`.
pub fn stability_check_with(lambda: f64, p: f64, dt: f64, threshold: f64) -> StabilityDiagnostic {
    let ratio = lambda * p * p * dt;
    let jump_probability = lambda * dt;
    StabilityDiagnostic {
        ratio,
        jump_probability,
        unstable: ratio > threshold,
        multi_jump: jump_probability > MULTI_JUMP_THRESHOLD,
    }
}

/// One replication of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub n_steps: usize,
    pub n_paths: Option<usize>,
    pub n_max: usize,
    pub delta: f64,
    /// Seed of this replication, `replication_seed(base, k)`.
    pub seed: u64,
    pub price: Option<f64>,
    /// Standard error of one replication's price: the spread of the
    /// point's replications, or the run's own estimate when there is a
    /// single replication.
    pub stderr: Option<f64>,
    pub wall_ms: f64,
    pub multi_jump_frac: Option<f64>,
    #[serde(default)]
    pub replication: usize,
    #[serde(default)]
    pub level_prices: Option<Vec<f64>>,
    #[serde(default)]
    pub min_stratum: Option<usize>,
    #[serde(default)]
    pub max_basis: Option<usize>,
    #[serde(default)]
    pub stability: Option<StabilityDiagnostic>,
    #[serde(default)]
    pub error: Option<String>,
}

impl SweepRow {
    fn pending(method: Method, point: &GridPoint, seed: u64) -> Self {
        Self {
            method,
            lambda: point.lambda,
            p: point.p,
            n_steps: point.n_steps,
            n_paths: point.n_paths,
            n_max: point.n_max,
            delta: point.delta,
            seed,
            price: None,
            stderr: None,
            wall_ms: 0.0,
            multi_jump_frac: None,
            replication: 0,
            level_prices: None,
            min_stratum: None,
            max_basis: None,
            stability: None,
            error: None,
        }
    }

    fn same_point(&self, other: &SweepRow) -> bool {
        self.method == other.method
            && self.lambda == other.lambda
            && self.p == other.p
            && self.n_steps == other.n_steps
            && self.n_paths == other.n_paths
            && self.n_max == other.n_max
            && self.delta == other.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Run every sweep point; see [`run_experiment_with`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepReport> {
    run_experiment_with(spec, |_| {})
}

/// Run every sweep point in order, one row per replication, calling
/// `progress` after each row. A failing replication is recorded with its
/// error and the sweep continues. The binomial method is deterministic and
/// yields a single row per point.
///
/// Replication `k` of every point uses the same seed, so points that differ
/// only in `p` (or in the basis settings) see the same paths, which
/// sharpens comparisons across points.
pub fn run_experiment_with<F>(spec: &ExperimentSpec, mut progress: F) -> Result<SweepReport>
where
    F: FnMut(&SweepRow),
{
    spec.validate()?;
    let mut report = SweepReport::default();
    for point in spec.grid() {
        let reps = if spec.method == Method::Binomial { 1 } else { spec.reps };
        let mut rows: Vec<SweepRow> = (0..reps).map(|k| run_replication(spec, &point, k)).collect();
        let prices: Vec<f64> = rows.iter().filter_map(|r| r.price).collect();
        if prices.len() >= 2 {
            // spread of single replications, not of their mean
            let (_, se_mean) = mean_stderr(&prices);
            let se = se_mean * (prices.len() as f64).sqrt();
            for row in rows.iter_mut().filter(|r| r.price.is_some()) {
                row.stderr = Some(se);
            }
        }
        for row in rows {
            progress(&row);
            report.rows.push(row);
        }
    }
    Ok(report)
}

fn run_replication(spec: &ExperimentSpec, point: &GridPoint, k: usize) -> SweepRow {
    let start = Instant::now();
    let seed = replication_seed(spec.seed, k);
    let mut row = SweepRow::pending(spec.method, point, seed);
    row.replication = k;
    if let (Some(lambda), Some(p)) = (point.lambda, point.p) {
        let dt = spec.market.maturity / point.n_steps as f64;
        row.stability = Some(stability_check_with(lambda, p, dt, spec.stability_threshold));
    }
    match price_point(spec, point, seed) {
        Ok(report) => {
            row.price = Some(report.price);
            row.stderr = report.stderr;
            if spec.method == Method::Bsde {
                row.multi_jump_frac = Some(report.multi_jump_frac);
            }
            row.min_stratum = report
                .steps
                .iter()
                .flat_map(|s| s.stratum_sizes.iter().take(point.n_max))
                .copied()
                .min();
            row.max_basis = report.steps.iter().flat_map(|s| s.basis_counts.iter()).copied().max();
            row.level_prices = report.level_prices;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

fn price_point(spec: &ExperimentSpec, point: &GridPoint, seed: u64) -> Result<PriceReport> {
    let market = &spec.market;
    let contract = if point.n_max == 1 {
        SwingContract::american()
    } else {
        SwingContract::new(point.n_max, point.delta)?
    };
    match spec.method {
        Method::Binomial => {
            let start = Instant::now();
            let price = binomial_american_put(market, point.n_steps)?;
            Ok(PriceReport {
                method: "binomial".into(),
                price,
                v0: None,
                stderr: None,
                level_prices: None,
                n_paths: 0,
                n_steps: point.n_steps,
                lambda: None,
                penalty: None,
                n_max: 1,
                delta: 0.0,
                seed,
                multi_jump_frac: 0.0,
                steps: Vec::new(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        }
        Method::Iterative => simulate_and_iterate(
            market,
            &contract,
            point.n_steps,
            point.n_paths.unwrap_or(DESK_PATHS),
            seed,
            &spec.iterative,
        ),
        Method::Bsde => {
            let scheme = SchemeParams::new(
                point.lambda.unwrap_or_default(),
                point.p.unwrap_or_default(),
                point.n_steps,
                point.n_paths.unwrap_or(DESK_PATHS),
                seed,
            )?;
            simulate_and_price(market, &contract, &scheme, &spec.solver)
        }
    }
}

fn opt_field<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn parse_field<T: FromStr>(field: &str, column: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| invalid("csv", format!("bad value `{field}` in column {column}")))
}

fn required<T: FromStr>(field: &str, column: &str) -> Result<T> {
    parse_field(field, column)?.ok_or_else(|| invalid("csv", format!("missing value in column {column}")))
}

impl SweepReport {
    /// CSV with the fixed [`CSV_COLUMNS`] schema. Floats use the shortest
    /// representation that parses back to the same value (at most 17
    /// significant digits); absent values are empty fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.method.to_string(),
                opt_field(r.lambda),
                opt_field(r.p),
                r.n_steps.to_string(),
                opt_field(r.n_paths),
                r.n_max.to_string(),
                r.delta.to_string(),
                r.seed.to_string(),
                opt_field(r.price),
                opt_field(r.stderr),
                r.wall_ms.to_string(),
                opt_field(r.multi_jump_frac),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Rows from [`write_csv`](Self::write_csv) output; the JSON-only
    /// diagnostics come back empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        if header.iter().ne(CSV_COLUMNS) {
            return Err(invalid("csv", format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let rec = record?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let c = |i: usize| CSV_COLUMNS[i];
            rows.push(SweepRow {
                method: f(0).parse()?,
                lambda: parse_field(f(1), c(1))?,
                p: parse_field(f(2), c(2))?,
                n_steps: required(f(3), c(3))?,
                n_paths: parse_field(f(4), c(4))?,
                n_max: required(f(5), c(5))?,
                delta: required(f(6), c(6))?,
                seed: required(f(7), c(7))?,
                price: parse_field(f(8), c(8))?,
                stderr: parse_field(f(9), c(9))?,
                wall_ms: required(f(10), c(10))?,
                multi_jump_frac: parse_field(f(11), c(11))?,
                replication: 0,
                level_prices: None,
                min_stratum: None,
                max_basis: None,
                stability: None,
                error: None,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write<W: Write>(&self, format: OutputFormat, mut w: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(w),
            OutputFormat::Json => {
                w.write_all(self.to_json()?.as_bytes())?;
                w.write_all(b"\n")?;
                Ok(())
            }
        }
    }
}

/// Benchmark price of a contract, matched on `n_max` (and `δ` for two or
/// more rights).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePrice {
    pub n_max: usize,
    pub delta: f64,
    pub price: f64,
}

fn matches(reference: &ReferencePrice, n_max: usize, delta: f64) -> bool {
    reference.n_max == n_max && (n_max == 1 || (reference.delta - delta).abs() < 1e-9)
}

/// Replications of one sweep point pooled together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub method: Method,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub n_steps: usize,
    pub n_paths: Option<usize>,
    pub n_max: usize,
    pub delta: f64,
    /// Indices of the report rows that were pooled.
    pub rows: Vec<usize>,
    /// Mean over the priced replications.
    pub price: f64,
    /// Standard error of that mean.
    pub stderr: Option<f64>,
}

/// Pool the priced rows of each sweep point, in order of first appearance.
pub fn summarize(report: &SweepReport) -> Vec<PointSummary> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, row) in report.rows.iter().enumerate().filter(|(_, r)| r.price.is_some()) {
        match groups.iter_mut().find(|g| report.rows[g[0]].same_point(row)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
        .into_iter()
        .map(|rows| {
            let first = &report.rows[rows[0]];
            let prices: Vec<f64> = rows.iter().filter_map(|&i| report.rows[i].price).collect();
            let (price, se) = mean_stderr(&prices);
            PointSummary {
                method: first.method,
                lambda: first.lambda,
                p: first.p,
                n_steps: first.n_steps,
                n_paths: first.n_paths,
                n_max: first.n_max,
                delta: first.delta,
                stderr: if prices.len() >= 2 { Some(se) } else { first.stderr },
                price,
                rows,
            }
        })
        .collect()
}

/// Signed relative error of one sweep point, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    /// Index into [`ConvergenceReport::points`].
    pub point: usize,
    pub reference: f64,
    pub price: f64,
    pub rel_error_pct: f64,
}

/// Prices along one swept axis with everything else fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    /// `"lambda"` or `"p"`.
    pub axis: String,
    /// Indices into [`ConvergenceReport::points`], in axis order.
    pub points: Vec<usize>,
    pub values: Vec<f64>,
    pub prices: Vec<f64>,
    /// Each price is at least the previous one minus one standard error of
    /// their difference (0 when the points carry no error).
    pub nondecreasing: bool,
}

/// Relative error at the lowest and highest penalty for matched `(λ, N, δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyComparison {
    pub lambda: f64,
    pub n_steps: usize,
    pub delta: f64,
    pub p_low: f64,
    pub p_high: f64,
    pub error_low_pct: f64,
    pub error_high_pct: f64,
    pub shrinks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConvergenceReport {
    pub points: Vec<PointSummary>,
    pub errors: Vec<PointError>,
    pub trends: Vec<TrendCheck>,
    pub penalty: Vec<PenaltyComparison>,
}

impl ConvergenceReport {
    pub fn monotone_in(&self, axis: &str) -> bool {
        self.trends.iter().filter(|t| t.axis == axis).all(|t| t.nondecreasing)
    }
}

/// Everything but the swept axis: (other axis, δ, N, M, n_max).
type GroupKey = (u64, u64, usize, Option<usize>, usize);

/// `100 (price - reference) / reference`.
pub fn relative_error_pct(price: f64, reference: f64) -> f64 {
    100.0 * (price - reference) / reference
}

/// Errors of the BSDE points against `references`, or, when that is
/// empty, against the benchmark points of the same report; plus
/// monotonicity in `λ` and `p` and the effect of the penalty on the error.
/// Replications are pooled first (see [`summarize`]).
pub fn convergence_report(report: &SweepReport, references: &[ReferencePrice]) -> ConvergenceReport {
    let points = summarize(report);
    let mut refs: Vec<ReferencePrice> = references.to_vec();
    if refs.is_empty() {
        for pt in points.iter().filter(|pt| pt.method != Method::Bsde) {
            refs.push(ReferencePrice {
                n_max: pt.n_max,
                delta: pt.delta,
                price: pt.price,
            });
        }
    }
    let bsde: Vec<usize> = (0..points.len()).filter(|&i| points[i].method == Method::Bsde).collect();

    let mut out = ConvergenceReport::default();
    for &i in &bsde {
        let pt = &points[i];
        if let Some(reference) = refs.iter().find(|x| matches(x, pt.n_max, pt.delta)).map(|x| x.price) {
            out.errors.push(PointError {
                point: i,
                reference,
                price: pt.price,
                rel_error_pct: relative_error_pct(pt.price, reference),
            });
        }
    }

    for axis in ["lambda", "p"] {
        let key_of = |pt: &PointSummary| -> GroupKey {
            let other = if axis == "lambda" { pt.p } else { pt.lambda };
            (
                other.unwrap_or_default().to_bits(),
                pt.delta.to_bits(),
                pt.n_steps,
                pt.n_paths,
                pt.n_max,
            )
        };
        let value_of = |pt: &PointSummary| if axis == "lambda" { pt.lambda } else { pt.p }.unwrap_or_default();
        let mut groups: Vec<(GroupKey, Vec<usize>)> = Vec::new();
        for &i in &bsde {
            let key = key_of(&points[i]);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(i),
                None => groups.push((key, vec![i])),
            }
        }
        for (_, mut members) in groups.into_iter().filter(|(_, m)| m.len() >= 2) {
            members.sort_by(|&a, &b| value_of(&points[a]).total_cmp(&value_of(&points[b])));
            let pts: Vec<&PointSummary> = members.iter().map(|&i| &points[i]).collect();
            let nondecreasing = pts.windows(2).all(|w| {
                let se = |pt: &PointSummary| pt.stderr.filter(|s| s.is_finite()).unwrap_or(0.0);
                let tol = (se(w[0]).powi(2) + se(w[1]).powi(2)).sqrt();
                w[1].price >= w[0].price - tol
            });
            out.trends.push(TrendCheck {
                axis: axis.into(),
                values: pts.iter().map(|pt| value_of(pt)).collect(),
                prices: pts.iter().map(|pt| pt.price).collect(),
                points: members,
                nondecreasing,
            });
        }
    }

    let error_of = |point: usize| out.errors.iter().find(|e| e.point == point).map(|e| e.rel_error_pct);
    let mut penalty = Vec::new();
    for t in out.trends.iter().filter(|t| t.axis == "p") {
        let (lo, hi) = (t.points[0], *t.points.last().unwrap());
        if let (Some(err_lo), Some(err_hi)) = (error_of(lo), error_of(hi)) {
            let pt = &points[lo];
            penalty.push(PenaltyComparison {
                lambda: pt.lambda.unwrap_or_default(),
                n_steps: pt.n_steps,
                delta: pt.delta,
                p_low: t.values[0],
                p_high: *t.values.last().unwrap(),
                error_low_pct: err_lo,
                error_high_pct: err_hi,
                shrinks: err_hi.abs() <= err_lo.abs(),
            });
        }
    }
    out.penalty = penalty;
    out.points = points;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_examples() {
        assert!(stability_check(5.0, 5.0, 1.0 / 320.0).passes());
        assert!((stability_check(5.0, 5.0, 1.0 / 320.0).ratio - 0.390625).abs() < 1e-12);
        let d = stability_check(5.0, 10.0, 1.0 / 20.0);
        assert!(!d.passes());
        assert!((d.ratio - 25.0).abs() < 1e-12);
        assert!(stability_check(3.0, 5.0, 1.0 / 20.0).multi_jump);
        assert!(!stability_check(3.0, 5.0, 1.0 / 40.0).multi_jump);
        assert!(stability_check_with(5.0, 5.0, 1.0 / 320.0, 0.1).unstable);
    }

    #[test]
    fn table_grids_have_expected_sizes() {
        assert_eq!(ExperimentSpec::american_table().grid().len(), 15);
        assert_eq!(ExperimentSpec::swing_table().grid().len(), 18);
        let empty = ExperimentSpec {
            lambdas: vec![],
            ..ExperimentSpec::american_table()
        };
        assert!(empty.grid().is_empty());
        assert!(run_experiment(&empty).unwrap().rows.is_empty());
    }

    #[test]
    fn single_right_ignores_delay_list() {
        let spec = ExperimentSpec {
            n_max: vec![1, 2],
            deltas: vec![0.1, 0.2],
            ..ExperimentSpec::default()
        };
        let g = spec.grid();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].delta, 0.0);
    }

    #[test]
    fn config_text_and_precedence() {
        let mut spec = ExperimentSpec::default();
        spec.apply_config("# sweep\nmethod = iterative\nlambda = 3, 4,5\nsteps=40\nnmax = 2 # two rights\ndelay = 0.1\n")
            .unwrap();
        spec.apply("steps", "80").unwrap();
        assert_eq!(spec.method, Method::Iterative);
        assert_eq!(spec.lambdas, vec![3.0, 4.0, 5.0]);
        assert_eq!(spec.steps, vec![80]);
        assert_eq!(spec.n_max, vec![2]);

        let err = ExperimentSpec::default().apply_config("lambda = 3\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        assert!(ExperimentSpec::default().apply_config("lambda 3").is_err());
        assert!(ExperimentSpec::default().apply("method", "pde").is_err());
    }

    #[test]
    fn relative_error_examples() {
        assert!((relative_error_pct(18.80, 19.27) - (-2.439)).abs() < 1e-3);
        assert_eq!(format!("{:.2}", relative_error_pct(18.80, 19.27)), "-2.44");
        assert_eq!(relative_error_pct(19.27, 19.27), 0.0);
    }

    fn row(lambda: f64, p: f64, delta: f64, price: f64) -> SweepRow {
        let point = GridPoint {
            lambda: Some(lambda),
            p: Some(p),
            n_steps: 160,
            n_paths: Some(DESK_PATHS),
            n_max: 2,
            delta,
        };
        let mut r = SweepRow::pending(Method::Bsde, &point, 1);
        r.price = Some(price);
        r
    }

    #[test]
    fn reference_swing_grid_trends() {
        // (δ, p, prices for λ = 3, 4, 5), benchmark prices per δ
        let table = [
            (0.1, 5.0, [18.80, 18.95, 19.00]),
            (0.1, 10.0, [19.16, 19.24, 19.27]),
            (0.2, 5.0, [18.23, 18.37, 18.43]),
            (0.2, 10.0, [18.59, 18.65, 18.69]),
            (0.3, 5.0, [17.62, 17.76, 17.81]),
            (0.3, 10.0, [17.99, 18.04, 18.05]),
        ];
        let refs = [(0.1, 19.27), (0.2, 18.77), (0.3, 18.21)].map(|(delta, price)| ReferencePrice {
            n_max: 2,
            delta,
            price,
        });
        let mut report = SweepReport::default();
        for (delta, p, prices) in table {
            for (lambda, price) in [3.0, 4.0, 5.0].into_iter().zip(prices) {
                report.rows.push(row(lambda, p, delta, price));
            }
        }
        let c = convergence_report(&report, &refs);
        assert_eq!(c.errors.len(), 18);
        assert!((c.errors[0].rel_error_pct - (-2.44)).abs() < 5e-3);
        assert!(c.monotone_in("lambda") && c.monotone_in("p"));
        assert_eq!(c.penalty.len(), 9);
        assert!(c.penalty.iter().all(|x| x.shrinks));
    }

    #[test]
    fn references_default_to_benchmark_rows() {
        let mut report = SweepReport::default();
        report.rows.push(row(3.0, 5.0, 0.1, 18.0));
        let mut bench = SweepRow::pending(
            Method::Iterative,
            &GridPoint {
                lambda: None,
                p: None,
                n_steps: 200,
                n_paths: Some(1000),
                n_max: 2,
                delta: 0.1,
            },
            1,
        );
        bench.price = Some(20.0);
        report.rows.push(bench);
        let c = convergence_report(&report, &[]);
        assert_eq!(c.errors.len(), 1);
        assert!((c.errors[0].rel_error_pct + 10.0).abs() < 1e-12);
    }

    #[test]
    fn decreasing_prices_beyond_error_fail_the_trend() {
        let mut report = SweepReport::default();
        let mut a = row(3.0, 5.0, 0.1, 19.0);
        let mut b = row(4.0, 5.0, 0.1, 18.9);
        a.stderr = Some(0.05);
        b.stderr = Some(0.05);
        report.rows.extend([a.clone(), b.clone()]);
        assert!(!convergence_report(&report, &[]).monotone_in("lambda"));
        b.price = Some(18.95);
        report.rows = vec![a, b];
        assert!(convergence_report(&report, &[]).monotone_in("lambda"));
    }

    #[test]
    fn binomial_sweep_runs_once_per_step_count() {
        let spec = ExperimentSpec {
            method: Method::Binomial,
            steps: vec![50, 100],
            ..ExperimentSpec::default()
        };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.replication == 0 && r.stderr.is_none()));
    }

    #[test]
    fn failing_rows_are_recorded() {
        let spec = ExperimentSpec {
            n_max: vec![2],
            deltas: vec![0.013],
            steps: vec![10],
            paths: vec![100],
            reps: 1,
            ..ExperimentSpec::default()
        };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].price.is_none());
        assert!(report.rows[0].error.as_deref().unwrap().contains("delta"));
    }

    #[test]
    fn one_row_per_replication_with_shared_seeds() {
        let spec = ExperimentSpec {
            penalties: vec![2.0, 5.0],
            steps: vec![10],
            paths: vec![500],
            reps: 3,
            ..ExperimentSpec::default()
        };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.rows.len(), 6);
        let seeds: Vec<u64> = report.rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds[..3], seeds[3..]);
        assert_eq!(seeds[0], spec.seed);
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
        // every replication of a point carries the same spread
        assert!(report.rows[..3].iter().all(|r| r.stderr == report.rows[0].stderr));

        let points = summarize(&report);
        assert_eq!(points.len(), 2);
        assert_eq!(points[1].rows, vec![3, 4, 5]);
        let mean = report.rows[..3].iter().map(|r| r.price.unwrap()).sum::<f64>() / 3.0;
        assert!((points[0].price - mean).abs() < 1e-12);
        let se = points[0].stderr.unwrap();
        assert!((se - report.rows[0].stderr.unwrap() / 3f64.sqrt()).abs() < 1e-12);

        let again = run_experiment(&spec).unwrap();
        for (a, b) in report.rows.iter().zip(&again.rows) {
            assert_eq!(a.price.unwrap().to_bits(), b.price.unwrap().to_bits());
        }
    }

    fn arb_row() -> impl proptest::strategy::Strategy<Value = SweepRow> {
        use proptest::prelude::*;
        let float = prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3f64..1e3];
        (
            prop_oneof![Just(Method::Bsde), Just(Method::Iterative), Just(Method::Binomial)],
            proptest::option::of(float.clone()),
            proptest::option::of(float.clone()),
            (any::<usize>(), proptest::option::of(any::<usize>()), any::<usize>(), float.clone(), any::<u64>()),
            (proptest::option::of(float.clone()), proptest::option::of(float.clone()), float.clone(), proptest::option::of(float)),
        )
            .prop_map(|(method, lambda, p, (n_steps, n_paths, n_max, delta, seed), (price, stderr, wall_ms, mj))| {
                let point = GridPoint {
                    lambda,
                    p,
                    n_steps,
                    n_paths,
                    n_max,
                    delta,
                };
                let mut row = SweepRow::pending(method, &point, seed);
                row.price = price;
                row.stderr = stderr;
                row.wall_ms = wall_ms;
                row.multi_jump_frac = mj;
                row
            })
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_is_lossless(rows in proptest::collection::vec(arb_row(), 0..8)) {
            let report = SweepReport { rows };
            let mut buf = Vec::new();
            report.write_csv(&mut buf).unwrap();
            let back = SweepReport::read_csv(buf.as_slice()).unwrap();
            proptest::prop_assert_eq!(back, report);
        }
    }
}
