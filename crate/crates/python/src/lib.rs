//! Python bindings: parameter classes, the BSDE pricer, the benchmarks and
//! the sweep harness. Reports come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use swing_bsde::benchmark::{self, IterativeOptions, ValueConvention};
use swing_bsde::bsde::{self, JumpEstimator, SolverOptions};
use swing_bsde::harness::{self, ExperimentSpec};
use swing_bsde::{Error, MarketParams, SchemeParams, SwingContract};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::Config { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn report_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Black–Scholes market of the put.
#[pyclass(name = "MarketParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyMarket(MarketParams);

#[pymethods]
impl PyMarket {
    #[new]
    #[pyo3(signature = (rate=0.05, sigma=0.3, spot=100.0, strike=100.0, maturity=1.0))]
    fn new(rate: f64, sigma: f64, spot: f64, strike: f64, maturity: f64) -> PyResult<Self> {
        MarketParams::new(rate, sigma, spot, strike, maturity).map(Self).map_err(to_py)
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.0.rate
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn spot(&self) -> f64 {
        self.0.spot
    }
    #[getter]
    fn strike(&self) -> f64 {
        self.0.strike
    }
    #[getter]
    fn maturity(&self) -> f64 {
        self.0.maturity
    }

    fn payoff(&self, s: f64) -> f64 {
        self.0.payoff(s)
    }

    fn __repr__(&self) -> String {
        format!(
            "MarketParams(rate={}, sigma={}, spot={}, strike={}, maturity={})",
            self.0.rate, self.0.sigma, self.0.spot, self.0.strike, self.0.maturity
        )
    }
}

/// Exercise rights and refraction delay.
#[pyclass(name = "SwingContract", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyContract(SwingContract);

#[pymethods]
impl PyContract {
    #[new]
    #[pyo3(signature = (n_max=1, delta=0.0))]
    fn new(n_max: usize, delta: f64) -> PyResult<Self> {
        SwingContract::new(n_max, delta).map(Self).map_err(to_py)
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.0.n_max
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    fn gain(&self, market: &PyMarket, s: f64, q: u32, theta: f64) -> f64 {
        self.0.gain(&market.0, s, q, theta)
    }

    fn __repr__(&self) -> String {
        format!("SwingContract(n_max={}, delta={})", self.0.n_max, self.0.delta)
    }
}

/// Penalization and discretization settings.
#[pyclass(name = "SchemeParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyScheme(SchemeParams);

#[pymethods]
impl PyScheme {
    #[new]
    #[pyo3(signature = (lambda_, penalty, n_steps, n_paths, seed=1))]
    fn new(lambda_: f64, penalty: f64, n_steps: usize, n_paths: usize, seed: u64) -> PyResult<Self> {
        SchemeParams::new(lambda_, penalty, n_steps, n_paths, seed).map(Self).map_err(to_py)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda
    }
    #[getter]
    fn penalty(&self) -> f64 {
        self.0.penalty
    }
    #[getter]
    fn n_steps(&self) -> usize {
        self.0.n_steps
    }
    #[getter]
    fn n_paths(&self) -> usize {
        self.0.n_paths
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "SchemeParams(lambda_={}, penalty={}, n_steps={}, n_paths={}, seed={})",
            self.0.lambda, self.0.penalty, self.0.n_steps, self.0.n_paths, self.0.seed
        )
    }
}

fn estimator(name: &str) -> PyResult<JumpEstimator> {
    match name {
        "conditioned" => Ok(JumpEstimator::Conditioned),
        "compensated" => Ok(JumpEstimator::Compensated),
        other => Err(PyValueError::new_err(format!("unknown jump estimator `{other}`"))),
    }
}

/// Simulate and price with the penalized BSDE scheme; returns the report dict.
#[pyfunction]
#[pyo3(signature = (market, contract, scheme, jump_estimator="conditioned"))]
fn price_swing<'py>(
    py: Python<'py>,
    market: &PyMarket,
    contract: &PyContract,
    scheme: &PyScheme,
    jump_estimator: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let options = SolverOptions {
        jump_estimator: estimator(jump_estimator)?,
        ..SolverOptions::default()
    };
    let (m, c, s) = (market.0, contract.0, scheme.0);
    let report = py.detach(move || bsde::simulate_and_price(&m, &c, &s, &options)).map_err(to_py)?;
    report_to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (market, steps=2000))]
fn binomial_american_put(market: &PyMarket, steps: usize) -> PyResult<f64> {
    benchmark::binomial_american_put(&market.0, steps).map_err(to_py)
}

/// Regression benchmark over GBM paths (prices for every number of rights).
#[pyfunction]
#[pyo3(signature = (market, contract, n_steps, n_paths, seed=1, convention="realized"))]
fn iterative_swing_price<'py>(
    py: Python<'py>,
    market: &PyMarket,
    contract: &PyContract,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    convention: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let convention = match convention {
        "realized" => ValueConvention::Realized,
        "estimated" => ValueConvention::Estimated,
        other => return Err(PyValueError::new_err(format!("unknown convention `{other}`"))),
    };
    let options = IterativeOptions {
        convention,
        ..IterativeOptions::default()
    };
    let (m, c) = (market.0, contract.0);
    let report = py
        .detach(move || benchmark::simulate_and_iterate(&m, &c, n_steps, n_paths, seed, &options))
        .map_err(to_py)?;
    report_to_py(py, &report)
}

#[pyfunction]
fn payoff(s: f64, strike: f64) -> f64 {
    swing_bsde::payoff(s, strike)
}

#[pyfunction]
fn intervention_gain(s: f64, q: u32, theta: f64, strike: f64, contract: &PyContract) -> f64 {
    swing_bsde::intervention_gain(s, q, theta, strike, &contract.0)
}

#[pyfunction]
#[pyo3(signature = (f_value, kappa_value, v, penalty, lambda_))]
fn penalized_driver(f_value: f64, kappa_value: f64, v: f64, penalty: f64, lambda_: f64) -> f64 {
    swing_bsde::penalized_driver(f_value, kappa_value, v, penalty, lambda_)
}

#[pyfunction]
#[pyo3(signature = (lambda_, penalty, dt, threshold=harness::STABILITY_THRESHOLD))]
fn stability_check<'py>(py: Python<'py>, lambda_: f64, penalty: f64, dt: f64, threshold: f64) -> PyResult<Bound<'py, PyDict>> {
    let d = harness::stability_check_with(lambda_, penalty, dt, threshold);
    let out = PyDict::new(py);
    out.set_item("ratio", d.ratio)?;
    out.set_item("jump_probability", d.jump_probability)?;
    out.set_item("unstable", d.unstable)?;
    out.set_item("multi_jump", d.multi_jump)?;
    Ok(out)
}

/// Run a sweep described in the flat `key = value` config format.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let mut spec = ExperimentSpec::default();
    spec.apply_config(config).map_err(to_py)?;
    let report = py.detach(move || harness::run_experiment(&spec)).map_err(to_py)?;
    report_to_py(py, &report)
}

#[pymodule]
fn swing_bsde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarket>()?;
    m.add_class::<PyContract>()?;
    m.add_class::<PyScheme>()?;
    m.add_function(wrap_pyfunction!(price_swing, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_american_put, m)?)?;
    m.add_function(wrap_pyfunction!(iterative_swing_price, m)?)?;
    m.add_function(wrap_pyfunction!(payoff, m)?)?;
    m.add_function(wrap_pyfunction!(intervention_gain, m)?)?;
    m.add_function(wrap_pyfunction!(penalized_driver, m)?)?;
    m.add_function(wrap_pyfunction!(stability_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
