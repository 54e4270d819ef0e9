//! Swing option pricing with penalized BSDEs with constrained jumps.
//!
//! The engine simulates the spot together with an auxiliary Poisson process
//! whose jumps play the role of exercise decisions, then solves the
//! penalized backward scheme by stratified least-squares Monte Carlo.
//! A CRR binomial tree and a rights-indexed regression pricer serve as
//! independent benchmarks; [`harness`] drives parameter sweeps.

pub mod benchmark;
pub mod bsde;
pub mod error;
pub mod harness;
pub mod model;
pub mod regression;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
pub use model::{intervention_gain, payoff, penalized_driver, MarketParams, SchemeParams, SwingContract, TimeGrid};
