//! Reliability analysis for window-observed recurrent events with
//! time-varying exposure.
//!
//! Events from each unit follow a nonhomogeneous Poisson process with
//! intensity `λ₀(t)·x_i(t)`, where `x_i(t)` is the unit's daily exposure
//! (thousands of miles per day, constant within a calendar month) and
//! `λ₀` is a baseline intensity that is either parametric
//! (Musa-Okumoto, Gompertz, Weibull) or a monotone I-spline expansion.
//!
//! - [`dataset`]: calendar, unit histories, validation and summaries.
//! - [`models`]: baseline cumulative intensities and spline bases.
//! - [`estimation`]: likelihoods, constrained ML fits, AIC knot selection.
//! - [`inference`]: fractional-random-weight bootstrap and confidence bands.
//! - [`frailty`]: gamma frailty marginal likelihood and heterogeneity test.
//! - [`simulation`]: event generation and the Monte Carlo scenario study.
//! - [`fixtures`]: deterministic fleets with prescribed totals.

pub mod dataset;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod frailty;
pub mod inference;
pub mod models;
pub mod rng;
pub mod simulation;

pub use dataset::{Calendar, Fleet, FleetSummary, UnitHistory};
pub use error::{Error, Result};
pub use estimation::{FitResult, WeightVector};
pub use models::{BcifModel, ParametricFamily, ParametricModel, SplineBasis, SplineModel};
