//! Likelihood evaluation and maximum-likelihood fitting.

mod fit;
mod likelihood;
pub mod optim;

pub use fit::{
    aic, fit_parametric, fit_parametric_with, fit_spline, homogeneous_init, select_spline,
    FitOptions, FitRecord, FitResult, SplineCandidates, SplineDesign, SplineObjective,
    DEFAULT_CANDIDATE_KNOTS, ZERO_THRESHOLD,
};
pub use likelihood::{log_likelihood, weighted_log_likelihood, WeightVector};
pub(crate) use likelihood::{month_end_bcif, unit_exposure};
