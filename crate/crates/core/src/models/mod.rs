//! Baseline cumulative intensity functions (BCIFs) and their derivatives.

pub mod parametric;
pub mod spline;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use parametric::{ParamDomain, ParametricFamily, ParametricModel};
pub use spline::{
    interior_knots, ispline_basis, mspline_basis, place_knots, SplineBasis, SplineModel,
};

/// A baseline cumulative intensity Λ₀(t) and intensity λ₀(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BcifModel {
    Parametric(ParametricModel),
    Spline(SplineModel),
}

impl BcifModel {
    /// Λ₀(t). Spline models reject t outside [0, τ]; parametric models
    /// accept any t ≥ 0.
    pub fn bcif(&self, t: f64) -> Result<f64> {
        match self {
            BcifModel::Parametric(m) => m.bcif(t),
            BcifModel::Spline(m) => m.bcif(t),
        }
    }

    /// λ₀(t) = dΛ₀/dt, always non-negative.
    pub fn bif(&self, t: f64) -> Result<f64> {
        match self {
            BcifModel::Parametric(m) => m.bif(t),
            BcifModel::Spline(m) => m.bif(t),
        }
    }

    pub(crate) fn bcif_unchecked(&self, t: f64) -> f64 {
        match self {
            BcifModel::Parametric(m) => m.bcif_unchecked(t),
            BcifModel::Spline(m) => m.bcif_unchecked(t),
        }
    }

    pub(crate) fn bif_unchecked(&self, t: f64) -> f64 {
        match self {
            BcifModel::Parametric(m) => m.bif_unchecked(t),
            BcifModel::Spline(m) => m.bif_unchecked(t),
        }
    }

    /// "musa-okumoto", "gompertz", "weibull" or "spline".
    pub fn kind(&self) -> &'static str {
        match self {
            BcifModel::Parametric(m) => m.family().name(),
            BcifModel::Spline(_) => "spline",
        }
    }

    /// θ for parametric models, β for splines.
    pub fn params(&self) -> &[f64] {
        match self {
            BcifModel::Parametric(m) => m.theta(),
            BcifModel::Spline(m) => m.coefficients(),
        }
    }
}

impl From<ParametricModel> for BcifModel {
    fn from(m: ParametricModel) -> Self {
        BcifModel::Parametric(m)
    }
}

impl From<SplineModel> for BcifModel {
    fn from(m: SplineModel) -> Self {
        BcifModel::Spline(m)
    }
}

/// Λ₀(t); see [`BcifModel::bcif`].
pub fn bcif_eval(model: &BcifModel, t: f64) -> Result<f64> {
    model.bcif(t)
}

/// λ₀(t); see [`BcifModel::bif`].
pub fn bif_eval(model: &BcifModel, t: f64) -> Result<f64> {
    model.bif(t)
}
