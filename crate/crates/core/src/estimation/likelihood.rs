//! NHPP log-likelihood for window-observed events with step exposure:
//!
//! ```text
//! l(θ) = Σ_i w_i { Σ_j [log x_i(t_ij) + log λ₀(t_ij)] − Σ_l x_il [Λ₀(τ_l) − Λ₀(τ_{l−1})] }
//! ```
//!
//! with every `w_i = 1` for the plain likelihood.

use serde::{Deserialize, Serialize};

use crate::dataset::{Calendar, Fleet, UnitHistory};
use crate::error::{domain, Error, Result};
use crate::models::BcifModel;

/// Per-unit non-negative likelihood weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(domain(format!("weight {i} is {w}; weights must be finite and >= 0")));
        }
        Ok(WeightVector(weights))
    }

    pub fn ones(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Λ₀ at τ_0 = 0, τ_1, …, τ_{n_τ}.
pub(crate) fn month_end_bcif(cal: &Calendar, model: &BcifModel) -> Result<Vec<f64>> {
    if let BcifModel::Spline(s) = model {
        if (s.tau() - cal.tau()).abs() > 1e-9 {
            return Err(domain(format!(
                "spline boundary {} does not match follow-up tau {}",
                s.tau(),
                cal.tau()
            )));
        }
    }
    let mut out = Vec::with_capacity(cal.n_months() + 1);
    out.push(0.0);
    for &end in cal.month_end_days() {
        out.push(model.bcif(end as f64)?);
    }
    Ok(out)
}

/// Unit contribution; −∞ when λ₀ vanishes at an event.
fn unit_loglik(unit: &UnitHistory, cal: &Calendar, model: &BcifModel, ends: &[f64]) -> Result<f64> {
    let mut events = 0.0;
    for &t in unit.event_days() {
        let l = cal.month_of(t)?;
        let x = unit.daily_kmiles()[l];
        let lam = model.bif_unchecked(t);
        if !(lam > 0.0) || !(x > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        events += x.ln() + lam.ln();
    }
    Ok(events - unit_exposure(unit, ends))
}

/// c_i = Σ_l x_il [Λ₀(τ_l) − Λ₀(τ_{l−1})].
pub(crate) fn unit_exposure(unit: &UnitHistory, ends: &[f64]) -> f64 {
    unit.daily_kmiles()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(l, &x)| x * (ends[l + 1] - ends[l]))
        .sum()
}

fn loglik_impl(fleet: &Fleet, model: &BcifModel, weights: Option<&[f64]>) -> Result<f64> {
    if let Some(w) = weights {
        if w.len() != fleet.n_units() {
            return Err(domain(format!(
                "{} weights for {} units",
                w.len(),
                fleet.n_units()
            )));
        }
    }
    let cal = fleet.calendar();
    let ends = month_end_bcif(cal, model)?;
    let mut total = 0.0;
    for (i, unit) in fleet.units().iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let li = unit_loglik(unit, cal, model, &ends)?;
        if li == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += w * li;
    }
    Ok(total)
}

/// Plain NHPP log-likelihood.
pub fn log_likelihood(fleet: &Fleet, model: &BcifModel) -> Result<f64> {
    loglik_impl(fleet, model, None)
}

/// Log-likelihood with each unit's event and exposure terms multiplied by w_i.
pub fn weighted_log_likelihood(fleet: &Fleet, model: &BcifModel, w: &WeightVector) -> Result<f64> {
    loglik_impl(fleet, model, Some(w.as_slice()))
}

/// Flattened events and month-aggregated exposure, for fast repeated
/// evaluation of parametric likelihoods.
#[derive(Debug, Clone)]
pub(crate) struct EventTable {
    /// (day, weight, weight · log x) for every event with non-zero weight.
    pub events: Vec<(f64, f64, f64)>,
    /// Σ_i w_i x_il per month.
    pub month_exposure: Vec<f64>,
    pub const_term: f64,
}

impl EventTable {
    pub fn new(fleet: &Fleet, weights: Option<&[f64]>) -> Result<Self> {
        let cal = fleet.calendar();
        let mut events = Vec::with_capacity(fleet.n_events());
        let mut month_exposure = vec![0.0; cal.n_months()];
        let mut const_term = 0.0;
        for (i, unit) in fleet.units().iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            for (l, &x) in unit.daily_kmiles().iter().enumerate() {
                month_exposure[l] += w * x;
            }
            for &t in unit.event_days() {
                let x = unit.daily_kmiles()[cal.month_of(t)?];
                let wl = w * x.ln();
                const_term += wl;
                events.push((t, w, wl));
            }
        }
        Ok(EventTable {
            events,
            month_exposure,
            const_term,
        })
    }

    pub fn weighted_events(&self) -> f64 {
        self.events.iter().map(|e| e.1).sum()
    }

    pub fn weighted_kmiles(&self, cal: &Calendar) -> f64 {
        self.month_exposure
            .iter()
            .enumerate()
            .map(|(l, x)| x * cal.days_in_month(l))
            .sum()
    }

    pub fn loglik(&self, cal: &Calendar, model: &BcifModel) -> f64 {
        let ends = match month_end_bcif(cal, model) {
            Ok(e) => e,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut total = self.const_term;
        for &(t, w, _) in &self.events {
            let lam = model.bif_unchecked(t);
            if !(lam > 0.0) {
                return f64::NEG_INFINITY;
            }
            total += w * lam.ln();
        }
        for (l, x) in self.month_exposure.iter().enumerate() {
            total -= x * (ends[l + 1] - ends[l]);
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}
