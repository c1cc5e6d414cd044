//! Window-observed recurrent events with month-wise constant exposure.
//!
//! Time is measured in days since the start of the study. Month `l` covers
//! the half-open interval `(τ_{l−1}, τ_l]` with `τ_0 = 0`, so an event on a
//! boundary day belongs to the earlier month. Exposure `x_i(t)` is the
//! unit's daily driven distance (thousands of miles per day) in the month
//! holding `t`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::BcifModel;

/// Month end days τ_1 < … < τ_{n_τ} = τ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    month_end_days: Vec<u32>,
}

impl Calendar {
    pub fn new(month_end_days: Vec<u32>) -> Result<Self> {
        let cal = Calendar { month_end_days };
        let problems = cal.problems();
        if let Some(p) = problems.into_iter().next() {
            return Err(Error::InvalidData(p));
        }
        Ok(cal)
    }

    /// Skips the ordering checks; use [`validate`] to inspect the result.
    pub fn new_unvalidated(month_end_days: Vec<u32>) -> Self {
        Calendar { month_end_days }
    }

    /// The 24-month, 730-day calendar starting on December 1, 2017.
    pub fn two_year_study() -> Self {
        const LENGTHS: [u32; 12] = [31, 31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30];
        let mut ends = Vec::with_capacity(24);
        let mut day = 0;
        for len in LENGTHS.iter().chain(LENGTHS.iter()) {
            day += len;
            ends.push(day);
        }
        Calendar {
            month_end_days: ends,
        }
    }

    /// Equal-length months, mostly for tests and synthetic data.
    pub fn uniform(n_months: usize, days_per_month: u32) -> Result<Self> {
        Calendar::new((1..=n_months as u32).map(|l| l * days_per_month).collect())
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.month_end_days.is_empty() {
            out.push("calendar has no months".to_string());
        }
        let mut prev = 0;
        for (l, &end) in self.month_end_days.iter().enumerate() {
            if end <= prev {
                out.push(format!(
                    "month {} ends on day {end}, not after the previous boundary {prev}",
                    l + 1
                ));
            }
            prev = end;
        }
        out
    }

    pub fn month_end_days(&self) -> &[u32] {
        &self.month_end_days
    }

    pub fn n_months(&self) -> usize {
        self.month_end_days.len()
    }

    /// Total follow-up τ.
    pub fn tau(&self) -> f64 {
        self.month_end_days.last().copied().unwrap_or(0) as f64
    }

    /// (τ_{l−1}, τ_l) for 0-based month index l.
    pub fn bounds(&self, l: usize) -> (f64, f64) {
        let lo = if l == 0 { 0 } else { self.month_end_days[l - 1] };
        (lo as f64, self.month_end_days[l] as f64)
    }

    pub fn days_in_month(&self, l: usize) -> f64 {
        let (lo, hi) = self.bounds(l);
        hi - lo
    }

    /// The 0-based month l with τ_{l−1} < t ≤ τ_l.
    pub fn month_of(&self, t: f64) -> Result<usize> {
        if !(t > 0.0 && t <= self.tau()) {
            return Err(domain(format!("day {t} lies outside (0, {}]", self.tau())));
        }
        Ok(self.month_end_days.partition_point(|&e| (e as f64) < t))
    }
}

/// One unit's event days and monthly daily exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitHistory {
    unit_id: String,
    event_days: Vec<f64>,
    daily_kmiles: Vec<f64>,
}

impl UnitHistory {
    /// Event days are sorted on construction; ties are kept.
    pub fn new(unit_id: impl Into<String>, mut event_days: Vec<f64>, daily_kmiles: Vec<f64>) -> Self {
        event_days.sort_by(|a, b| a.total_cmp(b));
        UnitHistory {
            unit_id: unit_id.into(),
            event_days,
            daily_kmiles,
        }
    }

    pub fn unit_id(&self) -> &str {
        &self.unit_id
    }

    pub fn event_days(&self) -> &[f64] {
        &self.event_days
    }

    pub fn daily_kmiles(&self) -> &[f64] {
        &self.daily_kmiles
    }

    pub fn n_events(&self) -> usize {
        self.event_days.len()
    }

    /// Same exposure, different events.
    pub fn with_events(&self, event_days: Vec<f64>) -> Self {
        UnitHistory::new(self.unit_id.clone(), event_days, self.daily_kmiles.clone())
    }

    /// Σ_l x_l (τ_l − τ_{l−1}).
    pub fn total_kmiles(&self, cal: &Calendar) -> f64 {
        self.daily_kmiles
            .iter()
            .take(cal.n_months())
            .enumerate()
            .map(|(l, x)| x * cal.days_in_month(l))
            .sum()
    }

    pub fn active_months(&self) -> usize {
        self.daily_kmiles.iter().filter(|&&x| x > 0.0).count()
    }
}

/// x_i(t).
pub fn exposure_at(unit: &UnitHistory, cal: &Calendar, t: f64) -> Result<f64> {
    let l = cal.month_of(t)?;
    unit.daily_kmiles
        .get(l)
        .copied()
        .ok_or_else(|| domain(format!("unit {} has no exposure for month {}", unit.unit_id, l + 1)))
}

/// Unit CIF ∫₀ᵗ λ₀(s) x_i(s) ds, summed exactly month by month.
pub fn cif(unit: &UnitHistory, cal: &Calendar, model: &BcifModel, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= cal.tau()) {
        return Err(domain(format!("CIF evaluated at t = {t}, outside [0, {}]", cal.tau())));
    }
    let mut total = 0.0;
    for (l, &x) in unit.daily_kmiles.iter().enumerate().take(cal.n_months()) {
        let (lo, hi) = cal.bounds(l);
        if lo >= t {
            break;
        }
        if x == 0.0 {
            continue;
        }
        total += x * (model.bcif(hi.min(t))? - model.bcif(lo)?);
    }
    Ok(total)
}

/// A fleet of units sharing one calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    calendar: Calendar,
    units: Vec<UnitHistory>,
}

impl Fleet {
    /// Builds a fleet, rejecting it if [`validate`] reports anything.
    pub fn new(calendar: Calendar, units: Vec<UnitHistory>) -> Result<Self> {
        let fleet = Fleet { calendar, units };
        let violations = validate(&fleet);
        if !violations.is_empty() {
            let msg = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidData(msg));
        }
        Ok(fleet)
    }

    pub fn new_unvalidated(calendar: Calendar, units: Vec<UnitHistory>) -> Self {
        Fleet { calendar, units }
    }

    pub fn calendar(&self) -> &Calendar {
        &self.calendar
    }

    pub fn units(&self) -> &[UnitHistory] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn tau(&self) -> f64 {
        self.calendar.tau()
    }

    pub fn n_events(&self) -> usize {
        self.units.iter().map(|u| u.n_events()).sum()
    }

    pub fn total_kmiles(&self) -> f64 {
        self.units.iter().map(|u| u.total_kmiles(&self.calendar)).sum()
    }

    /// All event days, sorted.
    pub fn pooled_event_days(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.units.iter().flat_map(|u| u.event_days.iter().copied()).collect();
        all.sort_by(|a, b| a.total_cmp(b));
        all
    }

    /// Same calendar, different units (used for resampling).
    pub fn with_units(&self, units: Vec<UnitHistory>) -> Result<Self> {
        Fleet::new(self.calendar.clone(), units)
    }
}

/// Headline counts for a fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSummary {
    pub n_vehicles: usize,
    pub active_months: usize,
    pub active_months_per_vehicle: f64,
    pub n_events: usize,
    pub total_kmiles: f64,
    pub events_per_kmile: f64,
}

impl fmt::Display for FleetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vehicles:                  {}", self.n_vehicles)?;
        writeln!(f, "active months:             {}", self.active_months)?;
        writeln!(f, "active months per vehicle: {:.3}", self.active_months_per_vehicle)?;
        writeln!(f, "events:                    {}", self.n_events)?;
        writeln!(f, "total k-miles:             {:.3}", self.total_kmiles)?;
        write!(f, "events per k-mile:         {:.3}", self.events_per_kmile)
    }
}

pub fn summarize(fleet: &Fleet) -> FleetSummary {
    let n_vehicles = fleet.n_units();
    let active_months: usize = fleet.units.iter().map(|u| u.active_months()).sum();
    let n_events = fleet.n_events();
    let total_kmiles = fleet.total_kmiles();
    FleetSummary {
        n_vehicles,
        active_months,
        active_months_per_vehicle: if n_vehicles == 0 {
            0.0
        } else {
            active_months as f64 / n_vehicles as f64
        },
        n_events,
        total_kmiles,
        events_per_kmile: if total_kmiles > 0.0 {
            n_events as f64 / total_kmiles
        } else {
            0.0
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyCalendar,
    NonIncreasingCalendar,
    NoUnits,
    ExposureLengthMismatch,
    NegativeExposure,
    EventOutsideFollowUp,
    EventInInactiveWindow,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::EmptyCalendar => "empty calendar",
            ViolationKind::NonIncreasingCalendar => "non-increasing calendar",
            ViolationKind::NoUnits => "no units",
            ViolationKind::ExposureLengthMismatch => "exposure length mismatch",
            ViolationKind::NegativeExposure => "negative exposure",
            ViolationKind::EventOutsideFollowUp => "event outside follow-up",
            ViolationKind::EventInInactiveWindow => "event in inactive window",
        }
    }
}

/// One broken invariant, located by unit and detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub unit_id: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.unit_id {
            Some(id) => write!(f, "{} (unit {id}): {}", self.kind.label(), self.detail),
            None => write!(f, "{}: {}", self.kind.label(), self.detail),
        }
    }
}

/// Every violated invariant; empty iff the fleet is valid.
pub fn validate(fleet: &Fleet) -> Vec<Violation> {
    let cal = &fleet.calendar;
    let mut out = Vec::new();
    let bare = |kind, detail: String| Violation {
        kind,
        unit_id: None,
        detail,
    };
    if cal.month_end_days.is_empty() {
        out.push(bare(ViolationKind::EmptyCalendar, "calendar has no months".into()));
    }
    for p in cal.problems().into_iter().filter(|p| !p.starts_with("calendar has no")) {
        out.push(bare(ViolationKind::NonIncreasingCalendar, p));
    }
    if fleet.units.is_empty() {
        out.push(bare(ViolationKind::NoUnits, "fleet has no units".into()));
    }
    let calendar_ok = cal.problems().is_empty();
    let tau = cal.tau();
    for unit in &fleet.units {
        let here = |kind, detail: String| Violation {
            kind,
            unit_id: Some(unit.unit_id.clone()),
            detail,
        };
        if unit.daily_kmiles.len() != cal.n_months() {
            out.push(here(
                ViolationKind::ExposureLengthMismatch,
                format!(
                    "{} monthly exposures for a {}-month calendar",
                    unit.daily_kmiles.len(),
                    cal.n_months()
                ),
            ));
        }
        for (l, &x) in unit.daily_kmiles.iter().enumerate() {
            if !(x >= 0.0) || !x.is_finite() {
                out.push(here(
                    ViolationKind::NegativeExposure,
                    format!("month {} has exposure {x}", l + 1),
                ));
            }
        }
        for &t in &unit.event_days {
            if !(t > 0.0 && t <= tau) {
                out.push(here(
                    ViolationKind::EventOutsideFollowUp,
                    format!("event on day {t} is outside (0, {tau}]"),
                ));
                continue;
            }
            if !calendar_ok {
                continue;
            }
            let l = cal.month_of(t).expect("checked range");
            match unit.daily_kmiles.get(l) {
                Some(&x) if x > 0.0 => {}
                _ => out.push(here(
                    ViolationKind::EventInInactiveWindow,
                    format!("event on day {t} falls in month {} with no exposure", l + 1),
                )),
            }
        }
    }
    out
}
