//! Deterministic fleets with prescribed totals, for tests, examples and
//! benchmarks.

use crate::dataset::{Calendar, Fleet, UnitHistory};
use crate::error::{domain, Result};

/// A fleet on the two-year calendar with exactly `n_vehicles` units,
/// `active_months` unit-months of driving in contiguous runs, `n_events`
/// events on integer days inside active months, and `total_kmiles` of
/// driving.
pub fn fleet_with_totals(n_vehicles: usize, active_months: usize, n_events: usize, total_kmiles: f64) -> Result<Fleet> {
    let cal = Calendar::two_year_study();
    let n_months = cal.n_months();
    if n_vehicles == 0 || active_months < n_vehicles || active_months > n_vehicles * n_months {
        return Err(domain(format!(
            "cannot spread {active_months} active months over {n_vehicles} vehicles"
        )));
    }
    if !(total_kmiles > 0.0) {
        return Err(domain("total k-miles must be positive"));
    }
    let base = active_months / n_vehicles;
    let extra = active_months % n_vehicles;
    let runs: Vec<(usize, usize)> = (0..n_vehicles)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let start = (i * 7) % (n_months - len + 1);
            (start, len)
        })
        .collect();
    // driving proportional to days, so every active day carries equal distance
    let active_days: f64 = runs
        .iter()
        .map(|&(s, len)| (s..s + len).map(|l| cal.days_in_month(l)).sum::<f64>())
        .sum();
    let rate = total_kmiles / active_days;

    let slots: Vec<(usize, usize)> = runs
        .iter()
        .enumerate()
        .flat_map(|(i, &(s, len))| (s..s + len).map(move |l| (i, l)))
        .collect();
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); n_vehicles];
    for k in 0..n_events {
        let (i, l) = slots[(k * 37) % slots.len()];
        let (lo, hi) = cal.bounds(l);
        let span = (hi - lo) as usize;
        events[i].push(lo + 1.0 + ((k * 11) % span) as f64);
    }
    let units = runs
        .iter()
        .zip(events)
        .enumerate()
        .map(|(i, (&(s, len), ev))| {
            let x = (0..n_months).map(|l| if l >= s && l < s + len { rate } else { 0.0 }).collect();
            UnitHistory::new(format!("v{i:03}"), ev, x)
        })
        .collect();
    Fleet::new(cal, units)
}
