//! Window-observed NHPP event generation and the Monte Carlo study of the
//! spline estimator: relative RMSE curves, simultaneous-band coverage and
//! the rate at which bands accept a fitted parametric model.

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Calendar, Fleet, UnitHistory};
use crate::error::{domain, Error, Result};
use crate::estimation::{fit_parametric, SplineCandidates, DEFAULT_CANDIDATE_KNOTS};
use crate::inference::{bootstrap_from_candidates, calibrate_scb, day_grid, default_window, BootstrapOptions};
use crate::models::spline::DEFAULT_ORDER;
use crate::models::{BcifModel, ParametricFamily, SplineBasis, SplineModel};
use crate::rng::{derive_seed, rng_from};

/// Width, in days, below which the inverse-Λ₀ bisection stops.
pub const INVERSE_TOL: f64 = 1e-10;

/// Share of failed repeats above which a scenario run aborts.
pub const MAX_EXCLUDED_SHARE: f64 = 0.05;

fn invert_in_month(model: &BcifModel, lo: f64, hi: f64, target: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    while b - a > INVERSE_TOL {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if model.bcif_unchecked(mid) < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    // the upper end keeps the event inside the half-open month (lo, hi]
    b
}

/// Events of one unit under intensity u·λ₀(t)·x(t): Poisson counts per
/// month, placed by inverting Λ₀ within the month. `frailty` is the
/// multiplier u (1 for the plain NHPP).
pub fn simulate_unit_with_frailty(
    exposure: &[f64],
    cal: &Calendar,
    model: &BcifModel,
    frailty: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if exposure.len() != cal.n_months() {
        return Err(domain(format!(
            "{} exposure months for a {}-month calendar",
            exposure.len(),
            cal.n_months()
        )));
    }
    if !(frailty >= 0.0 && frailty.is_finite()) {
        return Err(domain(format!("frailty multiplier must be finite and >= 0, got {frailty}")));
    }
    if let BcifModel::Spline(s) = model {
        if (s.tau() - cal.tau()).abs() > 1e-9 {
            return Err(domain("spline boundary does not match the calendar"));
        }
    }
    let mut rng = rng_from(seed, &[]);
    let mut events = Vec::new();
    let mut prev = 0.0;
    for (l, &x) in exposure.iter().enumerate() {
        let (lo, hi) = cal.bounds(l);
        let end = model.bcif(hi)?;
        let start = prev;
        prev = end;
        let mean = frailty * x * (end - start);
        if !(mean > 0.0) {
            continue;
        }
        let count = Poisson::new(mean)
            .map_err(|e| domain(format!("Poisson mean {mean}: {e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..count {
            let u: f64 = rng.random();
            events.push(invert_in_month(model, lo, hi, start + u * (end - start)));
        }
    }
    events.sort_by(|a, b| a.total_cmp(b));
    Ok(events)
}

/// Events of one unit under the plain NHPP.
pub fn simulate_unit(exposure: &[f64], cal: &Calendar, model: &BcifModel, seed: u64) -> Result<Vec<f64>> {
    simulate_unit_with_frailty(exposure, cal, model, 1.0, seed)
}

/// Replaces every unit's events with a fresh draw from `model`.
pub fn simulate_fleet(pool: &Fleet, model: &BcifModel, seed: u64) -> Result<Fleet> {
    let units = pool
        .units()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let ev = simulate_unit(u.daily_kmiles(), pool.calendar(), model, derive_seed(seed, &[i as u64]))?;
            Ok(u.with_events(ev))
        })
        .collect::<Result<Vec<_>>>()?;
    pool.with_units(units)
}

/// As [`simulate_fleet`] with a Gamma(mean 1, variance φ) multiplier per unit.
pub fn simulate_fleet_with_frailty(pool: &Fleet, model: &BcifModel, phi: f64, seed: u64) -> Result<Fleet> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(domain(format!("frailty variance must be positive, got {phi}")));
    }
    let gamma = rand_distr::Gamma::new(1.0 / phi, phi).map_err(|e| domain(e.to_string()))?;
    let units = pool
        .units()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut rng = rng_from(seed, &[i as u64, 0]);
            let frailty = gamma.sample(&mut rng);
            let ev = simulate_unit_with_frailty(
                u.daily_kmiles(),
                pool.calendar(),
                model,
                frailty,
                derive_seed(seed, &[i as u64, 1]),
            )?;
            Ok(u.with_events(ev))
        })
        .collect::<Result<Vec<_>>>()?;
    pool.with_units(units)
}

/// n exposure histories drawn with replacement from the pool, events cleared.
pub fn resample_exposure(pool: &Fleet, n: usize, seed: u64) -> Result<Fleet> {
    if pool.n_units() == 0 {
        return Err(domain("exposure pool is empty"));
    }
    let mut rng = rng_from(seed, &[]);
    let units = (0..n)
        .map(|k| {
            let src = &pool.units()[rng.random_range(0..pool.n_units())];
            UnitHistory::new(format!("sim{k}"), vec![], src.daily_kmiles().to_vec())
        })
        .collect();
    pool.with_units(units)
}

/// Total k-miles of the synthetic pool.
pub const POOL_KMILES: f64 = 2710.136;
/// Units in the synthetic pool.
pub const POOL_UNITS: usize = 123;
/// Active unit-months in the synthetic pool.
pub const POOL_ACTIVE_MONTHS: usize = 1550;

/// A fixed synthetic exposure pool on the two-year calendar: 123 units
/// active for 1550 unit-months in contiguous runs (about 12.6 each), with
/// log-normal monthly driving scaled to 2710.136 k-miles in total.
pub fn synthetic_pool() -> Fleet {
    let cal = Calendar::two_year_study();
    let n_months = cal.n_months();
    let mut rng = rng_from(0x5EED_F1EE7, &[]);
    let mut lengths: Vec<usize> = (0..POOL_UNITS).map(|_| rng.random_range(3..=22)).collect();
    // nudge run lengths until they sum to the target
    let mut total: usize = lengths.iter().sum();
    let mut k = 0;
    while total != POOL_ACTIVE_MONTHS {
        let i = k % POOL_UNITS;
        if total < POOL_ACTIVE_MONTHS && lengths[i] < n_months {
            lengths[i] += 1;
            total += 1;
        } else if total > POOL_ACTIVE_MONTHS && lengths[i] > 1 {
            lengths[i] -= 1;
            total -= 1;
        }
        k += 1;
    }
    let level = LogNormal::new(0.0, 0.6).expect("valid log-normal");
    let wiggle = LogNormal::new(0.0, 0.3).expect("valid log-normal");
    let mut exposure: Vec<Vec<f64>> = lengths
        .iter()
        .map(|&len| {
            let start = rng.random_range(0..=n_months - len);
            let base: f64 = level.sample(&mut rng);
            (0..n_months)
                .map(|l| {
                    if l >= start && l < start + len {
                        base * wiggle.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let raw: f64 = exposure
        .iter()
        .map(|x| x.iter().enumerate().map(|(l, v)| v * cal.days_in_month(l)).sum::<f64>())
        .sum();
    let scale = POOL_KMILES / raw;
    for x in &mut exposure {
        for v in x.iter_mut() {
            *v *= scale;
        }
    }
    let units = exposure
        .into_iter()
        .enumerate()
        .map(|(i, x)| UnitHistory::new(format!("pool{i:03}"), vec![], x))
        .collect();
    Fleet::new(cal, units).expect("synthetic pool is valid")
}

/// The five-basis layout of the canonical truths: order 3, interior knots
/// at τ/3 and 2τ/3 on (0, 730].
pub fn canonical_basis() -> SplineBasis {
    let tau = 730.0;
    SplineBasis::new(DEFAULT_ORDER, vec![tau / 3.0, 2.0 * tau / 3.0], tau).expect("canonical layout is valid")
}

/// Coefficients of the three simulation truths.
pub const SCENARIO_COEFFICIENTS: [[f64; 5]; 3] = [
    [6.0, 16.0, 23.0, 11.0, 4.0],
    [8.0, 12.0, 28.0, 0.0, 12.0],
    [5.0, 25.0, 0.0, 30.0, 0.0],
];

/// Scenario truths 1–3 as spline models on the canonical layout.
pub fn canonical_scenarios() -> Vec<SplineModel> {
    let basis = std::sync::Arc::new(canonical_basis());
    SCENARIO_COEFFICIENTS
        .iter()
        .map(|b| SplineModel::new(basis.clone(), b.to_vec()).expect("coefficients are non-negative"))
        .collect()
}

/// Relative RMSE over repeats, per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelRmseCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid points dropped because the truth is 0 there.
    pub excluded: Vec<f64>,
}

impl RelRmseCurve {
    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// sqrt(mean_l (Λ̂_l(t) − Λ₀(t))²) / Λ₀(t) at each grid point with Λ₀(t) > 0.
pub fn rel_rmse(estimates: &[Vec<f64>], truth: &[f64], grid: &[f64]) -> Result<RelRmseCurve> {
    if estimates.is_empty() {
        return Err(domain("no estimates"));
    }
    if truth.len() != grid.len() || estimates.iter().any(|e| e.len() != grid.len()) {
        return Err(domain("estimates, truth and grid must have equal lengths"));
    }
    let n = estimates.len() as f64;
    let mut out = RelRmseCurve {
        grid: Vec::new(),
        values: Vec::new(),
        excluded: Vec::new(),
    };
    for (k, (&t, &truth_t)) in grid.iter().zip(truth).enumerate() {
        if truth_t == 0.0 {
            out.excluded.push(t);
            continue;
        }
        let mse = estimates.iter().map(|e| (e[k] - truth_t).powi(2)).sum::<f64>() / n;
        out.grid.push(t);
        out.values.push(mse.sqrt() / truth_t);
    }
    Ok(out)
}

/// One Monte Carlo configuration.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub truth: BcifModel,
    pub n_units: usize,
    pub n_repeats: usize,
    pub n_bootstrap: usize,
    pub exposure_pool: Fleet,
    pub family: ParametricFamily,
    pub seed: u64,
    pub candidate_b: Vec<usize>,
    pub alpha: f64,
    /// Band window; the pooled event range of each repeat when absent.
    pub t_range: Option<(f64, f64)>,
}

impl ScenarioSpec {
    /// Canonical scenario `k` (1-based) on the synthetic pool, tested
    /// against the Gompertz family at 95%.
    pub fn canonical(k: usize, n_units: usize, n_repeats: usize, n_bootstrap: usize, seed: u64) -> Result<Self> {
        let truth = canonical_scenarios()
            .into_iter()
            .nth(k.wrapping_sub(1))
            .ok_or_else(|| domain(format!("scenario must be 1, 2 or 3, got {k}")))?;
        Ok(ScenarioSpec {
            name: format!("scenario{k}"),
            truth: truth.into(),
            n_units,
            n_repeats,
            n_bootstrap,
            exposure_pool: synthetic_pool(),
            family: ParametricFamily::Gompertz,
            seed,
            candidate_b: DEFAULT_CANDIDATE_KNOTS.to_vec(),
            alpha: 0.05,
            t_range: None,
        })
    }

    fn check(&self) -> Result<()> {
        if self.n_units < 2 {
            return Err(domain("a scenario needs at least 2 units"));
        }
        if self.exposure_pool.n_units() == 0 {
            return Err(domain("exposure pool is empty"));
        }
        if self.n_repeats == 0 {
            return Err(domain("a scenario needs at least 1 repeat"));
        }
        Ok(())
    }
}

/// Outcome of one repeat; `error` is set for excluded repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub covered: bool,
    pub accepted: bool,
    pub selected_b: usize,
    pub n_events: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub name: String,
    pub n_units: usize,
    pub rel_rmse: RelRmseCurve,
    pub cp: f64,
    pub acceptance_prob: f64,
    pub n_excluded: usize,
    pub records: Vec<RepeatRecord>,
}

struct RepeatOutcome {
    record: RepeatRecord,
    estimate: Vec<f64>,
}

fn run_repeat(spec: &ScenarioSpec, r: usize, grid: &[f64], truth_grid: &[f64]) -> Result<RepeatOutcome> {
    let base = resample_exposure(&spec.exposure_pool, spec.n_units, derive_seed(spec.seed, &[r as u64, 0]))?;
    let fleet = simulate_fleet(&base, &spec.truth, derive_seed(spec.seed, &[r as u64, 1]))?;
    let candidates = SplineCandidates::new(&fleet, &spec.candidate_b, DEFAULT_ORDER)?;
    let point = candidates.select(None)?;
    let estimate = grid
        .iter()
        .map(|&t| point.model.bcif(t))
        .collect::<Result<Vec<_>>>()?;
    let parametric = fit_parametric(&fleet, spec.family, None)?;
    let opts = BootstrapOptions {
        candidate_b: spec.candidate_b.clone(),
        grid: Some(grid.to_vec()),
        ..BootstrapOptions::new(spec.n_bootstrap)
    };
    let ens = bootstrap_from_candidates(&fleet, &candidates, &opts, derive_seed(spec.seed, &[r as u64, 2]))?;
    let (t_lo, t_hi) = match spec.t_range {
        Some(w) => w,
        None => default_window(&fleet)?,
    };
    let band = calibrate_scb(&ens, spec.alpha, t_lo, t_hi)?;
    let truth_in_window: Vec<f64> = grid
        .iter()
        .zip(truth_grid)
        .filter(|(&t, _)| t >= t_lo && t <= t_hi)
        .map(|(_, &v)| v)
        .collect();
    Ok(RepeatOutcome {
        record: RepeatRecord {
            repeat: r,
            covered: band.contains(&truth_in_window),
            accepted: band.contains_model(&parametric.model)?,
            selected_b: point.n_interior_knots().unwrap_or(0),
            n_events: fleet.n_events(),
            error: None,
        },
        estimate,
    })
}

/// Runs every repeat of the scenario. Repeats are independent and seeded
/// by index, so the result does not depend on thread scheduling.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioMetrics> {
    spec.check()?;
    let tau = spec.exposure_pool.tau();
    let grid = day_grid(tau);
    let truth_grid = grid
        .iter()
        .map(|&t| spec.truth.bcif(t))
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<_> = (0..spec.n_repeats)
        .into_par_iter()
        .map(|r| (r, run_repeat(spec, r, &grid, &truth_grid)))
        .collect();

    let mut records = Vec::with_capacity(spec.n_repeats);
    let mut estimates = Vec::new();
    let mut n_excluded = 0;
    for (r, out) in outcomes {
        match out {
            Ok(o) => {
                records.push(o.record);
                estimates.push(o.estimate);
            }
            Err(e) => {
                n_excluded += 1;
                records.push(RepeatRecord {
                    repeat: r,
                    covered: false,
                    accepted: false,
                    selected_b: 0,
                    n_events: 0,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if n_excluded as f64 > MAX_EXCLUDED_SHARE * spec.n_repeats as f64 {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::Aborted(format!(
            "{n_excluded} of {} repeats failed (first: {first})",
            spec.n_repeats
        )));
    }
    let kept = estimates.len() as f64;
    let ok = records.iter().filter(|r| r.error.is_none());
    let (covered, accepted) = ok.fold((0usize, 0usize), |(c, a), r| (c + r.covered as usize, a + r.accepted as usize));
    Ok(ScenarioMetrics {
        name: spec.name.clone(),
        n_units: spec.n_units,
        rel_rmse: rel_rmse(&estimates, &truth_grid, &grid)?,
        cp: covered as f64 / kept,
        acceptance_prob: accepted as f64 / kept,
        n_excluded,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ParametricModel;

    #[test]
    fn pool_matches_targets() {
        let pool = synthetic_pool();
        assert_eq!(pool.n_units(), POOL_UNITS);
        let active: usize = pool.units().iter().map(|u| u.active_months()).sum();
        assert_eq!(active, POOL_ACTIVE_MONTHS);
        assert!((pool.total_kmiles() - POOL_KMILES).abs() < 1e-6);
        assert_eq!(pool, synthetic_pool());
    }

    #[test]
    fn zero_exposure_gives_no_events() {
        let cal = Calendar::two_year_study();
        let truth: BcifModel = canonical_scenarios()[0].clone().into();
        for s in 0..50 {
            assert!(simulate_unit(&[0.0; 24], &cal, &truth, s).unwrap().is_empty());
        }
    }

    #[test]
    fn events_fall_in_active_months() {
        let cal = Calendar::uniform(4, 30).unwrap();
        let model: BcifModel = ParametricModel::new(ParametricFamily::Weibull, vec![50.0, 0.02, 1.5])
            .unwrap()
            .into();
        let x = [0.0, 2.0, 0.0, 1.0];
        let ev = simulate_unit(&x, &cal, &model, 9).unwrap();
        assert!(!ev.is_empty());
        for t in ev {
            let l = cal.month_of(t).unwrap();
            assert!(x[l] > 0.0, "event at {t} in idle month {l}");
        }
    }

    #[test]
    fn scenario_truths() {
        let s = canonical_scenarios();
        assert_eq!(s[0].coefficients(), &[6.0, 16.0, 23.0, 11.0, 4.0]);
        assert_eq!(s[2].coefficients()[2], 0.0);
        assert_eq!(s[2].coefficients()[4], 0.0);
        for m in &s {
            assert_eq!(m.bcif(0.0).unwrap(), 0.0);
            let mut prev = 0.0;
            for t in day_grid(730.0) {
                let v = m.bcif(t).unwrap();
                assert!(v >= prev);
                prev = v;
            }
            let total: f64 = m.coefficients().iter().sum();
            assert!((prev - total).abs() < 1e-9);
        }
    }

    #[test]
    fn rel_rmse_arithmetic() {
        let grid = [1.0, 2.0, 3.0];
        let truth = [0.0, 2.0, 4.0];
        let c = rel_rmse(&[vec![0.0, 4.0, 8.0]], &truth, &grid).unwrap();
        assert_eq!(c.excluded, vec![1.0]);
        assert_eq!(c.values, vec![1.0, 1.0]);
        let est = vec![vec![0.0, 2.5, 4.5], vec![0.0, 1.5, 3.5]];
        let c = rel_rmse(&est, &truth, &grid).unwrap();
        assert!((c.values[0] - 0.25).abs() < 1e-12 && (c.values[1] - 0.125).abs() < 1e-12);
    }
}
