//! Fractional-random-weight bootstrap for the spline BCIF, pointwise
//! intervals from bootstrap order statistics, and simultaneous bands
//! calibrated so that a chosen share of bootstrap curves lies inside them
//! over a whole time window.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Fleet;
use crate::error::{domain, Error, Result};
use crate::estimation::{FitResult, SplineCandidates, WeightVector, DEFAULT_CANDIDATE_KNOTS};
use crate::models::spline::DEFAULT_ORDER;
use crate::models::{BcifModel, SplineModel};
use crate::rng::{derive_seed, rng_from};

/// Replicate fits that fail are redrawn with fresh weights this many times.
pub const MAX_REPLICATE_RETRIES: usize = 10;

/// n independent Exp(1) weights, reproducible from the seed.
pub fn draw_weights(n: usize, seed: u64) -> WeightVector {
    let mut rng = rng_from(seed, &[]);
    let w = (0..n)
        .map(|_| {
            let v: f64 = Exp1.sample(&mut rng);
            v.max(f64::MIN_POSITIVE)
        })
        .collect();
    WeightVector::new(w).expect("Exp(1) draws are finite and positive")
}

/// Integer days 1..=τ.
pub fn day_grid(tau: f64) -> Vec<f64> {
    (1..=tau.floor() as usize).map(|d| d as f64).collect()
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub candidate_b: Vec<usize>,
    pub order: usize,
    /// Skip per-replicate knot selection and always use this knot count.
    pub freeze_b: Option<usize>,
    /// Evaluation grid; integer days 1..=τ when absent.
    pub grid: Option<Vec<f64>>,
}

impl BootstrapOptions {
    pub fn new(replicates: usize) -> Self {
        BootstrapOptions {
            replicates,
            candidate_b: DEFAULT_CANDIDATE_KNOTS.to_vec(),
            order: DEFAULT_ORDER,
            freeze_b: None,
            grid: None,
        }
    }
}

/// B bootstrap BCIF curves on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    /// Seed of the weight vector that produced each curve.
    pub seeds: Vec<u64>,
    pub selected_b: Vec<usize>,
    pub models: Vec<SplineModel>,
}

impl BootstrapEnsemble {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Column-wise sorted curve values.
    pub fn sorted_columns(&self) -> Vec<Vec<f64>> {
        (0..self.grid.len())
            .map(|t| {
                let mut col: Vec<f64> = self.curves.iter().map(|c| c[t]).collect();
                col.sort_by(|a, b| a.total_cmp(b));
                col
            })
            .collect()
    }

    /// Pointwise median curve.
    pub fn median(&self) -> Vec<f64> {
        self.sorted_columns()
            .iter()
            .map(|col| {
                let n = col.len();
                if n % 2 == 1 {
                    col[n / 2]
                } else {
                    0.5 * (col[n / 2 - 1] + col[n / 2])
                }
            })
            .collect()
    }
}

/// Bootstrap with per-replicate AIC knot selection over `candidate_b`.
pub fn bootstrap_bcif(fleet: &Fleet, replicates: usize, candidate_b: &[usize], seed: u64) -> Result<BootstrapEnsemble> {
    let opts = BootstrapOptions {
        candidate_b: candidate_b.to_vec(),
        ..BootstrapOptions::new(replicates)
    };
    bootstrap_with(fleet, &opts, seed)
}

pub fn bootstrap_with(fleet: &Fleet, opts: &BootstrapOptions, seed: u64) -> Result<BootstrapEnsemble> {
    let candidates = SplineCandidates::new(fleet, &opts.candidate_b, opts.order)?;
    bootstrap_from_candidates(fleet, &candidates, opts, seed)
}

/// As [`bootstrap_with`] but reusing already-built spline designs.
pub fn bootstrap_from_candidates(
    fleet: &Fleet,
    candidates: &SplineCandidates,
    opts: &BootstrapOptions,
    seed: u64,
) -> Result<BootstrapEnsemble> {
    if opts.replicates < 2 {
        return Err(domain("the bootstrap needs at least 2 replicates"));
    }
    if let Some(b) = opts.freeze_b {
        if candidates.design_for(b).is_none() {
            return Err(domain(format!("frozen knot count {b} is not among the usable candidates")));
        }
    }
    let grid = opts.grid.clone().unwrap_or_else(|| day_grid(fleet.tau()));
    if grid.iter().any(|&t| !(t >= 0.0 && t <= fleet.tau())) {
        return Err(domain("bootstrap grid must lie within [0, tau]"));
    }
    // I-spline values on the grid, one matrix per knot layout
    let grid_bases: Vec<(usize, Vec<Vec<f64>>)> = candidates
        .designs()
        .iter()
        .map(|d| {
            let rows = grid
                .iter()
                .map(|&t| d.basis().ispline(t))
                .collect::<Result<Vec<_>>>()?;
            Ok((d.n_interior(), rows))
        })
        .collect::<Result<_>>()?;

    let n = fleet.n_units();
    let replicate = |r: usize| -> Result<(Vec<f64>, u64, usize, SplineModel)> {
        let mut last_err = None;
        for attempt in 0..=MAX_REPLICATE_RETRIES {
            let rseed = derive_seed(seed, &[r as u64, attempt as u64]);
            let w = draw_weights(n, rseed);
            let fit = match opts.freeze_b {
                Some(b) => candidates.design_for(b).expect("checked above").fit(Some(&w)),
                None => candidates.select(Some(&w)),
            };
            match fit {
                Ok(FitResult {
                    model: BcifModel::Spline(m),
                    ..
                }) => {
                    let b = m.basis().interior_knots().len();
                    let rows = &grid_bases.iter().find(|(k, _)| *k == b).expect("design exists").1;
                    let curve = rows
                        .iter()
                        .map(|row| row.iter().zip(m.coefficients()).map(|(a, c)| a * c).sum())
                        .collect();
                    return Ok((curve, rseed, b, m));
                }
                Ok(_) => unreachable!("spline candidates yield spline fits"),
                Err(e) => last_err = Some(e),
            }
        }
        Err(Error::Aborted(format!(
            "bootstrap replicate {r} failed {} times; last error: {}",
            MAX_REPLICATE_RETRIES + 1,
            last_err.expect("at least one attempt")
        )))
    };
    let results: Vec<_> = (0..opts.replicates).into_par_iter().map(replicate).collect();

    let mut ens = BootstrapEnsemble {
        grid,
        curves: Vec::with_capacity(opts.replicates),
        seeds: Vec::with_capacity(opts.replicates),
        selected_b: Vec::with_capacity(opts.replicates),
        models: Vec::with_capacity(opts.replicates),
    };
    for res in results {
        let (curve, s, b, m) = res?;
        ens.curves.push(curve);
        ens.seeds.push(s);
        ens.selected_b.push(b);
        ens.models.push(m);
    }
    Ok(ens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    Pointwise,
    Simultaneous,
}

/// Record of the α_p search behind a simultaneous band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Share of bootstrap curves inside the band over the whole window.
    pub coverage: f64,
    /// Every (α_p, CP(α_p)) pair evaluated during the search.
    pub evaluated: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: BandKind,
    pub nominal_alpha: f64,
    /// α_p for pointwise bands, calibrated α_c for simultaneous ones.
    pub achieved_alpha: f64,
    /// 1-based order statistics used for the lower and upper limits.
    pub order_stats: (usize, usize),
    pub t_range: Option<(f64, f64)>,
    pub calibration: Option<Calibration>,
}

impl Band {
    /// Whether `values` (aligned with the band grid) lies inside the band.
    pub fn contains(&self, values: &[f64]) -> bool {
        values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Whether the model's BCIF lies inside the band at every grid point.
    pub fn contains_model(&self, model: &BcifModel) -> Result<bool> {
        let values = self.grid.iter().map(|&t| model.bcif(t)).collect::<Result<Vec<_>>>()?;
        Ok(self.contains(&values))
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5 + 1e-9 * x.abs().max(1.0)).floor() as i64
}

/// 1-based order statistics ([Bα_p/2], [B(1 − α_p/2)]) clamped to [1, B].
pub fn order_stat_indices(b: usize, alpha_p: f64) -> Result<(usize, usize)> {
    if !(alpha_p > 0.0 && alpha_p < 1.0) {
        return Err(domain(format!("alpha_p must be in (0, 1), got {alpha_p}")));
    }
    let bf = b as f64;
    let lo = round_half_up(bf * alpha_p / 2.0);
    if lo < 1 {
        return Err(Error::Band(format!(
            "alpha_p = {alpha_p} is too small for B = {b}; the minimum feasible alpha_p is {}",
            1.0 / bf
        )));
    }
    let hi = round_half_up(bf * (1.0 - alpha_p / 2.0));
    let clamp = |v: i64| v.clamp(1, b as i64) as usize;
    Ok((clamp(lo), clamp(hi)))
}

fn band_from_sorted(sorted: &[Vec<f64>], lo: usize, hi: usize) -> (Vec<f64>, Vec<f64>) {
    let lower = sorted.iter().map(|c| c[lo - 1]).collect();
    let upper = sorted.iter().map(|c| c[hi - 1]).collect();
    (lower, upper)
}

/// Pointwise 100(1 − α_p)% intervals from bootstrap order statistics.
pub fn pointwise_band(ens: &BootstrapEnsemble, alpha_p: f64) -> Result<Band> {
    let b = ens.len();
    if b < 2 {
        return Err(domain("ensemble needs at least 2 curves"));
    }
    let (lo, hi) = order_stat_indices(b, alpha_p)?;
    let sorted = ens.sorted_columns();
    let (lower, upper) = band_from_sorted(&sorted, lo, hi);
    Ok(Band {
        grid: ens.grid.clone(),
        lower,
        upper,
        kind: BandKind::Pointwise,
        nominal_alpha: alpha_p,
        achieved_alpha: alpha_p,
        order_stats: (lo, hi),
        t_range: None,
        calibration: None,
    })
}

/// Grid positions inside [t_L, t_U].
fn window(grid: &[f64], t_lo: f64, t_hi: f64) -> Result<Vec<usize>> {
    if !(t_lo <= t_hi) {
        return Err(domain(format!("need t_L <= t_U, got [{t_lo}, {t_hi}]")));
    }
    let idx: Vec<usize> = grid
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= t_lo && t <= t_hi)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(domain(format!("no grid point lies in [{t_lo}, {t_hi}]")));
    }
    Ok(idx)
}

/// Order statistics for the j-th candidate α_p = (j + 1)/B. Consecutive
/// candidates are nested, widest first.
fn candidate_indices(b: usize, j: usize) -> (usize, usize) {
    (1 + j / 2, b - j.div_ceil(2))
}

/// Simultaneous 100(1 − α)% band over [t_L, t_U]: the narrowest pointwise
/// band (largest α_c ≤ α) that still holds at least a 1 − α share of the
/// bootstrap curves entirely inside the window.
pub fn calibrate_scb(ens: &BootstrapEnsemble, alpha: f64, t_lo: f64, t_hi: f64) -> Result<Band> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let b = ens.len();
    if b < 2 {
        return Err(domain("ensemble needs at least 2 curves"));
    }
    let idx = window(&ens.grid, t_lo, t_hi)?;
    let sorted: Vec<Vec<f64>> = ens
        .sorted_columns()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| idx.binary_search(i).is_ok())
        .map(|(_, c)| c)
        .collect();
    let curves: Vec<Vec<f64>> = ens
        .curves
        .iter()
        .map(|c| idx.iter().map(|&i| c[i]).collect())
        .collect();

    let coverage = |j: usize| -> f64 {
        let (lo, hi) = candidate_indices(b, j);
        let inside = curves
            .iter()
            .filter(|c| {
                c.iter()
                    .zip(&sorted)
                    .all(|(v, col)| col[lo - 1] <= *v && *v <= col[hi - 1])
            })
            .count();
        inside as f64 / b as f64
    };
    let alpha_of = |j: usize| (j + 1) as f64 / b as f64;

    // candidates with α_p ≤ α and a non-empty index range
    let mut j_max = 0;
    while alpha_of(j_max + 1) <= alpha + 1e-12 && {
        let (lo, hi) = candidate_indices(b, j_max + 1);
        lo <= hi
    } {
        j_max += 1;
    }
    let target = 1.0 - alpha;
    let mut evaluated = Vec::new();
    let c0 = coverage(0);
    evaluated.push((alpha_of(0), c0));
    if c0 < target - 1e-12 {
        return Err(Error::Band(format!(
            "even the widest band covers only {c0:.4} of the bootstrap curves; increase B"
        )));
    }
    // largest j with coverage(j) ≥ 1 − α; coverage is non-increasing in j
    let (mut good, mut bad) = (0usize, j_max + 1);
    let mut good_cov = c0;
    while bad - good > 1 {
        let mid = good + (bad - good) / 2;
        let c = coverage(mid);
        evaluated.push((alpha_of(mid), c));
        if c >= target - 1e-12 {
            debug_assert!(c <= good_cov + 1e-12, "coverage must not grow with alpha_p");
            good = mid;
            good_cov = c;
        } else {
            bad = mid;
        }
    }
    let (lo, hi) = candidate_indices(b, good);
    let (lower, upper) = band_from_sorted(&sorted, lo, hi);
    evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Band {
        grid: idx.iter().map(|&i| ens.grid[i]).collect(),
        lower,
        upper,
        kind: BandKind::Simultaneous,
        nominal_alpha: alpha,
        achieved_alpha: alpha_of(good),
        order_stats: (lo, hi),
        t_range: Some((t_lo, t_hi)),
        calibration: Some(Calibration {
            coverage: good_cov,
            evaluated,
        }),
    })
}

/// Whether the fitted parametric BCIF stays inside the level-α
/// simultaneous band on [t_L, t_U].
pub fn parametric_adequacy(
    ens: &BootstrapEnsemble,
    parametric_fit: &FitResult,
    alpha: f64,
    t_lo: f64,
    t_hi: f64,
) -> Result<bool> {
    let band = calibrate_scb(ens, alpha, t_lo, t_hi)?;
    band.contains_model(&parametric_fit.model)
}

/// [first event day, last event day] of the pooled events.
pub fn default_window(fleet: &Fleet) -> Result<(f64, f64)> {
    let days = fleet.pooled_event_days();
    match (days.first(), days.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(Error::NoEvents),
    }
}

/// Fleet-wide expected and observed cumulative event counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCurve {
    pub grid: Vec<f64>,
    pub expected: Vec<f64>,
    pub observed: Vec<usize>,
}

/// Σ_i Λ_i(t) on the grid, paired with the observed cumulative count.
pub fn expected_events_curve(fleet: &Fleet, model: &BcifModel, grid: &[f64]) -> Result<ExpectedCurve> {
    let cal = fleet.calendar();
    let mut exposure = vec![0.0; cal.n_months()];
    for unit in fleet.units() {
        for (l, x) in unit.daily_kmiles().iter().enumerate() {
            exposure[l] += x;
        }
    }
    let events = fleet.pooled_event_days();
    let mut expected = Vec::with_capacity(grid.len());
    let mut observed = Vec::with_capacity(grid.len());
    for &t in grid {
        if !(t >= 0.0 && t <= cal.tau()) {
            return Err(domain(format!("grid point {t} outside [0, {}]", cal.tau())));
        }
        let mut total = 0.0;
        for (l, &x) in exposure.iter().enumerate() {
            let (lo, hi) = cal.bounds(l);
            if lo >= t {
                break;
            }
            if x != 0.0 {
                total += x * (model.bcif(hi.min(t))? - model.bcif(lo)?);
            }
        }
        expected.push(total);
        observed.push(events.partition_point(|&e| e <= t));
    }
    Ok(ExpectedCurve {
        grid: grid.to_vec(),
        expected,
        observed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble(curves: Vec<Vec<f64>>) -> BootstrapEnsemble {
        let n = curves.len();
        let grid = (1..=curves[0].len()).map(|d| d as f64).collect();
        BootstrapEnsemble {
            grid,
            curves,
            seeds: vec![0; n],
            selected_b: vec![1; n],
            models: vec![],
        }
    }

    #[test]
    fn order_statistics_for_paper_setting() {
        assert_eq!(order_stat_indices(5000, 0.05).unwrap(), (125, 4875));
        assert_eq!(order_stat_indices(500, 0.05).unwrap(), (13, 488));
        assert!(order_stat_indices(10, 0.05).is_err());
        let msg = order_stat_indices(10, 0.05).unwrap_err().to_string();
        assert!(msg.contains("0.1"), "{msg}");
        assert_eq!(order_stat_indices(10, 0.1).unwrap(), (1, 10));
    }

    #[test]
    fn candidates_are_nested() {
        let b = 200;
        let mut prev = (1, b + 1);
        for j in 0..150 {
            let (lo, hi) = candidate_indices(b, j);
            assert!(lo >= prev.0 && hi <= prev.1);
            assert!((lo - prev.0) + (prev.1 - hi) == 1 || j == 0);
            assert_eq!((lo, hi), order_stat_indices(b, (j + 1) as f64 / b as f64).unwrap());
            prev = (lo, hi);
        }
    }

    #[test]
    fn identical_curves_give_zero_width() {
        let ens = ensemble(vec![vec![1.0, 2.0, 3.0]; 50]);
        let band = pointwise_band(&ens, 0.1).unwrap();
        assert_eq!(band.lower, band.upper);
        assert_eq!(band.lower, vec![1.0, 2.0, 3.0]);
        let scb = calibrate_scb(&ens, 0.05, 1.0, 3.0).unwrap();
        assert_eq!(scb.lower, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_point_window_is_pointwise() {
        let curves: Vec<Vec<f64>> = (0..400).map(|b| vec![((b * 37) % 400) as f64]).collect();
        let ens = ensemble(curves);
        let scb = calibrate_scb(&ens, 0.05, 1.0, 1.0).unwrap();
        assert!((scb.achieved_alpha - 0.05).abs() <= 1.0 / 400.0);
        let pci = pointwise_band(&ens, 0.05).unwrap();
        assert!(scb.lower[0] <= pci.lower[0] && scb.upper[0] >= pci.upper[0]);
    }

    #[test]
    fn expected_curve_zero_exposure() {
        use crate::dataset::{Calendar, UnitHistory};
        use crate::models::{ParametricFamily, ParametricModel};
        let cal = Calendar::new(vec![30, 60]).unwrap();
        let fleet = Fleet::new(cal, vec![UnitHistory::new("a", vec![], vec![0.0, 0.0])]).unwrap();
        let model: BcifModel = ParametricModel::new(ParametricFamily::Weibull, vec![5.0, 0.1, 1.2])
            .unwrap()
            .into();
        let c = expected_events_curve(&fleet, &model, &day_grid(60.0)).unwrap();
        assert!(c.expected.iter().all(|&v| v == 0.0));
        assert!(c.observed.iter().all(|&v| v == 0));
    }

    #[test]
    fn weights_are_reproducible_and_positive() {
        let a = draw_weights(1000, 3);
        assert_eq!(a, draw_weights(1000, 3));
        assert_ne!(a, draw_weights(1000, 4));
        assert!(a.as_slice().iter().all(|&w| w > 0.0));
    }
}
