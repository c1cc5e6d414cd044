use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::likelihood::{EventTable, WeightVector};
use super::optim::{cholesky_solve, minimize_nonnegative_newton, nelder_mead, NelderMeadOptions, ProjectedNewtonOptions};
use crate::dataset::Fleet;
use crate::error::{domain, Error, Result};
use crate::models::spline::{dot, interior_knots, DEFAULT_ORDER};
use crate::models::{BcifModel, ParametricFamily, ParametricModel, SplineBasis, SplineModel};

/// Spline coefficients at or below this value do not count towards df.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// Interior knot counts searched when none are given.
pub const DEFAULT_CANDIDATE_KNOTS: [usize; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// AIC = −2·loglik + 2·df.
pub fn aic(loglik: f64, df: usize) -> f64 {
    -2.0 * loglik + 2.0 * df as f64
}

/// A fitted baseline with its likelihood summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FitRecord", try_from = "FitRecord")]
pub struct FitResult {
    pub model: BcifModel,
    pub loglik: f64,
    pub df: usize,
    pub aic: f64,
    pub converged: bool,
    pub n_function_evals: usize,
    /// Starting point on the natural parameter scale.
    pub init: Vec<f64>,
}

impl FitResult {
    fn new(model: BcifModel, loglik: f64, df: usize, converged: bool, evals: usize, init: Vec<f64>) -> Self {
        FitResult {
            model,
            loglik,
            df,
            aic: aic(loglik, df),
            converged,
            n_function_evals: evals,
            init,
        }
    }

    /// Interior knot count for spline fits.
    pub fn n_interior_knots(&self) -> Option<usize> {
        match &self.model {
            BcifModel::Spline(s) => Some(s.basis().interior_knots().len()),
            BcifModel::Parametric(_) => None,
        }
    }
}

/// Flat JSON form of a [`FitResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub family_or_spline: String,
    pub theta_or_coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub knots: Vec<f64>,
    pub loglik: f64,
    pub df: usize,
    pub aic: f64,
    pub converged: bool,
    #[serde(default)]
    pub n_function_evals: usize,
    #[serde(default)]
    pub init: Vec<f64>,
}

impl From<FitResult> for FitRecord {
    fn from(f: FitResult) -> Self {
        let (order, tau, knots) = match &f.model {
            BcifModel::Spline(s) => (
                Some(s.basis().order()),
                Some(s.tau()),
                s.basis().interior_knots().to_vec(),
            ),
            BcifModel::Parametric(_) => (None, None, vec![]),
        };
        FitRecord {
            family_or_spline: f.model.kind().to_string(),
            theta_or_coefficients: f.model.params().to_vec(),
            order,
            tau,
            knots,
            loglik: f.loglik,
            df: f.df,
            aic: f.aic,
            converged: f.converged,
            n_function_evals: f.n_function_evals,
            init: f.init,
        }
    }
}

impl TryFrom<FitRecord> for FitResult {
    type Error = Error;

    fn try_from(r: FitRecord) -> Result<Self> {
        let model: BcifModel = if r.family_or_spline == "spline" {
            let tau = r.tau.ok_or_else(|| domain("spline fit record lacks tau"))?;
            let basis = SplineBasis::new(r.order.unwrap_or(DEFAULT_ORDER), r.knots, tau)?;
            SplineModel::new(Arc::new(basis), r.theta_or_coefficients)?.into()
        } else {
            let family: ParametricFamily = r.family_or_spline.parse()?;
            ParametricModel::new(family, r.theta_or_coefficients)?.into()
        };
        Ok(FitResult {
            model,
            loglik: r.loglik,
            df: r.df,
            aic: r.aic,
            converged: r.converged,
            n_function_evals: r.n_function_evals,
            init: r.init,
        })
    }
}

/// Options for parametric fits.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Starting θ; defaults to the homogeneous-rate start.
    pub init: Option<Vec<f64>>,
    /// Parameters held fixed at the given natural-scale values.
    pub fixed: Vec<(usize, f64)>,
    pub nelder_mead: NelderMeadOptions,
}

impl FitOptions {
    /// Musa-Okumoto with θ₁ = 0: the constant-rate model.
    pub fn constant_rate() -> Self {
        FitOptions {
            fixed: vec![(0, 0.0)],
            ..Default::default()
        }
    }
}

/// Deterministic start: each family mapped onto the homogeneous rate
/// r = events / k-miles so that Λ₀(τ) ≈ rτ.
pub fn homogeneous_init(family: ParametricFamily, rate: f64, tau: f64) -> Vec<f64> {
    let total = rate * tau;
    match family {
        ParametricFamily::MusaOkumoto => {
            let th1 = std::f64::consts::LN_2 / total;
            vec![th1, 1.0 / (th1 * tau)]
        }
        ParametricFamily::Gompertz => {
            let th2 = 0.5f64.powf(1.0 / tau);
            vec![total / (0.5f64.sqrt() - 0.5), th2, 0.5]
        }
        ParametricFamily::Weibull => vec![total / (1.0 - (-1.0f64).exp()), 1.0 / tau, 1.0],
    }
}

/// Maximum-likelihood fit of a parametric family.
pub fn fit_parametric(fleet: &Fleet, family: ParametricFamily, init: Option<&[f64]>) -> Result<FitResult> {
    let opts = FitOptions {
        init: init.map(|v| v.to_vec()),
        ..Default::default()
    };
    fit_parametric_with(fleet, family, None, &opts)
}

/// Parametric fit with optional per-unit weights and fixed parameters.
pub fn fit_parametric_with(
    fleet: &Fleet,
    family: ParametricFamily,
    weights: Option<&WeightVector>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let w = weights.map(|w| w.as_slice());
    if let Some(w) = w {
        if w.len() != fleet.n_units() {
            return Err(domain(format!("{} weights for {} units", w.len(), fleet.n_units())));
        }
    }
    let table = EventTable::new(fleet, w)?;
    let cal = fleet.calendar();
    let events = table.weighted_events();
    if events <= 0.0 {
        return Err(Error::NoEvents);
    }
    let kmiles = table.weighted_kmiles(cal);
    let rate = events / kmiles;

    let np = family.n_params();
    let init = match &opts.init {
        Some(v) => v.clone(),
        None => {
            let mut v = homogeneous_init(family, rate, fleet.tau());
            for &(i, val) in &opts.fixed {
                if i < np {
                    v[i] = val;
                }
            }
            v
        }
    };
    ParametricModel::new(family, init.clone())?;
    let is_fixed = |i: usize| opts.fixed.iter().find(|(j, _)| *j == i).map(|(_, v)| *v);
    if let Some(&(i, _)) = opts.fixed.iter().find(|(i, _)| *i >= np) {
        return Err(domain(format!("cannot fix parameter {i} of a {np}-parameter family")));
    }
    let free: Vec<usize> = (0..np).filter(|&i| is_fixed(i).is_none()).collect();
    let domains = family.domains();
    let assemble = |z: &[f64]| -> Vec<f64> {
        let mut theta = init.clone();
        for i in 0..np {
            if let Some(v) = is_fixed(i) {
                theta[i] = v;
            }
        }
        for (k, &i) in free.iter().enumerate() {
            theta[i] = domains[i].from_unconstrained(z[k]);
        }
        theta
    };
    let objective = |z: &[f64]| -> f64 {
        match ParametricModel::new(family, assemble(z)) {
            Ok(m) => -table.loglik(cal, &BcifModel::Parametric(m)),
            Err(_) => f64::INFINITY,
        }
    };

    let mut z: Vec<f64> = free.iter().map(|&i| domains[i].to_unconstrained(init[i])).collect();
    let budget = opts.nelder_mead.max_evals;
    let mut evals = 0;
    let mut best = f64::INFINITY;
    let mut converged = false;
    // restart from the incumbent until a fresh simplex stops improving
    for _ in 0..6 {
        if evals >= budget {
            break;
        }
        let run_opts = NelderMeadOptions {
            max_evals: budget - evals,
            ..opts.nelder_mead
        };
        let r = nelder_mead(objective, &z, run_opts);
        evals += r.evals;
        let improved = best - r.fx;
        if r.fx <= best {
            z = r.x;
            best = r.fx;
        }
        converged = r.converged;
        if !(improved > 1e-9) {
            break;
        }
    }

    if best.is_finite() && !z.is_empty() {
        let (zp, fp, used) = newton_polish(&objective, &z, best);
        evals += used;
        z = zp;
        best = fp;
    }

    let mut theta = assemble(&z);
    let mut loglik = -best;
    if family == ParametricFamily::MusaOkumoto && is_fixed(0).is_none() {
        // θ₁ → 0 is the constant-rate boundary the log transform cannot reach
        let boundary = ParametricModel::new(family, vec![0.0, rate])?;
        let lb = table.loglik(cal, &BcifModel::Parametric(boundary));
        evals += 1;
        if lb >= loglik {
            theta = vec![0.0, rate];
            loglik = lb;
        }
    }
    if !loglik.is_finite() {
        return Err(Error::FitFailed(format!(
            "{family} fit found no point with finite likelihood"
        )));
    }
    let model = ParametricModel::new(family, theta)?;
    Ok(FitResult::new(model.into(), loglik, np, converged, evals, init))
}

/// A few Newton steps from the simplex optimum with finite-difference
/// derivatives. The simplex locates the optimum only as finely as the
/// objective's value can resolve it; derivative information sharpens the
/// location where the objective is flat. Steps are kept only if they do
/// not increase the objective beyond rounding noise.
fn newton_polish<F: Fn(&[f64]) -> f64>(f: &F, z0: &[f64], f0: f64) -> (Vec<f64>, f64, usize) {
    const GRAD_STEP: f64 = 1e-5;
    const HESS_STEP: f64 = 1e-3;
    let n = z0.len();
    let mut z = z0.to_vec();
    let mut fz = f0;
    let mut evals = 0;
    let at = |z: &[f64], moves: &[(usize, f64)]| -> Vec<f64> {
        let mut v = z.to_vec();
        for &(i, d) in moves {
            v[i] += d;
        }
        v
    };
    for _ in 0..3 {
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let up = f(&at(&z, &[(i, GRAD_STEP)]));
            let dn = f(&at(&z, &[(i, -GRAD_STEP)]));
            *gi = (up - dn) / (2.0 * GRAD_STEP);
        }
        let h2 = HESS_STEP * HESS_STEP;
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            let up = f(&at(&z, &[(i, HESS_STEP)]));
            let dn = f(&at(&z, &[(i, -HESS_STEP)]));
            hess[i * n + i] = (up - 2.0 * fz + dn) / h2;
            for j in 0..i {
                let pp = f(&at(&z, &[(i, HESS_STEP), (j, HESS_STEP)]));
                let pm = f(&at(&z, &[(i, HESS_STEP), (j, -HESS_STEP)]));
                let mp = f(&at(&z, &[(i, -HESS_STEP), (j, HESS_STEP)]));
                let mm = f(&at(&z, &[(i, -HESS_STEP), (j, -HESS_STEP)]));
                let v = (pp - pm - mp + mm) / (4.0 * h2);
                hess[i * n + j] = v;
                hess[j * n + i] = v;
                evals += 4;
            }
        }
        evals += 4 * n;
        let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
        if g.iter().chain(&hess).any(|v| !v.is_finite()) || !cholesky_solve(&hess, n, 0.0, &mut step) {
            break;
        }
        let candidate: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + b).collect();
        let fc = f(&candidate);
        evals += 1;
        // near the optimum the objective is flat to rounding, so allow
        // ties at the level of floating-point noise
        if !(fc <= fz + 1e-12 * (1.0 + fz.abs())) {
            break;
        }
        let size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        z = candidate;
        fz = fc;
        if size < 1e-12 {
            break;
        }
    }
    (z, fz, evals)
}

/// Pre-evaluated spline bases at every event and month boundary for one
/// knot layout. Weighted refits reuse it, since knots depend only on the
/// pooled event days.
#[derive(Debug, Clone)]
pub struct SplineDesign {
    basis: Arc<SplineBasis>,
    n_units: usize,
    n_events_total: usize,
    event_unit: Vec<usize>,
    event_logx: Vec<f64>,
    /// Index of the first basis in each event's window of `order` bases;
    /// every M-spline outside the window vanishes at the event.
    event_start: Vec<usize>,
    /// Row-major n_events × order M-spline values inside the window.
    event_m: Vec<f64>,
    /// Row-major n_units × n_s exposure-weighted I-spline increments.
    unit_exposure: Vec<f64>,
    unit_kmiles: Vec<f64>,
}

impl SplineDesign {
    /// Knots at event-day quantiles, default order.
    pub fn new(fleet: &Fleet, n_interior: usize) -> Result<Self> {
        Self::with_order(fleet, n_interior, DEFAULT_ORDER)
    }

    pub fn with_order(fleet: &Fleet, n_interior: usize, order: usize) -> Result<Self> {
        let events = fleet.pooled_event_days();
        if events.is_empty() {
            return Err(Error::NoEvents);
        }
        let interior = interior_knots(&events, n_interior, fleet.tau())?;
        let basis = SplineBasis::new(order, interior, fleet.tau())?;
        Self::from_basis(fleet, Arc::new(basis))
    }

    pub fn from_basis(fleet: &Fleet, basis: Arc<SplineBasis>) -> Result<Self> {
        let cal = fleet.calendar();
        if (basis.tau() - cal.tau()).abs() > 1e-9 {
            return Err(domain("spline boundary does not match the follow-up tau"));
        }
        let ns = basis.n_basis();
        let mut ends = Vec::with_capacity(cal.n_months() + 1);
        ends.push(vec![0.0; ns]);
        for &e in cal.month_end_days() {
            ends.push(basis.ispline(e as f64)?);
        }
        let mut event_unit = Vec::new();
        let mut event_logx = Vec::new();
        let mut event_start = Vec::new();
        let mut event_m = Vec::new();
        let width = basis.order();
        let mut unit_exposure = vec![0.0; fleet.n_units() * ns];
        let mut unit_kmiles = Vec::with_capacity(fleet.n_units());
        let mut m = vec![0.0; ns];
        for (i, unit) in fleet.units().iter().enumerate() {
            for (l, &x) in unit.daily_kmiles().iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for q in 0..ns {
                    unit_exposure[i * ns + q] += x * (ends[l + 1][q] - ends[l][q]);
                }
            }
            unit_kmiles.push(unit.total_kmiles(cal));
            for &t in unit.event_days() {
                let x = unit.daily_kmiles()[cal.month_of(t)?];
                basis.mspline_into(t, &mut m);
                let first = m.iter().position(|&v| v != 0.0).unwrap_or(0);
                let start = first.min(ns - width);
                debug_assert!(m
                    .iter()
                    .enumerate()
                    .all(|(q, &v)| v == 0.0 || (start..start + width).contains(&q)));
                event_unit.push(i);
                event_logx.push(x.ln());
                event_start.push(start);
                event_m.extend_from_slice(&m[start..start + width]);
            }
        }
        Ok(SplineDesign {
            basis,
            n_units: fleet.n_units(),
            n_events_total: event_unit.len(),
            event_unit,
            event_logx,
            event_start,
            event_m,
            unit_exposure,
            unit_kmiles,
        })
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    pub fn n_interior(&self) -> usize {
        self.basis.interior_knots().len()
    }

    /// Weighted log-likelihood and its gradient in β.
    pub fn objective(&self, weights: Option<&[f64]>) -> SplineObjective<'_> {
        let ns = self.basis.n_basis();
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);
        let mut exposure = vec![0.0; ns];
        for i in 0..self.n_units {
            let wi = w(i);
            if wi == 0.0 {
                continue;
            }
            for q in 0..ns {
                exposure[q] += wi * self.unit_exposure[i * ns + q];
            }
        }
        let mut rows = Vec::with_capacity(self.n_events_total);
        let mut constant = 0.0;
        for e in 0..self.n_events_total {
            let wi = w(self.event_unit[e]);
            if wi == 0.0 {
                continue;
            }
            constant += wi * self.event_logx[e];
            rows.push((e, wi));
        }
        SplineObjective {
            design: self,
            exposure,
            rows,
            constant,
        }
    }

    /// Non-negative maximum-likelihood fit of β for this knot layout.
    pub fn fit(&self, weights: Option<&WeightVector>) -> Result<FitResult> {
        let w = weights.map(|w| w.as_slice());
        if let Some(w) = w {
            if w.len() != self.n_units {
                return Err(domain(format!("{} weights for {} units", w.len(), self.n_units)));
            }
        }
        let obj = self.objective(w);
        let events: f64 = obj.rows.iter().map(|r| r.1).sum();
        if events <= 0.0 {
            return Err(Error::NoEvents);
        }
        let kmiles: f64 = (0..self.n_units)
            .map(|i| w.map_or(1.0, |w| w[i]) * self.unit_kmiles[i])
            .sum();
        let ns = self.basis.n_basis();
        let init = vec![events / kmiles * self.basis.tau() / ns as f64; ns];
        let r = minimize_nonnegative_newton(
            |b, g, h| obj.neg_loglik_derivs(b, g, h),
            &init,
            ProjectedNewtonOptions::default(),
        );
        if !r.fx.is_finite() {
            return Err(Error::FitFailed("spline likelihood is not finite".into()));
        }
        let df = r.x.iter().filter(|&&b| b > ZERO_THRESHOLD).count();
        let model = SplineModel::new(self.basis.clone(), r.x)?;
        Ok(FitResult::new(model.into(), -r.fx, df, r.converged, r.evals, init))
    }
}

/// The weighted spline log-likelihood for fixed weights.
pub struct SplineObjective<'a> {
    design: &'a SplineDesign,
    exposure: Vec<f64>,
    rows: Vec<(usize, f64)>,
    constant: f64,
}

impl SplineObjective<'_> {
    pub fn loglik(&self, beta: &[f64]) -> f64 {
        let mut g = vec![0.0; beta.len()];
        -self.neg_loglik_grad(beta, &mut g)
    }

    /// Analytic gradient ∂l/∂β.
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; beta.len()];
        self.neg_loglik_grad(beta, &mut g);
        g.iter().map(|v| -v).collect()
    }

    /// −l(β) with its gradient written into `grad`; +∞ when λ₀ vanishes at an event.
    pub fn neg_loglik_grad(&self, beta: &[f64], grad: &mut [f64]) -> f64 {
        self.neg_loglik_derivs(beta, grad, None)
    }

    /// Hessian of −l(β), row-major n_s × n_s.
    pub fn neg_loglik_hessian(&self, beta: &[f64]) -> Vec<f64> {
        let ns = beta.len();
        let mut g = vec![0.0; ns];
        let mut h = vec![0.0; ns * ns];
        self.neg_loglik_derivs(beta, &mut g, Some(&mut h));
        h
    }

    /// −l(β), its gradient, and optionally its Hessian.
    pub fn neg_loglik_derivs(&self, beta: &[f64], grad: &mut [f64], mut hess: Option<&mut [f64]>) -> f64 {
        let ns = beta.len();
        let width = self.design.basis.order();
        let mut ll = self.constant - dot(&self.exposure, beta);
        grad.copy_from_slice(&self.exposure);
        if let Some(h) = hess.as_deref_mut() {
            h.iter_mut().for_each(|v| *v = 0.0);
        }
        for &(e, w) in &self.rows {
            let start = self.design.event_start[e];
            let row = &self.design.event_m[e * width..(e + 1) * width];
            let lam = dot(row, &beta[start..start + width]);
            if !(lam > 0.0) {
                return f64::INFINITY;
            }
            ll += w * lam.ln();
            let scale = w / lam;
            for (g, m) in grad[start..start + width].iter_mut().zip(row) {
                *g -= scale * m;
            }
            if let Some(h) = hess.as_deref_mut() {
                let s2 = scale / lam;
                for (a, ma) in row.iter().enumerate() {
                    let base = (start + a) * ns + start;
                    for (b, mb) in row.iter().enumerate() {
                        h[base + b] += s2 * ma * mb;
                    }
                }
            }
        }
        -ll
    }
}

/// Spline fit with knots at event quantiles.
pub fn fit_spline(fleet: &Fleet, n_interior: usize) -> Result<FitResult> {
    SplineDesign::new(fleet, n_interior)?.fit(None)
}

/// Designs for a set of candidate knot counts; candidates whose knots
/// cannot be placed are kept as failures.
#[derive(Debug, Clone)]
pub struct SplineCandidates {
    designs: Vec<SplineDesign>,
    failures: Vec<(usize, Error)>,
}

impl SplineCandidates {
    pub fn new(fleet: &Fleet, candidate_b: &[usize], order: usize) -> Result<Self> {
        if candidate_b.is_empty() {
            return Err(domain("candidate knot list is empty"));
        }
        let mut bs = candidate_b.to_vec();
        bs.sort_unstable();
        bs.dedup();
        let mut designs = Vec::new();
        let mut failures = Vec::new();
        for b in bs {
            match SplineDesign::with_order(fleet, b, order) {
                Ok(d) => designs.push(d),
                Err(e) => failures.push((b, e)),
            }
        }
        if designs.is_empty() {
            return Err(Error::FitFailed(describe_failures(&failures)));
        }
        Ok(SplineCandidates { designs, failures })
    }

    pub fn designs(&self) -> &[SplineDesign] {
        &self.designs
    }

    pub fn design_for(&self, b: usize) -> Option<&SplineDesign> {
        self.designs.iter().find(|d| d.n_interior() == b)
    }

    /// Fits every candidate and keeps the smallest AIC (ties go to fewer knots).
    pub fn select(&self, weights: Option<&WeightVector>) -> Result<FitResult> {
        let mut best: Option<FitResult> = None;
        let mut failures = self.failures.clone();
        for d in &self.designs {
            match d.fit(weights) {
                Ok(fit) => {
                    if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                        best = Some(fit);
                    }
                }
                Err(e) => failures.push((d.n_interior(), e)),
            }
        }
        best.ok_or_else(|| Error::FitFailed(describe_failures(&failures)))
    }
}

fn describe_failures(failures: &[(usize, Error)]) -> String {
    let parts: Vec<String> = failures.iter().map(|(b, e)| format!("b = {b}: {e}")).collect();
    format!("every candidate knot count failed ({})", parts.join("; "))
}

/// AIC-selected spline fit over the candidate interior-knot counts.
pub fn select_spline(fleet: &Fleet, candidate_b: &[usize]) -> Result<FitResult> {
    SplineCandidates::new(fleet, candidate_b, DEFAULT_ORDER)?.select(None)
}
