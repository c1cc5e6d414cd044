//! Monotone spline baselines built from M-spline and I-spline bases.
//!
//! The M-splines follow the order recursion on a knot sequence with `h`
//! repeated boundary knots at each end. Each M-spline integrates to one, so
//! its integral (the I-spline) rises monotonically from 0 at t = 0 to 1 at
//! t = τ. Non-negative combinations of I-splines are therefore valid BCIFs.
//!
//! Supports are half-open `[t_q, t_{q+h})`; at t = τ all bases take their
//! left limits so that `I_q(τ) = 1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Largest supported order. The 8-point Gauss-Legendre rule integrates
/// piecewise polynomials up to degree 15 exactly.
pub const MAX_ORDER: usize = 10;

/// Default order: quadratic M-splines, cubic I-splines.
pub const DEFAULT_ORDER: usize = 3;

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Knot layout plus precomputed I-spline values at every breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    order: usize,
    tau: f64,
    interior: Vec<f64>,
    knots: Vec<f64>,
    /// Distinct breakpoints 0 < interior... < τ.
    breaks: Vec<f64>,
    /// `cum[k][q]` = I_q(breaks[k]).
    cum: Vec<Vec<f64>>,
}

impl SplineBasis {
    /// Builds the basis from the order, interior knots and right boundary τ.
    pub fn new(order: usize, interior: Vec<f64>, tau: f64) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(domain(format!("spline order must be in 1..={MAX_ORDER}, got {order}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(domain(format!("boundary tau must be positive, got {tau}")));
        }
        let mut prev = 0.0;
        for &k in &interior {
            if !(k > prev) {
                return Err(domain(format!(
                    "interior knots must be strictly increasing inside (0, tau); got {interior:?}"
                )));
            }
            prev = k;
        }
        if !(prev < tau) {
            return Err(domain(format!("interior knots must lie below tau = {tau}")));
        }
        let mut knots = vec![0.0; order];
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(tau, order));

        let mut breaks = vec![0.0];
        breaks.extend_from_slice(&interior);
        breaks.push(tau);

        let mut basis = SplineBasis {
            order,
            tau,
            interior,
            knots,
            breaks,
            cum: Vec::new(),
        };
        let n_s = basis.n_basis();
        let mut cum = vec![vec![0.0; n_s]];
        for k in 0..basis.n_intervals() {
            let lo = basis.breaks[k];
            let hi = basis.breaks[k + 1];
            let part = basis.integrate_in_interval(k, lo, hi);
            let next: Vec<f64> = cum[k].iter().zip(&part).map(|(a, b)| a + b).collect();
            cum.push(next);
        }
        basis.cum = cum;
        Ok(basis)
    }

    /// Builds the basis from a full knot sequence
    /// `0 = t_1 = … = t_h < t_{h+1} < … < t_{h+b} < t_{h+b+1} = … = t_{2h+b} = τ`.
    pub fn from_knot_sequence(order: usize, knots: &[f64]) -> Result<Self> {
        if order == 0 || knots.len() < 2 * order {
            return Err(domain(format!(
                "knot sequence of length {} is too short for order {order}",
                knots.len()
            )));
        }
        let tau = knots[knots.len() - 1];
        let head_ok = knots[..order].iter().all(|&k| k == 0.0);
        let tail_ok = knots[knots.len() - order..].iter().all(|&k| k == tau);
        if !head_ok || !tail_ok {
            return Err(domain(format!(
                "knot sequence must repeat 0 and tau exactly {order} times at the ends"
            )));
        }
        let interior = knots[order..knots.len() - order].to_vec();
        SplineBasis::new(order, interior, tau)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    pub fn knot_sequence(&self) -> &[f64] {
        &self.knots
    }

    /// n_s = h + b.
    pub fn n_basis(&self) -> usize {
        self.order + self.interior.len()
    }

    fn n_intervals(&self) -> usize {
        self.breaks.len() - 1
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.tau) {
            return Err(domain(format!("spline evaluated at t = {t}, outside [0, {}]", self.tau)));
        }
        Ok(())
    }

    /// Index of the breakpoint interval holding t; t = τ maps to the last one.
    fn interval_of(&self, t: f64) -> usize {
        let k = self.breaks.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(self.n_intervals() - 1)
    }

    /// M-spline values for t inside breakpoint interval `k`, by the order recursion.
    fn mspline_in_interval(&self, k: usize, t: f64, out: &mut [f64]) {
        let h = self.order;
        let knots = &self.knots;
        let j = h - 1 + k;
        let len1 = knots.len() - 1;
        let mut m = vec![0.0; len1];
        m[j] = 1.0 / (knots[j + 1] - knots[j]);
        for ord in 2..=h {
            let len = knots.len() - ord;
            let mut next = vec![0.0; len];
            let lo = j.saturating_sub(ord - 1);
            for q in lo..=j.min(len - 1) {
                let span = knots[q + ord] - knots[q];
                if span <= 0.0 {
                    continue;
                }
                let left = if q < m.len() { (t - knots[q]) * m[q] } else { 0.0 };
                let right = if q + 1 < m.len() {
                    (knots[q + ord] - t) * m[q + 1]
                } else {
                    0.0
                };
                let ordf = ord as f64;
                next[q] = ordf * (left + right) / ((ordf - 1.0) * span);
            }
            m = next;
        }
        out.copy_from_slice(&m[..self.n_basis()]);
    }

    fn integrate_in_interval(&self, k: usize, lo: f64, hi: f64) -> Vec<f64> {
        let n_s = self.n_basis();
        let mut acc = vec![0.0; n_s];
        if hi <= lo {
            return acc;
        }
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut m = vec![0.0; n_s];
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            self.mspline_in_interval(k, mid + half * x, &mut m);
            for (a, v) in acc.iter_mut().zip(&m) {
                *a += w * half * v;
            }
        }
        acc
    }

    /// M-spline basis values M_q(t), q = 1..n_s.
    pub fn mspline(&self, t: f64) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let mut out = vec![0.0; self.n_basis()];
        self.mspline_into(t, &mut out);
        Ok(out)
    }

    /// I-spline basis values I_q(t), q = 1..n_s.
    pub fn ispline(&self, t: f64) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let mut out = vec![0.0; self.n_basis()];
        self.ispline_into(t, &mut out);
        Ok(out)
    }

    pub(crate) fn mspline_into(&self, t: f64, out: &mut [f64]) {
        let k = self.interval_of(t);
        self.mspline_in_interval(k, t, out);
    }

    pub(crate) fn ispline_into(&self, t: f64, out: &mut [f64]) {
        if t <= 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        if t >= self.tau {
            out.copy_from_slice(&self.cum[self.n_intervals()]);
            return;
        }
        let k = self.interval_of(t);
        let part = self.integrate_in_interval(k, self.breaks[k], t);
        for ((o, c), p) in out.iter_mut().zip(&self.cum[k]).zip(&part) {
            *o = c + p;
        }
    }
}

/// M-spline basis values of the given order on a full knot sequence.
pub fn mspline_basis(order: usize, knot_seq: &[f64], t: f64) -> Result<Vec<f64>> {
    SplineBasis::from_knot_sequence(order, knot_seq)?.mspline(t)
}

/// I-spline basis values of the given order on a full knot sequence.
pub fn ispline_basis(order: usize, knot_seq: &[f64], t: f64) -> Result<Vec<f64>> {
    SplineBasis::from_knot_sequence(order, knot_seq)?.ispline(t)
}

/// Sample quantile with linear interpolation between order statistics
/// (the `type = 7` definition). `sorted` must be ascending and non-empty.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Interior knots at the k/(b+1) sample quantiles of the pooled event days,
/// returned as the full knot sequence for the given order.
pub fn place_knots(event_days: &[f64], n_interior: usize, tau: f64, order: usize) -> Result<Vec<f64>> {
    let interior = interior_knots(event_days, n_interior, tau)?;
    Ok(SplineBasis::new(order, interior, tau)?.knot_sequence().to_vec())
}

/// Interior knots only; see [`place_knots`].
pub fn interior_knots(event_days: &[f64], n_interior: usize, tau: f64) -> Result<Vec<f64>> {
    if event_days.is_empty() {
        return Err(domain("cannot place knots without events"));
    }
    if n_interior == 0 {
        return Err(domain("at least one interior knot is required"));
    }
    let mut sorted = event_days.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut knots: Vec<f64> = Vec::with_capacity(n_interior);
    for k in 1..=n_interior {
        let q = sample_quantile(&sorted, k as f64 / (n_interior + 1) as f64);
        if let Some(&last) = knots.last() {
            if q <= last {
                return Err(Error::DuplicateKnots {
                    knot: q,
                    requested: n_interior,
                });
            }
        }
        knots.push(q);
    }
    if knots[0] <= 0.0 || knots[n_interior - 1] >= tau {
        return Err(domain(format!(
            "event quantiles {knots:?} do not lie strictly inside (0, {tau})"
        )));
    }
    Ok(knots)
}

/// A spline BCIF Λ₀(t) = Σ β_q I_q(t) with β_q ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpline", into = "RawSpline")]
pub struct SplineModel {
    basis: Arc<SplineBasis>,
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpline {
    order: usize,
    tau: f64,
    interior_knots: Vec<f64>,
    coefficients: Vec<f64>,
}

impl TryFrom<RawSpline> for SplineModel {
    type Error = Error;

    fn try_from(raw: RawSpline) -> Result<Self> {
        let basis = SplineBasis::new(raw.order, raw.interior_knots, raw.tau)?;
        SplineModel::new(Arc::new(basis), raw.coefficients)
    }
}

impl From<SplineModel> for RawSpline {
    fn from(m: SplineModel) -> Self {
        RawSpline {
            order: m.basis.order,
            tau: m.basis.tau,
            interior_knots: m.basis.interior.clone(),
            coefficients: m.coefficients,
        }
    }
}

impl SplineModel {
    pub fn new(basis: Arc<SplineBasis>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.n_basis() {
            return Err(Error::InvalidParameters {
                model: "spline".into(),
                reason: format!(
                    "expected {} coefficients, got {}",
                    basis.n_basis(),
                    coefficients.len()
                ),
            });
        }
        if coefficients.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameters {
                model: "spline".into(),
                reason: "coefficients must be finite and non-negative".into(),
            });
        }
        Ok(SplineModel {
            basis,
            coefficients,
        })
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn tau(&self) -> f64 {
        self.basis.tau
    }

    pub fn bcif(&self, t: f64) -> Result<f64> {
        self.basis.check_t(t)?;
        Ok(self.bcif_unchecked(t))
    }

    pub fn bif(&self, t: f64) -> Result<f64> {
        self.basis.check_t(t)?;
        Ok(self.bif_unchecked(t))
    }

    pub(crate) fn bcif_unchecked(&self, t: f64) -> f64 {
        let mut i = vec![0.0; self.basis.n_basis()];
        self.basis.ispline_into(t, &mut i);
        dot(&i, &self.coefficients)
    }

    pub(crate) fn bif_unchecked(&self, t: f64) -> f64 {
        let mut m = vec![0.0; self.basis.n_basis()];
        self.basis.mspline_into(t, &mut m);
        dot(&m, &self.coefficients)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
