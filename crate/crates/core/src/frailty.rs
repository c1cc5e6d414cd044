//! Gamma frailty extension: each unit's intensity is multiplied by a latent
//! u_i ~ Gamma(mean 1, variance φ). Integrating u_i out gives a closed-form
//! marginal likelihood, maximized jointly over (θ, φ); the likelihood-ratio
//! statistic against the plain NHPP tests for population heterogeneity.

use serde::{Serialize, Serializer};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::Fleet;
use crate::error::{domain, Error, Result};
use crate::estimation::optim::{nelder_mead, NelderMeadOptions};
use crate::estimation::{aic, fit_parametric, month_end_bcif, unit_exposure, FitResult};
use crate::models::{BcifModel, ParametricFamily, ParametricModel};

/// Lower bound on φ during fitting.
pub const PHI_FLOOR: f64 = 1e-10;

/// Fits with φ̂ below this are reported as sitting at the floor.
const AT_FLOOR: f64 = 1e-6;

/// Per-unit pieces of the marginal likelihood that do not depend on φ.
struct UnitTerms {
    n_events: usize,
    /// Σ_j [log x_i(t_ij) + log λ₀(t_ij)]
    event_sum: f64,
    /// c_i
    exposure: f64,
}

fn unit_terms(fleet: &Fleet, model: &BcifModel) -> Result<Option<Vec<UnitTerms>>> {
    let cal = fleet.calendar();
    let ends = month_end_bcif(cal, model)?;
    let mut out = Vec::with_capacity(fleet.n_units());
    for unit in fleet.units() {
        let mut event_sum = 0.0;
        for &t in unit.event_days() {
            let x = unit.daily_kmiles()[cal.month_of(t)?];
            let lam = model.bif_unchecked(t);
            if !(lam > 0.0 && x > 0.0) {
                return Ok(None);
            }
            event_sum += x.ln() + lam.ln();
        }
        out.push(UnitTerms {
            n_events: unit.n_events(),
            event_sum,
            exposure: unit_exposure(unit, &ends),
        });
    }
    Ok(Some(out))
}

/// log Γ(n + 1/φ) − log Γ(1/φ) − (1/φ) log φ − (n + 1/φ) log(c + 1/φ),
/// rewritten as Σ_{k<n} log(1 + kφ) − (n + 1/φ) log(1 + cφ) so that it
/// stays accurate as φ → 0.
fn gamma_terms(n: usize, c: f64, phi: f64) -> f64 {
    let rising: f64 = (0..n).map(|k| (k as f64 * phi).ln_1p()).sum();
    rising - (n as f64 + 1.0 / phi) * (c * phi).ln_1p()
}

fn marginal_from_terms(terms: &[UnitTerms], phi: f64) -> f64 {
    terms
        .iter()
        .map(|u| u.event_sum + gamma_terms(u.n_events, u.exposure, phi))
        .sum()
}

/// Marginal log-likelihood of the gamma frailty model at variance φ > 0.
pub fn marginal_log_likelihood(fleet: &Fleet, model: &ParametricModel, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(domain(format!(
            "frailty variance must be positive and finite, got {phi}; use the plain likelihood for phi = 0"
        )));
    }
    let model = BcifModel::Parametric(model.clone());
    Ok(match unit_terms(fleet, &model)? {
        Some(terms) => marginal_from_terms(&terms, phi),
        None => f64::NEG_INFINITY,
    })
}

/// Result of the joint (θ, φ) fit and the heterogeneity test.
#[derive(Debug, Clone, PartialEq)]
pub struct FrailtyFit {
    /// Baseline under frailty; its loglik is the marginal loglik and df
    /// counts φ.
    pub base: FitResult,
    pub phi: f64,
    pub marginal_loglik: f64,
    /// Maximized plain NHPP log-likelihood of the same family.
    pub null_loglik: f64,
    pub lrt_statistic: f64,
    pub p_value: f64,
    /// Whether the p-value uses the ½χ²₀ + ½χ²₁ boundary mixture.
    pub boundary_mix: bool,
    pub warnings: Vec<String>,
}

impl FrailtyFit {
    pub fn family(&self) -> ParametricFamily {
        match &self.base.model {
            BcifModel::Parametric(m) => m.family(),
            BcifModel::Spline(_) => unreachable!("frailty fits are parametric"),
        }
    }

    pub fn theta(&self) -> &[f64] {
        self.base.model.params()
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Serialize)]
struct FrailtyRecord<'a> {
    family: ParametricFamily,
    theta: &'a [f64],
    phi: f64,
    marginal_loglik: f64,
    null_loglik: f64,
    lrt_statistic: f64,
    p_value: f64,
    boundary_mix: bool,
    converged: bool,
    warnings: &'a [String],
}

impl Serialize for FrailtyFit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FrailtyRecord {
            family: self.family(),
            theta: self.theta(),
            phi: self.phi,
            marginal_loglik: self.marginal_loglik,
            null_loglik: self.null_loglik,
            lrt_statistic: self.lrt_statistic,
            p_value: self.p_value,
            boundary_mix: self.boundary_mix,
            converged: self.base.converged,
            warnings: &self.warnings,
        }
        .serialize(s)
    }
}

/// Upper-tail p-value of the LRT statistic.
pub fn lrt_p_value(statistic: f64, boundary_mix: bool) -> f64 {
    let s = statistic.max(0.0);
    if s == 0.0 {
        return 1.0;
    }
    let chi = ChiSquared::new(1.0).expect("one degree of freedom");
    let p = chi.sf(s);
    if boundary_mix {
        0.5 * p
    } else {
        p
    }
}

/// Joint maximum-likelihood fit of (θ, φ) plus the LRT against the plain
/// NHPP, using the plain χ²₁ reference.
pub fn fit_frailty(fleet: &Fleet, family: ParametricFamily) -> Result<FrailtyFit> {
    heterogeneity_lrt(fleet, family, false)
}

/// As [`fit_frailty`]; with `boundary_mix` the p-value uses the
/// ½χ²₀ + ½χ²₁ mixture appropriate for testing φ on its boundary.
pub fn heterogeneity_lrt(fleet: &Fleet, family: ParametricFamily, boundary_mix: bool) -> Result<FrailtyFit> {
    if fleet.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let null = fit_parametric(fleet, family, None)?;
    let null_theta = null.model.params().to_vec();
    let np = family.n_params();
    let domains = family.domains();

    // the log transform cannot represent θ₁ = 0 exactly; nudge a
    // constant-rate null into the interior for the starting simplex
    let start_theta: Vec<f64> = null_theta
        .iter()
        .zip(domains)
        .map(|(&v, d)| d.from_unconstrained(d.to_unconstrained(v.max(1e-12))))
        .collect();

    let decode = |z: &[f64]| -> (Vec<f64>, f64) {
        let theta = (0..np).map(|i| domains[i].from_unconstrained(z[i])).collect();
        (theta, z[np].exp().max(PHI_FLOOR))
    };
    let objective = |z: &[f64]| -> f64 {
        let (theta, phi) = decode(z);
        let model = match ParametricModel::new(family, theta) {
            Ok(m) => BcifModel::Parametric(m),
            Err(_) => return f64::INFINITY,
        };
        match unit_terms(fleet, &model) {
            Ok(Some(terms)) => {
                let v = -marginal_from_terms(&terms, phi);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            }
            _ => f64::INFINITY,
        }
    };

    let opts = NelderMeadOptions::default();
    let mut best_z: Option<Vec<f64>> = None;
    let mut best_f = f64::INFINITY;
    let mut evals = 0;
    let mut converged = false;
    for phi0 in [0.01f64, 0.3, 1.5] {
        let mut z: Vec<f64> = start_theta
            .iter()
            .zip(domains)
            .map(|(&v, d)| d.to_unconstrained(v))
            .collect();
        z.push(phi0.ln());
        let mut run_best = f64::INFINITY;
        let mut run_converged = false;
        for _ in 0..6 {
            let r = nelder_mead(objective, &z, opts);
            evals += r.evals;
            let improved = run_best - r.fx;
            if r.fx <= run_best {
                z = r.x;
                run_best = r.fx;
            }
            run_converged = r.converged;
            if !(improved > 1e-9) {
                break;
            }
        }
        if run_best < best_f {
            best_f = run_best;
            best_z = Some(z);
            converged = run_converged;
        }
    }

    let mut warnings = Vec::new();
    // nesting: the null fit with φ at the floor is always a candidate
    let floor_model = ParametricModel::new(family, null_theta.clone())?;
    let floor_ll = marginal_log_likelihood(fleet, &floor_model, PHI_FLOOR)?;
    let (theta, mut phi, mut marginal) = match best_z {
        Some(z) if -best_f > floor_ll => {
            let (theta, phi) = decode(&z);
            (theta, phi, -best_f)
        }
        _ => (null_theta, PHI_FLOOR, floor_ll),
    };
    if !marginal.is_finite() {
        return Err(Error::FitFailed(format!(
            "{family} frailty fit found no point with finite likelihood"
        )));
    }
    if phi < AT_FLOOR {
        phi = PHI_FLOOR;
        marginal = marginal.max(floor_ll);
    }
    if !converged {
        warnings.push("frailty optimizer hit its evaluation budget; best point returned".to_string());
    }
    if fleet.n_units() < 2 {
        warnings.push("a single unit cannot identify the frailty variance".to_string());
    }
    if phi == PHI_FLOOR {
        warnings.push("frailty variance estimate is at its lower bound".to_string());
    }

    let statistic = (-2.0 * (null.loglik - marginal)).max(0.0);
    let model = ParametricModel::new(family, theta.clone())?;
    let base = FitResult {
        model: model.into(),
        loglik: marginal,
        df: np + 1,
        aic: aic(marginal, np + 1),
        converged,
        n_function_evals: evals,
        init: start_theta,
    };
    Ok(FrailtyFit {
        base,
        phi,
        marginal_loglik: marginal,
        null_loglik: null.loglik,
        lrt_statistic: statistic,
        p_value: lrt_p_value(statistic, boundary_mix),
        boundary_mix,
        warnings,
    })
}
