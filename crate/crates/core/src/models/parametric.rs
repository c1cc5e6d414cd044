//! Parametric baseline cumulative intensity families used in software
//! reliability growth modeling.
//!
//! | family       | BCIF Λ₀(t)                      | BIF λ₀(t)                                  |
//! |--------------|---------------------------------|--------------------------------------------|
//! | Musa-Okumoto | log(1 + θ₂θ₁t)/θ₁               | θ₂/(1 + θ₂θ₁t)                             |
//! | Gompertz     | θ₁θ₃^(θ₂^t) − θ₁θ₃              | θ₁θ₂^t θ₃^(θ₂^t) log θ₂ log θ₃             |
//! | Weibull      | θ₁[1 − exp(−θ₂t^θ₃)]            | θ₁θ₂θ₃t^(θ₃−1) exp(−θ₂t^θ₃)                |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Below this θ₁ the Musa-Okumoto BCIF is replaced by its θ₁ → 0 limit θ₂t.
pub const MUSA_OKUMOTO_LINEAR_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParametricFamily {
    MusaOkumoto,
    Gompertz,
    Weibull,
}

/// How a parameter is constrained; drives the optimizer's reparameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamDomain {
    /// θ > 0, mapped through log.
    Positive,
    /// 0 < θ < 1, mapped through logit.
    UnitInterval,
}

impl ParamDomain {
    pub fn to_unconstrained(self, v: f64) -> f64 {
        match self {
            ParamDomain::Positive => v.ln(),
            ParamDomain::UnitInterval => (v / (1.0 - v)).ln(),
        }
    }

    pub fn from_unconstrained(self, z: f64) -> f64 {
        match self {
            ParamDomain::Positive => z.exp(),
            ParamDomain::UnitInterval => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

impl ParametricFamily {
    pub const ALL: [ParametricFamily; 3] = [
        ParametricFamily::MusaOkumoto,
        ParametricFamily::Gompertz,
        ParametricFamily::Weibull,
    ];

    pub fn n_params(self) -> usize {
        match self {
            ParametricFamily::MusaOkumoto => 2,
            _ => 3,
        }
    }

    pub fn domains(self) -> &'static [ParamDomain] {
        use ParamDomain::*;
        match self {
            ParametricFamily::MusaOkumoto => &[Positive, Positive],
            ParametricFamily::Gompertz => &[Positive, UnitInterval, UnitInterval],
            ParametricFamily::Weibull => &[Positive, Positive, Positive],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParametricFamily::MusaOkumoto => "musa-okumoto",
            ParametricFamily::Gompertz => "gompertz",
            ParametricFamily::Weibull => "weibull",
        }
    }
}

impl fmt::Display for ParametricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParametricFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "musa-okumoto" | "musaokumoto" | "mo" => Ok(ParametricFamily::MusaOkumoto),
            "gompertz" => Ok(ParametricFamily::Gompertz),
            "weibull" => Ok(ParametricFamily::Weibull),
            other => Err(domain(format!("unknown parametric family '{other}'"))),
        }
    }
}

/// A parametric BCIF with validated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParametric")]
pub struct ParametricModel {
    family: ParametricFamily,
    theta: Vec<f64>,
}

#[derive(Deserialize)]
struct RawParametric {
    family: ParametricFamily,
    theta: Vec<f64>,
}

impl TryFrom<RawParametric> for ParametricModel {
    type Error = Error;

    fn try_from(raw: RawParametric) -> Result<Self> {
        ParametricModel::new(raw.family, raw.theta)
    }
}

impl ParametricModel {
    pub fn new(family: ParametricFamily, theta: Vec<f64>) -> Result<Self> {
        check_theta(family, &theta)?;
        Ok(ParametricModel { family, theta })
    }

    pub fn family(&self) -> ParametricFamily {
        self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Λ₀(t) for t ≥ 0. No τ bound: parametric families extrapolate.
    pub fn bcif(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain(format!("BCIF evaluated at t = {t}; need t >= 0")));
        }
        Ok(self.bcif_unchecked(t))
    }

    /// λ₀(t) for t ≥ 0; t = 0 is rejected only where the BIF is singular.
    pub fn bif(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain(format!("BIF evaluated at t = {t}; need t >= 0")));
        }
        if t == 0.0 && self.family == ParametricFamily::Weibull && self.theta[2] < 1.0 {
            return Err(domain(
                "Weibull BIF is singular at t = 0 when theta_3 < 1".to_string(),
            ));
        }
        Ok(self.bif_unchecked(t))
    }

    pub(crate) fn bcif_unchecked(&self, t: f64) -> f64 {
        let th = &self.theta;
        match self.family {
            ParametricFamily::MusaOkumoto => {
                if th[0] < MUSA_OKUMOTO_LINEAR_LIMIT {
                    th[1] * t
                } else {
                    (th[1] * th[0] * t).ln_1p() / th[0]
                }
            }
            ParametricFamily::Gompertz => {
                // θ₁θ₃(θ₃^(θ₂^t − 1) − 1), evaluated in log space
                let ln2 = th[1].ln();
                let ln3 = th[2].ln();
                th[0] * th[2] * ((t * ln2).exp_m1() * ln3).exp_m1()
            }
            ParametricFamily::Weibull => -th[0] * (-th[1] * t.powf(th[2])).exp_m1(),
        }
    }

    pub(crate) fn bif_unchecked(&self, t: f64) -> f64 {
        let th = &self.theta;
        match self.family {
            ParametricFamily::MusaOkumoto => th[1] / (1.0 + th[1] * th[0] * t),
            ParametricFamily::Gompertz => {
                let ln2 = th[1].ln();
                let ln3 = th[2].ln();
                let p = (t * ln2).exp();
                th[0] * (t * ln2 + p * ln3).exp() * ln2 * ln3
            }
            ParametricFamily::Weibull => {
                let tp = t.powf(th[2]);
                let core = th[0] * th[1] * th[2] * (-th[1] * tp).exp();
                if t == 0.0 {
                    if th[2] == 1.0 {
                        core
                    } else if th[2] > 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    core * t.powf(th[2] - 1.0)
                }
            }
        }
    }
}

fn check_theta(family: ParametricFamily, theta: &[f64]) -> Result<()> {
    let bad = |reason: String| Error::InvalidParameters {
        model: family.name().to_string(),
        reason,
    };
    if theta.len() != family.n_params() {
        return Err(bad(format!(
            "expected {} parameters, got {}",
            family.n_params(),
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(bad("parameters must be finite".into()));
    }
    match family {
        ParametricFamily::MusaOkumoto => {
            if theta[0] < 0.0 || theta[1] <= 0.0 {
                return Err(bad("need theta_1 >= 0 and theta_2 > 0".into()));
            }
        }
        ParametricFamily::Gompertz => {
            let unit = |v: f64| v > 0.0 && v < 1.0;
            if theta[0] <= 0.0 || !unit(theta[1]) || !unit(theta[2]) {
                return Err(bad(
                    "need theta_1 > 0 and theta_2, theta_3 in (0, 1)".into(),
                ));
            }
        }
        ParametricFamily::Weibull => {
            if theta.iter().any(|&v| v <= 0.0) {
                return Err(bad("all parameters must be positive".into()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gompertz_starts_at_zero() {
        let m = ParametricModel::new(ParametricFamily::Gompertz, vec![102.2539, 0.9975, 0.1623])
            .unwrap();
        assert_eq!(m.bcif(0.0).unwrap(), 0.0);
    }

    #[test]
    fn musa_okumoto_closed_form() {
        let m = ParametricModel::new(ParametricFamily::MusaOkumoto, vec![1.0, 1.0]).unwrap();
        let t = std::f64::consts::E - 1.0;
        assert!((m.bcif(t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn musa_okumoto_degenerate_is_linear() {
        let m = ParametricModel::new(ParametricFamily::MusaOkumoto, vec![0.0, 0.5933]).unwrap();
        assert_eq!(m.bcif(400.0).unwrap(), 0.5933 * 400.0);
        assert_eq!(m.bif(400.0).unwrap(), 0.5933);
        let tiny = ParametricModel::new(ParametricFamily::MusaOkumoto, vec![1e-12, 2.0]).unwrap();
        assert_eq!(tiny.bcif(10.0).unwrap(), 20.0);
    }

    #[test]
    fn weibull_unit_params() {
        let m = ParametricModel::new(ParametricFamily::Weibull, vec![1.0, 1.0, 1.0]).unwrap();
        assert!((m.bif(2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert!((m.bif(2.0).unwrap() - 0.1353).abs() < 1e-4);
    }

    #[test]
    fn weibull_singular_at_zero() {
        let m = ParametricModel::new(ParametricFamily::Weibull, vec![1.0, 1.0, 0.5]).unwrap();
        assert!(m.bif(0.0).is_err());
        let m = ParametricModel::new(ParametricFamily::Weibull, vec![2.0, 3.0, 1.0]).unwrap();
        assert_eq!(m.bif(0.0).unwrap(), 6.0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        use ParametricFamily::*;
        assert!(ParametricModel::new(Gompertz, vec![1.0, 1.0, 0.5]).is_err());
        assert!(ParametricModel::new(Gompertz, vec![1.0, 0.5]).is_err());
        assert!(ParametricModel::new(MusaOkumoto, vec![-1.0, 0.5]).is_err());
        assert!(ParametricModel::new(MusaOkumoto, vec![0.0, 0.0]).is_err());
        assert!(ParametricModel::new(Weibull, vec![1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn transforms_round_trip() {
        for d in [ParamDomain::Positive, ParamDomain::UnitInterval] {
            for v in [0.001, 0.3, 0.9975] {
                let back = d.from_unconstrained(d.to_unconstrained(v));
                assert!((back - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn family_parsing() {
        assert_eq!("musa-okumoto".parse::<ParametricFamily>().unwrap(), ParametricFamily::MusaOkumoto);
        assert_eq!("Weibull".parse::<ParametricFamily>().unwrap(), ParametricFamily::Weibull);
        assert!("spline".parse::<ParametricFamily>().is_err());
    }
}
