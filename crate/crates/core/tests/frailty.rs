mod common;

use avrel_core::estimation::{fit_parametric, log_likelihood};
use avrel_core::frailty::{fit_frailty, heterogeneity_lrt, lrt_p_value, marginal_log_likelihood, PHI_FLOOR};
use avrel_core::models::{BcifModel, ParametricFamily, ParametricModel};
use avrel_core::simulation::{
    canonical_scenarios, resample_exposure, simulate_fleet, simulate_fleet_with_frailty, synthetic_pool,
};
use common::*;
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

fn scenario_one() -> BcifModel {
    canonical_scenarios()[0].clone().into()
}

fn frailty_fleet(n: usize, phi: f64, seed: u64) -> avrel_core::Fleet {
    let pool = resample_exposure(&synthetic_pool(), n, seed).unwrap();
    simulate_fleet_with_frailty(&pool, &scenario_one(), phi, seed ^ 0xABCD).unwrap()
}

/// Gompertz curve closest to the Scenario 1 truth; the null model for LRT
/// checks, so the fitted family is correctly specified.
fn gompertz_null() -> BcifModel {
    gompertz(99.2, 0.99733, 0.1551)
}

fn parametric(m: &BcifModel) -> &ParametricModel {
    match m {
        BcifModel::Parametric(p) => p,
        BcifModel::Spline(_) => unreachable!(),
    }
}

/// Mean-one gamma density with variance φ, written out directly.
fn gamma_density(u: f64, phi: f64) -> f64 {
    let k = 1.0 / phi;
    ((k - 1.0) * u.ln() - u * k + k * k.ln() - ln_gamma(k)).exp()
}

#[test]
fn vanishing_phi_recovers_nhpp_loglik() {
    let model = gompertz(40.0, 0.995, 0.3);
    for seed in 0..20 {
        let fleet = random_fleet(seed, 25, 18);
        let nhpp = log_likelihood(&fleet, &model).unwrap();
        let marg = marginal_log_likelihood(&fleet, parametric(&model), 1e-8).unwrap();
        assert!((nhpp - marg).abs() < 1e-4, "seed {seed}: {nhpp} vs {marg}");
    }
}

#[test]
fn marginal_loglik_is_continuous_towards_floor() {
    let model = weibull(50.0, 0.002, 1.1);
    let fleet = random_fleet(3, 30, 12);
    let nhpp = log_likelihood(&fleet, &model).unwrap();
    let mut prev = f64::INFINITY;
    for e in 2..=10 {
        let gap = (marginal_log_likelihood(&fleet, parametric(&model), 10f64.powi(-e)).unwrap() - nhpp).abs();
        assert!(gap <= prev * 1.0001 + 1e-12, "gap grew at 1e-{e}");
        prev = gap;
    }
    assert!(prev < 1e-6);
}

#[test]
fn gamma_density_is_normalized() {
    for &phi in &[0.1, 1.0, 5.0] {
        let k = 1.0f64 / phi;
        // substitute u = v^p to tame the singularity at 0 when k < 1
        let p = if k < 1.0 { 1.0 / k } else { 1.0 };
        let f = |v: f64| {
            if v == 0.0 {
                return if k < 1.0 { p * k.powf(k) / ln_gamma(k).exp() } else { 0.0 };
            }
            let u = v.powf(p);
            gamma_density(u, phi) * p * v.powf(p - 1.0)
        };
        let upper = (200.0 * phi.max(1.0)).powf(1.0 / p);
        let pieces = 400;
        let integrate = |g: &dyn Fn(f64) -> f64| {
            (0..pieces)
                .map(|i| {
                    let (a, b) = (upper * i as f64 / pieces as f64, upper * (i + 1) as f64 / pieces as f64);
                    adaptive_simpson(&g, a, b, 1e-13)
                })
                .sum::<f64>()
        };
        let total = integrate(&f);
        assert!((total - 1.0).abs() < 1e-6, "phi {phi}: {total}");
        let mean = integrate(&|v: f64| f(v) * v.powf(p));
        assert!((mean - 1.0).abs() < 1e-6, "phi {phi}: mean {mean}");
    }
}

#[test]
fn nesting_holds_on_random_fleets() {
    for seed in 0..10 {
        let fleet = random_fleet(100 + seed, 30, 18);
        for family in [ParametricFamily::Gompertz, ParametricFamily::Weibull] {
            let fit = fit_frailty(&fleet, family).unwrap();
            assert!(fit.marginal_loglik >= fit.null_loglik - 1e-6, "{seed} {family:?}");
            assert!(fit.lrt_statistic >= 0.0);
            assert!((0.0..=1.0).contains(&fit.p_value));
            assert!(fit.phi >= PHI_FLOOR);
            assert_eq!(fit.base.df, family.n_params() + 1);
            let null = fit_parametric(&fleet, family, None).unwrap();
            assert!((null.loglik - fit.null_loglik).abs() < 1e-9);
        }
    }
}

#[test]
fn homogeneous_data_gives_floor_and_large_p() {
    let fits: Vec<_> = (0..60)
        .map(|r| {
            let pool = resample_exposure(&synthetic_pool(), 200, 50 + r).unwrap();
            let fleet = simulate_fleet(&pool, &gompertz_null(), 90 + r).unwrap();
            fit_frailty(&fleet, ParametricFamily::Gompertz).unwrap()
        })
        .collect();
    // under homogeneity the maximizer sits on the boundary about half the time
    let at_floor: Vec<_> = fits.iter().filter(|f| f.phi < 1e-6).collect();
    assert!(at_floor.len() >= 20, "{}/60", at_floor.len());
    for f in &at_floor {
        assert!(f.lrt_statistic < 1e-6 && f.p_value > 0.99);
        assert!(f.warnings.iter().any(|w| w.contains("lower bound")), "{:?}", f.warnings);
    }
    let rejected = fits.iter().filter(|f| f.rejects(0.05)).count();
    assert!(rejected <= 8, "{rejected}/60");
}

#[test]
fn variance_recovered_at_large_n() {
    let hits = (0..50)
        .filter(|&r| {
            let fit = fit_frailty(&frailty_fleet(500, 0.5, 7000 + r), ParametricFamily::Gompertz).unwrap();
            (0.3..=0.7).contains(&fit.phi)
        })
        .count();
    assert!(hits >= 40, "{hits}/50");
}

#[test]
fn boundary_mixture_halves_p_value() {
    let fleet = frailty_fleet(150, 0.5, 11);
    let plain = heterogeneity_lrt(&fleet, ParametricFamily::Gompertz, false).unwrap();
    let mixed = heterogeneity_lrt(&fleet, ParametricFamily::Gompertz, true).unwrap();
    assert_eq!(plain.lrt_statistic, mixed.lrt_statistic);
    assert!((mixed.p_value - 0.5 * plain.p_value).abs() < 1e-15);
}

#[test]
fn serialized_record_has_expected_keys() {
    let fleet = frailty_fleet(60, 0.5, 12);
    let fit = fit_frailty(&fleet, ParametricFamily::Weibull).unwrap();
    let v = serde_json::to_value(&fit).unwrap();
    for key in ["family", "theta", "phi", "marginal_loglik", "lrt_statistic", "p_value"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["theta"].as_array().unwrap().len(), 3);
}

proptest! {
    #[test]
    fn p_value_decreases_in_statistic(a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(lrt_p_value(hi, false) <= lrt_p_value(lo, false));
        prop_assert!(lrt_p_value(hi, true) <= lrt_p_value(lo, true));
    }

    #[test]
    fn marginal_loglik_never_exceeds_nhpp_at_same_theta_for_empty_units(phi in 1e-6f64..10.0, c in 0.0f64..20.0) {
        // a unit with no events contributes −log(1 + φc)/φ, which is ≥ −c
        let contribution = -(phi * c).ln_1p() / phi;
        prop_assert!(contribution >= -c - 1e-12);
    }
}
