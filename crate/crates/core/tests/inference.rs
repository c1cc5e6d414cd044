mod common;

use avrel_core::estimation::{fit_parametric_with, FitOptions, FitResult};
use avrel_core::inference::{
    bootstrap_bcif, bootstrap_with, calibrate_scb, day_grid, default_window, draw_weights, expected_events_curve,
    order_stat_indices, parametric_adequacy, pointwise_band, BootstrapEnsemble, BootstrapOptions,
};
use avrel_core::models::{BcifModel, ParametricFamily};
use avrel_core::rng::rng_from;
use avrel_core::simulation::{canonical_scenarios, resample_exposure, simulate_fleet, synthetic_pool};
use avrel_core::{Calendar, Fleet, UnitHistory};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn scenario_fleet(k: usize, n: usize, seed: u64) -> Fleet {
    let pool = resample_exposure(&synthetic_pool(), n, seed).unwrap();
    simulate_fleet(&pool, &canonical_scenarios()[k].clone().into(), seed + 1).unwrap()
}

/// Curves s_b·base(t) with scale factors spread around 1.
fn scaled_ensemble(base: &BcifModel, b: usize, seed: u64) -> BootstrapEnsemble {
    let grid = day_grid(730.0);
    let values: Vec<f64> = grid.iter().map(|&t| base.bcif(t).unwrap()).collect();
    let mut rng = rng_from(seed, &[]);
    let curves = (0..b)
        .map(|i| {
            let s = if i == 0 { 1.0 } else { 1.0 + rng.random_range(-0.3..0.3) };
            values.iter().map(|v| s * v).collect()
        })
        .collect();
    BootstrapEnsemble {
        grid,
        curves,
        seeds: vec![0; b],
        selected_b: vec![1; b],
        models: vec![],
    }
}

fn random_ensemble(seed: u64, b: usize, len: usize) -> BootstrapEnsemble {
    let mut rng = rng_from(seed, &[1]);
    let curves = (0..b)
        .map(|_| {
            let mut acc = 0.0;
            (0..len)
                .map(|_| {
                    acc += rng.random_range(0.0..1.0);
                    acc
                })
                .collect()
        })
        .collect();
    BootstrapEnsemble {
        grid: (1..=len).map(|d| d as f64).collect(),
        curves,
        seeds: vec![0; b],
        selected_b: vec![1; b],
        models: vec![],
    }
}

#[test]
fn exponential_weights_have_unit_mean() {
    let w = draw_weights(1_000_000, 12);
    let mean = w.as_slice().iter().sum::<f64>() / 1e6;
    assert!((mean - 1.0).abs() < 0.005, "{mean}");
    assert!(w.as_slice().iter().all(|&v| v > 0.0));
    assert_eq!(draw_weights(100, 5), draw_weights(100, 5));
}

#[test]
fn single_unit_replicates_coincide() {
    let cal = Calendar::uniform(12, 30).unwrap();
    let events = vec![5.0, 20.0, 41.0, 90.0, 100.0, 170.0, 200.0, 260.0, 300.0, 350.0];
    let fleet = Fleet::new(cal, vec![UnitHistory::new("solo", events, vec![0.7; 12])]).unwrap();
    let ens = bootstrap_bcif(&fleet, 40, &[1], 3).unwrap();
    for c in &ens.curves[1..] {
        for (a, b) in c.iter().zip(&ens.curves[0]) {
            assert!((a - b).abs() <= 1e-6 * b.max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn ensemble_shape_and_reproducibility() {
    let fleet = scenario_fleet(0, 80, 40);
    let a = bootstrap_bcif(&fleet, 30, &[1, 2, 3], 9).unwrap();
    let b = bootstrap_bcif(&fleet, 30, &[1, 2, 3], 9).unwrap();
    assert_eq!(a, b);
    let c = bootstrap_bcif(&fleet, 30, &[1, 2, 3], 10).unwrap();
    assert_ne!(a.curves, c.curves);
    assert_eq!(a.len(), 30);
    for (curve, model) in a.curves.iter().zip(&a.models) {
        assert_eq!(curve.len(), a.grid.len());
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(model.bcif(0.0).unwrap(), 0.0);
        assert!(curve[0] >= 0.0);
    }
    assert!(bootstrap_bcif(&fleet, 1, &[1], 9).is_err());
}

#[test]
fn frozen_knots_are_respected() {
    let fleet = scenario_fleet(1, 80, 41);
    let opts = BootstrapOptions {
        candidate_b: vec![1, 2, 3],
        freeze_b: Some(2),
        ..BootstrapOptions::new(10)
    };
    let ens = bootstrap_with(&fleet, &opts, 1).unwrap();
    assert!(ens.selected_b.iter().all(|&b| b == 2));
    let bad = BootstrapOptions {
        freeze_b: Some(7),
        candidate_b: vec![1, 2],
        ..BootstrapOptions::new(10)
    };
    assert!(bootstrap_with(&fleet, &bad, 1).is_err());
}

#[test]
fn knot_selection_varies_across_replicates() {
    let fleet = scenario_fleet(1, 200, 42);
    let ens = bootstrap_bcif(&fleet, 100, &avrel_core::estimation::DEFAULT_CANDIDATE_KNOTS, 4).unwrap();
    let mut distinct = ens.selected_b.clone();
    distinct.sort_unstable();
    distinct.dedup();
    assert!(distinct.len() >= 2, "{:?}", ens.selected_b);
}

#[test]
fn order_statistic_error_names_minimum() {
    let err = order_stat_indices(40, 0.01).unwrap_err().to_string();
    assert!(err.contains("0.025"), "{err}");
    let ens = random_ensemble(1, 40, 5);
    assert!(pointwise_band(&ens, 0.01).is_err());
    assert!(pointwise_band(&ens, 0.05).is_ok());
}

#[test]
fn adequacy_of_median_and_shifted_curves() {
    let base = gompertz(102.2539, 0.9975, 0.1623);
    let ens = scaled_ensemble(&base, 200, 3);
    let fit = FitResult {
        model: base.clone(),
        loglik: 0.0,
        df: 3,
        aic: 6.0,
        converged: true,
        n_function_evals: 0,
        init: vec![],
    };
    assert!(parametric_adequacy(&ens, &fit, 0.05, 1.0, 730.0).unwrap());
    let band = calibrate_scb(&ens, 0.05, 1.0, 730.0).unwrap();
    let mut bumped: Vec<f64> = band.grid.iter().map(|&t| base.bcif(t).unwrap()).collect();
    bumped[300] = band.upper[300] + 1.0;
    assert!(!band.contains(&bumped));
}

#[test]
fn scb_contains_pci_and_covers() {
    let fleet = scenario_fleet(0, 120, 43);
    let ens = bootstrap_bcif(&fleet, 200, &[1, 2, 3], 5).unwrap();
    let (lo, hi) = default_window(&fleet).unwrap();
    let scb = calibrate_scb(&ens, 0.05, lo, hi).unwrap();
    let pci = pointwise_band(&ens, 0.05).unwrap();
    for (k, &t) in scb.grid.iter().enumerate() {
        let j = pci.grid.iter().position(|&g| g == t).unwrap();
        assert!(scb.lower[k] <= pci.lower[j] && scb.upper[k] >= pci.upper[j]);
        assert!(scb.lower[k] <= scb.upper[k] && scb.lower[k] >= 0.0);
    }
    let cal = scb.calibration.as_ref().unwrap();
    assert!(cal.coverage >= 0.95);
    assert!(scb.achieved_alpha <= 0.05);
    // coverage recomputed from the raw curves
    let inside = ens
        .curves
        .iter()
        .filter(|c| {
            scb.grid.iter().enumerate().all(|(k, &t)| {
                let v = c[ens.grid.iter().position(|&g| g == t).unwrap()];
                scb.lower[k] <= v && v <= scb.upper[k]
            })
        })
        .count();
    assert_eq!(inside as f64 / 200.0, cal.coverage);
    // evaluated coverages never rise with alpha_p
    assert!(cal.evaluated.windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn single_point_window_matches_pointwise() {
    let ens = random_ensemble(7, 400, 20);
    let scb = calibrate_scb(&ens, 0.05, 10.0, 10.0).unwrap();
    assert_eq!(scb.grid, vec![10.0]);
    assert!((scb.achieved_alpha - 0.05).abs() <= 1.0 / 400.0 + 1e-12);
    assert!(calibrate_scb(&ens, 0.05, 12.0, 11.0).is_err());
    assert!(calibrate_scb(&ens, 0.05, 100.0, 200.0).is_err());
}

#[test]
fn expected_curve_matches_event_total_at_mle() {
    let fleet = scenario_fleet(0, 100, 44);
    let fit = fit_parametric_with(&fleet, ParametricFamily::MusaOkumoto, None, &FitOptions::constant_rate()).unwrap();
    let grid = day_grid(730.0);
    let c = expected_events_curve(&fleet, &fit.model, &grid).unwrap();
    let total = fleet.n_events() as f64;
    assert!((c.expected.last().unwrap() - total).abs() < 1e-8 * total);
    assert_eq!(*c.observed.last().unwrap(), fleet.n_events());
    assert!(c.expected.windows(2).all(|w| w[1] >= w[0]));
    assert!(c.observed.windows(2).all(|w| w[1] >= w[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn smaller_alpha_never_narrows(seed in 0u64..10_000, b in 100usize..300) {
        let ens = random_ensemble(seed, b, 15);
        let wide = pointwise_band(&ens, 0.01f64.max(2.0 / b as f64)).unwrap();
        let narrow = pointwise_band(&ens, 0.10).unwrap();
        for k in 0..15 {
            prop_assert!(wide.lower[k] <= narrow.lower[k] && wide.upper[k] >= narrow.upper[k]);
            prop_assert!(narrow.lower[k] <= narrow.upper[k]);
        }
    }

    #[test]
    fn scb_coverage_at_least_nominal(seed in 0u64..10_000, alpha in 0.02f64..0.3) {
        let ens = random_ensemble(seed, 200, 12);
        let scb = calibrate_scb(&ens, alpha, 2.0, 11.0).unwrap();
        let cal = scb.calibration.unwrap();
        prop_assert!(cal.coverage >= 1.0 - alpha - 1e-12);
        prop_assert!(scb.achieved_alpha <= alpha + 1e-12);
    }
}
