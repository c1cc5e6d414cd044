mod common;

use avrel_core::dataset::{cif, exposure_at, summarize, validate, ViolationKind};
use avrel_core::fixtures::fleet_with_totals;
use avrel_core::{Calendar, Fleet, UnitHistory};
use common::*;
use proptest::prelude::*;

#[test]
fn table_one_rates() {
    let rows = [
        (123, 1550, 224, 2710.136, "0.083", "12.602"),
        (304, 2079, 154, 1278.661, "0.120", "6.839"),
        (23, 179, 43, 190.871, "0.225", "7.783"),
        (32, 280, 58, 97.780, "0.593", "8.750"),
    ];
    for (veh, months, events, km, rate, per) in rows {
        let s = summarize(&fleet_with_totals(veh, months, events, km).unwrap());
        assert_eq!(format!("{:.3}", s.events_per_kmile), rate);
        assert_eq!(format!("{:.3}", s.active_months_per_vehicle), per);
        assert_eq!(s.n_events, events);
        assert_eq!(s.active_months, months);
    }
}

#[test]
fn exposure_boundary_belongs_to_earlier_month() {
    let cal = Calendar::new(vec![30, 60]).unwrap();
    let u = UnitHistory::new("a", vec![], vec![0.1, 0.2]);
    assert_eq!(exposure_at(&u, &cal, 30.0).unwrap(), 0.1);
    assert_eq!(exposure_at(&u, &cal, 31.0).unwrap(), 0.2);
    assert!(exposure_at(&u, &cal, 0.0).is_err());
    assert!(exposure_at(&u, &cal, 60.5).is_err());
    let z = UnitHistory::new("z", vec![], vec![0.0, 0.0]);
    assert_eq!(exposure_at(&z, &cal, 45.0).unwrap(), 0.0);
}

#[test]
fn cif_simple_values() {
    let cal = Calendar::new(vec![10]).unwrap();
    let u = UnitHistory::new("a", vec![], vec![1.0]);
    let unit_rate = musa_okumoto(0.0, 1.0);
    assert!((cif(&u, &cal, &unit_rate, 5.0).unwrap() - 5.0).abs() < 1e-15);
    assert_eq!(cif(&u, &cal, &unit_rate, 0.0).unwrap(), 0.0);
    assert!(cif(&u, &cal, &unit_rate, 10.5).is_err());
    assert!(cif(&u, &cal, &unit_rate, -1.0).is_err());
}

#[test]
fn cif_matches_quadrature() {
    let cal = Calendar::two_year_study();
    let x: Vec<f64> = (0..24).map(|l| if l % 5 == 3 { 0.0 } else { 0.2 + 0.05 * l as f64 }).collect();
    let u = UnitHistory::new("a", vec![], x.clone());
    let models = [
        musa_okumoto(0.02, 0.4),
        gompertz(102.2539, 0.9975, 0.1623),
        weibull(817.203, 0.0474, 0.6304),
        spline(vec![243.3, 486.7], 730.0, vec![6.0, 16.0, 23.0, 11.0, 4.0]),
    ];
    for m in &models {
        let mut quad = 0.0;
        for l in 0..24 {
            let (lo, hi) = cal.bounds(l);
            if x[l] > 0.0 {
                quad += x[l] * adaptive_simpson(&|s| m.bif(s).unwrap(), lo.max(1e-12), hi, 1e-13);
            }
        }
        // the Weibull BIF is singular at 0; its first sliver is added in closed form
        quad += x[0] * m.bcif(1e-12).unwrap();
        let exact = cif(&u, &cal, m, 730.0).unwrap();
        assert!((exact - quad).abs() <= 1e-8 * exact, "{m:?}: {exact} vs {quad}");
    }
}

#[test]
fn validation_reports_each_problem() {
    let cal = Calendar::new(vec![30, 60]).unwrap();
    let good = Fleet::new(cal.clone(), vec![UnitHistory::new("a", vec![3.0], vec![1.0, 0.0])]).unwrap();
    assert!(validate(&good).is_empty());

    let at_zero = Fleet::new_unvalidated(cal.clone(), vec![UnitHistory::new("b", vec![0.0], vec![1.0, 1.0])]);
    let v = validate(&at_zero);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].unit_id.as_deref(), Some("b"));

    let idle = Fleet::new_unvalidated(cal.clone(), vec![UnitHistory::new("c", vec![45.0], vec![1.0, 0.0])]);
    let v = validate(&idle);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind, ViolationKind::EventInInactiveWindow);
    assert!(v[0].to_string().contains("event in inactive window"), "{}", v[0]);

    let negative = Fleet::new_unvalidated(cal, vec![UnitHistory::new("d", vec![], vec![-1.0, 1.0])]);
    assert_eq!(validate(&negative).len(), 1);

    let bad_cal = Fleet::new_unvalidated(Calendar::new_unvalidated(vec![30, 30]), vec![UnitHistory::new("e", vec![], vec![1.0, 1.0])]);
    assert!(!validate(&bad_cal).is_empty());
    assert!(Fleet::new(Calendar::new_unvalidated(vec![30, 30]), vec![]).is_err());
}

#[test]
fn empty_unit_summary() {
    let cal = Calendar::new(vec![30]).unwrap();
    let s = summarize(&Fleet::new(cal, vec![UnitHistory::new("a", vec![], vec![1.0])]).unwrap());
    assert_eq!(s.n_events, 0);
    assert_eq!(s.events_per_kmile, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn summary_counts_events(seed in 0u64..10_000, n in 1usize..30) {
        let f = random_fleet(seed, n, 8);
        let s = summarize(&f);
        let direct: usize = f.units().iter().map(|u| u.n_events()).sum();
        prop_assert_eq!(s.n_events, direct);
        if s.total_kmiles > 0.0 {
            prop_assert_eq!(s.events_per_kmile, s.n_events as f64 / s.total_kmiles);
        }
        prop_assert_eq!(s.active_months_per_vehicle, s.active_months as f64 / n as f64);
    }

    #[test]
    fn exposure_constant_within_month(l in 0usize..8, a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let f = random_fleet(l as u64, 1, 8);
        let cal = f.calendar();
        let (lo, hi) = cal.bounds(l);
        let u = &f.units()[0];
        let s = lo + a * (hi - lo);
        let t = lo + b * (hi - lo);
        prop_assert_eq!(exposure_at(u, cal, s).unwrap(), exposure_at(u, cal, t).unwrap());
        prop_assert_eq!(exposure_at(u, cal, hi).unwrap(), exposure_at(u, cal, s).unwrap());
    }

    #[test]
    fn cif_non_decreasing(seed in 0u64..10_000) {
        let f = random_fleet(seed, 1, 8);
        let m = gompertz(30.0, 0.99, 0.3);
        let mut prev = 0.0;
        for d in 0..=240 {
            let v = cif(&f.units()[0], f.calendar(), &m, d as f64).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }
}
