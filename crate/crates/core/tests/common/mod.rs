#![allow(dead_code)]

use avrel_core::models::{BcifModel, ParametricFamily, ParametricModel, SplineBasis, SplineModel};
use avrel_core::rng::rng_from;
use avrel_core::{Calendar, Fleet, UnitHistory};
use rand::Rng;
use std::sync::Arc;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let x = a + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Adaptive Simpson to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// A random valid fleet on a `months`-month calendar of 30-day months.
pub fn random_fleet(seed: u64, n_units: usize, months: usize) -> Fleet {
    let cal = Calendar::uniform(months, 30).unwrap();
    let mut rng = rng_from(seed, &[0xF1EE7]);
    let units = (0..n_units)
        .map(|i| {
            let x: Vec<f64> = (0..months)
                .map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random_range(0.05..2.0) })
                .collect();
            let mut ev = Vec::new();
            for (l, &xl) in x.iter().enumerate() {
                if xl > 0.0 {
                    for _ in 0..rng.random_range(0..3) {
                        ev.push((l * 30 + rng.random_range(1..=30)) as f64);
                    }
                }
            }
            UnitHistory::new(format!("u{i}"), ev, x)
        })
        .collect();
    Fleet::new(cal, units).unwrap()
}

pub fn musa_okumoto(t1: f64, t2: f64) -> BcifModel {
    ParametricModel::new(ParametricFamily::MusaOkumoto, vec![t1, t2]).unwrap().into()
}

pub fn gompertz(t1: f64, t2: f64, t3: f64) -> BcifModel {
    ParametricModel::new(ParametricFamily::Gompertz, vec![t1, t2, t3]).unwrap().into()
}

pub fn weibull(t1: f64, t2: f64, t3: f64) -> BcifModel {
    ParametricModel::new(ParametricFamily::Weibull, vec![t1, t2, t3]).unwrap().into()
}

pub fn spline(interior: Vec<f64>, tau: f64, beta: Vec<f64>) -> BcifModel {
    let basis = Arc::new(SplineBasis::new(3, interior, tau).unwrap());
    SplineModel::new(basis, beta).unwrap().into()
}
