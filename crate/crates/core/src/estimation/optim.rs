//! Minimizers used by the fitting routines: a Nelder-Mead simplex search for
//! the unconstrained (reparameterized) parametric fits, and projected BFGS
//! and projected Newton methods for problems with non-negativity bounds.

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Converged once every vertex is within this distance (∞-norm) of the best.
    pub diameter_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 5000,
            diameter_tol: 1e-8,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
    /// Objective value after each accepted iteration (projected BFGS only).
    pub trace: Vec<f64>,
}

fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` with the Nelder-Mead simplex method (reflection 1,
/// expansion 2, contraction ½, shrink ½). NaN values count as +∞.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> MinimizeResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        nan_to_inf(f(x))
    };
    if n == 0 {
        let fx = eval(x0, &mut evals);
        return MinimizeResult {
            x: vec![],
            fx,
            evals,
            converged: true,
            trace: vec![],
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (v, b) in x.iter_mut().zip(&best) {
                *v = b + 0.5 * (*v - b);
            }
            *fx = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    MinimizeResult {
        x,
        fx,
        evals,
        converged,
        trace: vec![],
    }
}

/// Settings for [`minimize_nonnegative`].
#[derive(Debug, Clone, Copy)]
pub struct ProjectedBfgsOptions {
    pub max_iter: usize,
    /// Converged once the projected gradient ∞-norm is below `gtol · (1 + |f|)`.
    pub gtol: f64,
}

impl Default for ProjectedBfgsOptions {
    fn default() -> Self {
        ProjectedBfgsOptions {
            max_iter: 2000,
            gtol: 1e-11,
        }
    }
}

fn projected_gradient(x: &[f64], g: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| if xi <= 0.0 && gi > 0.0 { 0.0 } else { gi })
        .collect()
}

/// Minimizes a smooth `f` over the orthant x ≥ 0 with a two-metric
/// projected BFGS method. `fg` returns f(x) and writes ∇f(x) into its
/// second argument; it may return +∞ for infeasible points.
///
/// Coordinates near the bound whose gradient pushes outward are stepped to
/// exactly zero, so the solution can sit on the boundary.
pub fn minimize_nonnegative<F>(mut fg: F, x0: &[f64], opts: ProjectedBfgsOptions) -> MinimizeResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut x: Vec<f64> = x0.iter().map(|v| v.max(0.0)).collect();
    let mut g = vec![0.0; n];
    let mut f = nan_to_inf(fg(&x, &mut g));
    evals += 1;
    let mut trace = vec![f];
    if !f.is_finite() {
        return MinimizeResult {
            x,
            fx: f,
            evals,
            converged: false,
            trace,
        };
    }

    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let mut converged = false;
    let mut g_new = vec![0.0; n];

    for _ in 0..opts.max_iter {
        let pg = projected_gradient(&x, &g);
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm <= opts.gtol * (1.0 + f.abs()) {
            converged = true;
            break;
        }

        // ε-active set: near the bound with outward gradient
        let step_to_bound: f64 = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| (xi - (xi - gi).max(0.0)).abs())
            .fold(0.0, f64::max);
        let eps = step_to_bound.min(1e-6);
        let active: Vec<bool> = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| xi <= eps && gi > 0.0)
            .collect();

        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                d[i] = -x[i];
            } else {
                d[i] = -(0..n).filter(|&j| !active[j]).map(|j| h[i][j] * g[j]).sum::<f64>();
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            if fresh {
                converged = pg_norm <= 1e-6 * (1.0 + f.abs());
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let x_try: Vec<f64> = x
                .iter()
                .zip(&d)
                .map(|(xi, di)| (xi + alpha * di).max(0.0))
                .collect();
            let f_try = nan_to_inf(fg(&x_try, &mut g_new));
            evals += 1;
            let decrease: f64 = g
                .iter()
                .zip(x_try.iter().zip(&x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if f_try.is_finite() && f_try <= f + 1e-4 * decrease {
                accepted = Some((x_try, f_try));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_next, f_next)) = accepted else {
            if fresh {
                converged = pg_norm <= 1e-6 * (1.0 + f.abs());
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if sy > 1e-14 * (ss * yy).sqrt() && sy > 0.0 {
            if fresh {
                let scale = sy / yy;
                for (i, row) in h.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                }
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let stalled = (f - f_next).abs() <= f64::EPSILON * (1.0 + f.abs()) && ss == 0.0;
        x = x_next;
        f = f_next;
        g.copy_from_slice(&g_new);
        trace.push(f);
        if stalled {
            break;
        }
    }
    if !converged {
        let pg = projected_gradient(&x, &g);
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        converged = pg_norm <= 1e-6 * (1.0 + f.abs());
    }
    MinimizeResult {
        x,
        fx: f,
        evals,
        converged,
        trace,
    }
}

/// Settings for [`minimize_nonnegative_newton`].
#[derive(Debug, Clone, Copy)]
pub struct ProjectedNewtonOptions {
    pub max_iter: usize,
    /// Converged once the projected gradient ∞-norm is below `gtol · (1 + |f|)`.
    pub gtol: f64,
}

impl Default for ProjectedNewtonOptions {
    fn default() -> Self {
        ProjectedNewtonOptions {
            max_iter: 500,
            gtol: 1e-11,
        }
    }
}

/// Solves (A + μI) x = b in place for symmetric positive definite A + μI;
/// false when the factorization breaks down.
pub(crate) fn cholesky_solve(a: &[f64], n: usize, mu: f64, b: &mut [f64]) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j] + if i == j { mu } else { 0.0 };
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return false;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    true
}

/// Minimizes a smooth convex `f` over the orthant x ≥ 0 with a projected
/// Newton method. `fgh` returns f(x), writes ∇f(x) into its second argument
/// and, when given a buffer, the row-major Hessian into its third; it may
/// return +∞ for infeasible points.
///
/// Coordinates near the bound whose gradient pushes outward are stepped to
/// exactly zero; the Newton system is solved on the remaining coordinates,
/// with a growing ridge when their Hessian block is singular.
pub fn minimize_nonnegative_newton<F>(mut fgh: F, x0: &[f64], opts: ProjectedNewtonOptions) -> MinimizeResult
where
    F: FnMut(&[f64], &mut [f64], Option<&mut [f64]>) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut x: Vec<f64> = x0.iter().map(|v| v.max(0.0)).collect();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    let mut f = nan_to_inf(fgh(&x, &mut g, Some(&mut h)));
    evals += 1;
    let mut trace = vec![f];
    if !f.is_finite() {
        return MinimizeResult {
            x,
            fx: f,
            evals,
            converged: false,
            trace,
        };
    }
    let mut converged = false;
    let mut g_try = vec![0.0; n];

    for _ in 0..opts.max_iter {
        let pg = projected_gradient(&x, &g);
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm <= opts.gtol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let step_to_bound: f64 = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| (xi - (xi - gi).max(0.0)).abs())
            .fold(0.0, f64::max);
        let eps = step_to_bound.min(1e-6);
        let free: Vec<usize> = (0..n).filter(|&i| !(x[i] <= eps && g[i] > 0.0)).collect();

        let mut d: Vec<f64> = x.iter().map(|v| -v).collect();
        let nf = free.len();
        if nf > 0 {
            let sub: Vec<f64> = free
                .iter()
                .flat_map(|&i| free.iter().map(move |&j| (i, j)))
                .map(|(i, j)| h[i * n + j])
                .collect();
            let scale = free.iter().map(|&i| h[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
            let mut mu = 0.0;
            let mut rhs: Vec<f64>;
            loop {
                rhs = free.iter().map(|&i| -g[i]).collect();
                if cholesky_solve(&sub, nf, mu, &mut rhs) {
                    break;
                }
                mu = if mu == 0.0 { 1e-12 * scale } else { mu * 100.0 };
                if mu > 1e12 * scale {
                    rhs = free.iter().map(|&i| -g[i] / scale).collect();
                    break;
                }
            }
            for (k, &i) in free.iter().enumerate() {
                d[i] = rhs[k];
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let x_try: Vec<f64> = x
                .iter()
                .zip(&d)
                .map(|(xi, di)| (xi + alpha * di).max(0.0))
                .collect();
            let f_try = nan_to_inf(fgh(&x_try, &mut g_try, None));
            evals += 1;
            let decrease: f64 = g
                .iter()
                .zip(x_try.iter().zip(&x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if f_try.is_finite() && f_try <= f + 1e-4 * decrease.min(0.0) {
                accepted = Some(x_try);
                break;
            }
            alpha *= 0.5;
        }
        let Some(x_next) = accepted else {
            break;
        };
        let moved = x_next.iter().zip(&x).any(|(a, b)| a != b);
        let f_next = nan_to_inf(fgh(&x_next, &mut g, Some(&mut h)));
        evals += 1;
        let stalled = !moved || (f - f_next).abs() <= 4.0 * f64::EPSILON * (1.0 + f.abs());
        x = x_next;
        f = f_next;
        trace.push(f);
        if stalled {
            break;
        }
    }
    if !converged {
        let pg = projected_gradient(&x, &g);
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        converged = pg_norm <= 1e-6 * (1.0 + f.abs());
    }
    MinimizeResult {
        x,
        fx: f,
        evals,
        converged,
        trace,
    }
}

/// H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ with ρ = 1/(sᵀy).
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_one_dimensional() {
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn nelder_mead_respects_budget() {
        let opts = NelderMeadOptions {
            max_evals: 20,
            ..Default::default()
        };
        let r = nelder_mead(|x| x.iter().map(|v| v * v).sum(), &[5.0, 5.0, 5.0], opts);
        assert!(!r.converged);
        assert!(r.evals <= 20 + 4);
    }

    #[test]
    fn nelder_mead_treats_nan_as_worst() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let r = nelder_mead(f, &[0.2], NelderMeadOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn projected_bfgs_hits_bound() {
        // min (x0 - 2)^2 + (x1 + 1)^2 + x0 x1 over x >= 0 → x1 = 0, x0 = 2
        let fg = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 2.0) + x[1];
            g[1] = 2.0 * (x[1] + 1.0) + x[0];
            (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2) + x[0] * x[1]
        };
        let r = minimize_nonnegative(fg, &[1.0, 1.0], ProjectedBfgsOptions::default());
        assert!(r.converged);
        assert_eq!(r.x[1], 0.0);
        assert!((r.x[0] - 2.0).abs() < 1e-8);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn projected_newton_hits_bound() {
        let fgh = |x: &[f64], g: &mut [f64], h: Option<&mut [f64]>| {
            g[0] = 2.0 * (x[0] - 2.0) + x[1];
            g[1] = 2.0 * (x[1] + 1.0) + x[0];
            if let Some(h) = h {
                h.copy_from_slice(&[2.0, 1.0, 1.0, 2.0]);
            }
            (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2) + x[0] * x[1]
        };
        let r = minimize_nonnegative_newton(fgh, &[1.0, 1.0], ProjectedNewtonOptions::default());
        assert!(r.converged);
        assert_eq!(r.x[1], 0.0);
        assert!((r.x[0] - 2.0).abs() < 1e-10);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn projected_newton_singular_block() {
        // f = (x0 + x1 - 1)^2 + x2: flat along x0 - x1, x2 pushed to 0
        let fgh = |x: &[f64], g: &mut [f64], h: Option<&mut [f64]>| {
            let r = x[0] + x[1] - 1.0;
            g.copy_from_slice(&[2.0 * r, 2.0 * r, 1.0]);
            if let Some(h) = h {
                h.copy_from_slice(&[2.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
            }
            r * r + x[2]
        };
        let r = minimize_nonnegative_newton(fgh, &[0.3, 0.1, 2.0], ProjectedNewtonOptions::default());
        assert!(r.converged);
        assert_eq!(r.x[2], 0.0);
        assert!((r.x[0] + r.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn projected_bfgs_interior_quadratic() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = [1.0, 2.0, 3.0];
        let fg = |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..3 {
                let ax: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
                g[i] = ax - b[i];
                f += 0.5 * x[i] * ax - b[i] * x[i];
            }
            f
        };
        let r = minimize_nonnegative(fg, &[0.0, 0.0, 0.0], ProjectedBfgsOptions::default());
        assert!(r.converged);
        let mut g = [0.0; 3];
        fg(&r.x, &mut g);
        assert!(g.iter().all(|v| v.abs() < 1e-9), "{g:?}");
    }
}
