use nalgebra::{DMatrix, DVector};

use super::diff::{numerical_gradient, numerical_hessian, StepRule};
use super::{OptimError, OptimResult, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultivariateOptions {
    /// Initial simplex edge along coordinate j is `initial_step * max(1, |x0_j|)`.
    pub initial_step: f64,
    /// Attach the central-difference Hessian at the returned point.
    pub hessian: bool,
}

impl Default for MultivariateOptions {
    fn default() -> Self {
        Self { initial_step: 0.05, hessian: false }
    }
}

/// Maximizes `f` from `x0`: Nelder–Mead simplex, then a BFGS polish driven by
/// central-difference gradients.
pub fn maximize_multivariate<F>(f: F, x0: &[f64], tol: &Tolerances) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    maximize_multivariate_with(f, x0, tol, &MultivariateOptions::default())
}

pub fn maximize_multivariate_with<F>(
    mut f: F,
    x0: &[f64],
    tol: &Tolerances,
    opts: &MultivariateOptions,
) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    debug_assert!(tol.is_valid());
    let f0 = f(x0);
    if !f0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }
    // Work with the minimization of g = -f; NaN and +inf count as infeasible.
    let mut g = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let budget = tol.max_iters;
    let (mut x, mut gx, nm_iters, nm_converged) = nelder_mead(&mut g, x0, -f0, opts.initial_step, tol, budget);
    let mut iterations = nm_iters;
    let mut converged = nm_converged;

    let remaining = budget.saturating_sub(nm_iters).max(50);
    match bfgs(&mut g, &x, gx, tol, remaining) {
        Some(polish) => {
            if polish.gx <= gx {
                x = polish.x;
                gx = polish.gx;
            }
            iterations += polish.iterations;
            converged = polish.grad_norm <= tol.grad_tol;
        }
        None => {
            // A gradient stencil touched an infeasible point: keep the simplex answer.
        }
    }

    let hessian_at_max = if opts.hessian { numerical_hessian(|p| -g(p), &x, StepRule::HESSIAN).ok() } else { None };
    Ok(OptimResult { argmax: x, value: -gx, converged, iterations, hessian_at_max })
}

fn nelder_mead<G>(
    g: &mut G,
    x0: &[f64],
    g0: f64,
    initial_step: f64,
    tol: &Tolerances,
    budget: usize,
) -> (Vec<f64>, f64, usize, bool)
where
    G: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return (Vec::new(), g0, 0, true);
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut values = vec![g0];
    for j in 0..n {
        let mut v = x0.to_vec();
        let h = initial_step * x0[j].abs().max(1.0);
        v[j] += h;
        let mut gv = g(&v);
        if !gv.is_finite() {
            v[j] = x0[j] - h;
            gv = g(&v);
        }
        simplex.push(v);
        values.push(gv);
    }

    // The simplex only needs to land in the basin; BFGS does the fine work.
    let f_stop = tol.f_tol.max(1e-12);
    let x_stop = tol.x_tol.sqrt();
    let mut order: Vec<usize> = (0..=n).collect();
    for iter in 0..budget {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let scale = 1.0 + simplex[best].iter().map(|v| v.abs()).fold(0.0, f64::max);
        if spread.is_finite() && spread <= f_stop * (1.0 + values[best].abs()) && diameter <= x_stop * scale {
            return (simplex[best].clone(), values[best], iter, true);
        }

        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[k]) {
                *c += v / n as f64;
            }
        }
        let along =
            |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let gr = g(&xr);
        if gr < values[best] {
            let xe = along(-2.0);
            let ge = g(&xe);
            if ge < gr {
                simplex[worst] = xe;
                values[worst] = ge;
            } else {
                simplex[worst] = xr;
                values[worst] = gr;
            }
            continue;
        }
        if gr < values[second] {
            simplex[worst] = xr;
            values[worst] = gr;
            continue;
        }
        let xc = if gr < values[worst] { along(-0.5) } else { along(0.5) };
        let gc = g(&xc);
        if gc < values[worst].min(gr) {
            simplex[worst] = xc;
            values[worst] = gc;
            continue;
        }
        // Shrink towards the best vertex.
        let xb = simplex[best].clone();
        for &k in &order[1..] {
            let v: Vec<f64> = simplex[k].iter().zip(&xb).map(|(a, b)| b + 0.5 * (a - b)).collect();
            values[k] = g(&v);
            simplex[k] = v;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best], budget, false)
}

struct Polish {
    x: Vec<f64>,
    gx: f64,
    grad_norm: f64,
    iterations: usize,
}

/// BFGS on the inverse Hessian with Armijo backtracking. Returns `None` as
/// soon as a gradient stencil is infeasible.
fn bfgs<G>(g: &mut G, x0: &[f64], g0: f64, tol: &Tolerances, budget: usize) -> Option<Polish>
where
    G: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let grad = |g: &mut G, x: &[f64]| numerical_gradient(|p| g(p), x, StepRule::GRADIENT).ok();
    let mut x = DVector::from_column_slice(x0);
    let mut gx = g0;
    let mut d = DVector::from_vec(grad(g, x.as_slice())?);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;

    for iter in 0..budget {
        let gnorm = d.norm();
        if gnorm <= tol.grad_tol {
            return Some(Polish { x: x.as_slice().to_vec(), gx, grad_norm: gnorm, iterations: iter });
        }
        let mut dir = -(&hinv * &d);
        let mut slope = d.dot(&dir);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(n, n);
            dir = -d.clone();
            slope = -gnorm * gnorm;
        }
        if first {
            // Cap the very first step so an unscaled identity cannot jump far.
            let len = dir.norm();
            let cap = 0.1 * (1.0 + x.norm());
            if len > cap {
                dir *= cap / len;
                slope *= cap / len;
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &dir * t;
            let gc = g(cand.as_slice());
            if gc.is_finite() && gc <= gx + 1e-4 * t * slope {
                accepted = Some((cand, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, g_new)) = accepted else {
            return Some(Polish { x: x.as_slice().to_vec(), gx, grad_norm: gnorm, iterations: iter });
        };
        let d_new = DVector::from_vec(grad(g, x_new.as_slice())?);
        let s = &x_new - &x;
        let y = &d_new - &d;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if first {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H + (1 + rho yHy) rho s s' - rho (Hy s' + s y'H)
            hinv +=
                (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            first = false;
        }
        x = x_new;
        gx = g_new;
        d = d_new;
        // Steps at rounding level: the finite-difference gradient is as good as it gets.
        if s.norm() <= 16.0 * f64::EPSILON * (1.0 + x.norm()) {
            let gnorm = d.norm();
            return Some(Polish { x: x.as_slice().to_vec(), gx, grad_norm: gnorm, iterations: iter + 1 });
        }
    }
    let gnorm = d.norm();
    Some(Polish { x: x.as_slice().to_vec(), gx, grad_norm: gnorm, iterations: budget })
}
