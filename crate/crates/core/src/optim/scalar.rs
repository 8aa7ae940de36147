use super::{OptimError, OptimResult, ScalarBounds, Tolerances};

/// Number of equispaced interior points scanned before the local search.
pub const SCALAR_INIT_GRID: usize = 32;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Maximizes `f` over the open interval using a grid scan followed by Brent's
/// golden-section/parabolic search on the cell around the best grid point.
pub fn maximize_scalar_bounded<F>(f: F, bounds: ScalarBounds, tol: &Tolerances) -> Result<OptimResult, OptimError>
where
    F: FnMut(f64) -> f64,
{
    maximize_scalar_bounded_with_grid(f, bounds, tol, SCALAR_INIT_GRID)
}

/// As [`maximize_scalar_bounded`] with an explicit initialization grid size.
///
/// Non-finite values (including `NaN`) count as `-inf`, so the returned
/// argmax is always a point where `f` is finite.
pub fn maximize_scalar_bounded_with_grid<F>(
    mut f: F,
    bounds: ScalarBounds,
    tol: &Tolerances,
    grid: usize,
) -> Result<OptimResult, OptimError>
where
    F: FnMut(f64) -> f64,
{
    let grid = grid.max(1);
    let step = bounds.width() / (grid + 1) as f64;
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let mut best: Option<(usize, f64)> = None;
    for k in 1..=grid {
        let v = eval(bounds.lo() + step * k as f64);
        if v > f64::NEG_INFINITY && best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    let (k, fk) = best.ok_or(OptimError::NoFinitePoint)?;
    let x_best = bounds.lo() + step * k as f64;
    let a = bounds.lo() + step * (k - 1) as f64;
    let b = bounds.lo() + step * (k + 1) as f64;

    let (x, fx, iterations, converged) = brent_max(&mut eval, a, b, x_best, fk, tol);
    Ok(OptimResult { argmax: vec![x], value: fx, converged, iterations, hessian_at_max: None })
}

/// Brent's method (golden section + successive parabolic interpolation),
/// maximizing on `[a, b]` from the interior start `x` with known value `fx`.
fn brent_max<F>(f: &mut F, mut a: f64, mut b: f64, x0: f64, fx0: f64, tol: &Tolerances) -> (f64, f64, usize, bool)
where
    F: FnMut(f64) -> f64,
{
    // Internally minimize g = -f.
    let mut x = x0;
    let mut w = x0;
    let mut v = x0;
    let mut gx = -fx0;
    let mut gw = gx;
    let mut gv = gx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let abs_tol = tol.x_tol / 4.0;

    for iter in 0..tol.max_iters {
        let m = 0.5 * (a + b);
        let tol1 = 4.0 * f64::EPSILON * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return (x, -gx, iter, true);
        }

        let mut golden = true;
        if e.abs() > tol1 && gx.is_finite() && gw.is_finite() && gv.is_finite() {
            let r = (x - w) * (gx - gv);
            let mut q = (x - v) * (gx - gw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_old = e;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let gu = -f(u);

        if gu <= gx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            gv = gw;
            w = x;
            gw = gx;
            x = u;
            gx = gu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if gu <= gw || w == x {
                v = w;
                gv = gw;
                w = u;
                gw = gu;
            } else if gu <= gv || v == x || v == w {
                v = u;
                gv = gu;
            }
        }
    }
    (x, -gx, tol.max_iters, false)
}

/// Brent–Dekker root finding (bisection, secant and inverse quadratic
/// interpolation) on a bracket with `g(lo) * g(hi) <= 0`.
///
/// Stops once `|g(x)| <= tol.f_tol` or the bracket is narrower than `tol.x_tol`.
pub fn find_root_scalar<G>(mut g: G, bracket: ScalarBounds, tol: &Tolerances) -> Result<f64, OptimError>
where
    G: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (bracket.lo(), bracket.hi());
    let (mut fa, mut fb) = (g(a), g(b));
    if fa.is_nan() || fb.is_nan() || fa * fb > 0.0 {
        return Err(OptimError::NoSignChange { lo: a, hi: b, g_lo: fa, g_hi: fb });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..tol.max_iters.max(200) {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.x_tol;
        let xm = 0.5 * (c - b);
        if fb.abs() <= tol.f_tol || xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
        if fb.is_nan() {
            return Err(OptimError::NoSignChange { lo: bracket.lo(), hi: bracket.hi(), g_lo: fa, g_hi: fb });
        }
    }
    Ok(b)
}
