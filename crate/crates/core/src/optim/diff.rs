use nalgebra::DMatrix;

use super::OptimError;

/// Per-coordinate step `scale * max(1, |x_j|)` for central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub scale: f64,
}

impl StepRule {
    pub const GRADIENT: StepRule = StepRule { scale: 1e-5 };
    /// Coarser than the gradient step: second differences on Monte Carlo
    /// objectives lose too many digits to cancellation otherwise.
    pub const HESSIAN: StepRule = StepRule { scale: 1e-4 };

    #[inline]
    pub fn step(&self, x: f64) -> f64 {
        self.scale * x.abs().max(1.0)
    }
}

pub fn numerical_gradient<F>(mut f: F, x: &[f64], rule: StepRule) -> Result<Vec<f64>, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = rule.step(x[j]);
        point[j] = x[j] + h;
        let up = f(&point);
        point[j] = x[j] - h;
        let down = f(&point);
        point[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(OptimError::NonFiniteEvaluation);
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference Hessian, symmetrized as `(H + H^T) / 2`.
pub fn numerical_hessian<F>(mut f: F, x: &[f64], rule: StepRule) -> Result<DMatrix<f64>, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let mut point = x.to_vec();
    let mut eval = |p: &[f64]| {
        let v = f(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OptimError::NonFiniteEvaluation)
        }
    };
    let f0 = eval(&point)?;
    let h: Vec<f64> = x.iter().map(|&xi| rule.step(xi)).collect();
    let mut hess = DMatrix::zeros(n, n);

    for i in 0..n {
        point[i] = x[i] + h[i];
        let up = eval(&point)?;
        point[i] = x[i] - h[i];
        let down = eval(&point)?;
        point[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut corner = |si: f64, sj: f64, point: &mut Vec<f64>| {
                point[i] = x[i] + si * h[i];
                point[j] = x[j] + sj * h[j];
                let v = eval(point);
                point[i] = x[i];
                point[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0, &mut point)?;
            let pm = corner(1.0, -1.0, &mut point)?;
            let mp = corner(-1.0, 1.0, &mut point)?;
            let mm = corner(-1.0, -1.0, &mut point)?;
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}
