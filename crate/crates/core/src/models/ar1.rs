//! Normal AR(1) panel with cluster-specific intercepts,
//! `y_it = λ_i + ρ y_{i,t−1} + ε_it`, `ε_it ~ N(0, σ²)`, conditional on the
//! initial values `y_i0` (held in [`Cluster::initial`]). ψ = (ρ, σ²) and ρ is
//! not restricted to the stationary region.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{Cluster, ClusteredDataset};
use crate::mpl::fit::{bound_hits, standard_errors};
use crate::mpl::{
    ClusteredModel, Expectation, FitResult, Method, MonteCarloConfig, MplError, Objective, ReplicateBank,
    ReplicateSimulator,
};
use crate::optim::{maximize_scalar_bounded_with_grid, OptimError, ScalarBounds, Tolerances};

/// Lower limit applied to σ² inside objectives.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Default search interval for ρ.
pub const RHO_BOUNDS: (f64, f64) = (-1.5, 1.5);

/// Points of the initialization grid over the ρ interval.
pub const RHO_GRID: usize = 64;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Ar1Error {
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("lagged responses have no within-cluster variation")]
    DegenerateDesign,
    #[error("cluster {0} has a missing response or initial value")]
    IncompleteSeries(String),
    #[error(transparent)]
    Mpl(#[from] MplError),
}

/// Denominator of the constrained variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divisor {
    /// `N T`: maximizes the profile log-likelihood.
    Nt,
    /// `N (T − 1)`: maximizes the modified profile log-likelihood.
    NTMinusOne,
}

#[inline]
fn series(c: &Cluster) -> impl Iterator<Item = (f64, f64)> + '_ {
    let y0 = c.initial.unwrap_or(f64::NAN);
    let ys = c.responses.iter().map(|v| v.unwrap_or(f64::NAN));
    let lags = std::iter::once(y0).chain(c.responses.iter().map(|v| v.unwrap_or(f64::NAN)));
    ys.zip(lags)
}

/// `(ȳ_i, ȳ_{i,−1})`.
fn means(c: &Cluster) -> (f64, f64) {
    let (mut sy, mut sl) = (0.0, 0.0);
    for (y, l) in series(c) {
        sy += y;
        sl += l;
    }
    let t = c.len() as f64;
    (sy / t, sl / t)
}

fn check(c: &Cluster) -> Result<(), Ar1Error> {
    if c.initial.is_none() || c.responses.iter().any(Option::is_none) {
        return Err(Ar1Error::IncompleteSeries(c.id.clone()));
    }
    Ok(())
}

/// `Σ_t (y_t − λ − ρ y_{t−1})²`.
fn rss(rho: f64, lambda: f64, c: &Cluster) -> f64 {
    series(c).map(|(y, l)| (y - lambda - rho * l).powi(2)).sum()
}

/// `ȳ_i − ρ ȳ_{i,−1}`.
pub fn constrained_lambda(rho: f64, c: &Cluster) -> f64 {
    let (my, ml) = means(c);
    my - rho * ml
}

/// Gaussian log-likelihood of one cluster, including the `−½ log 2π` terms.
pub fn cluster_loglik(rho: f64, sigma2: f64, lambda: f64, c: &Cluster) -> f64 {
    let t = c.len() as f64;
    -0.5 * t * (LN_2PI + sigma2.ln()) - rss(rho, lambda, c) / (2.0 * sigma2)
}

pub fn loglik(rho: f64, sigma2: f64, lambda: &[f64], clusters: &[Cluster]) -> Result<f64, Ar1Error> {
    if !(sigma2 > 0.0) {
        return Err(Ar1Error::NonPositiveVariance(sigma2));
    }
    for c in clusters {
        check(c)?;
    }
    Ok(clusters.iter().zip(lambda).map(|(c, &l)| cluster_loglik(rho, sigma2, l, c)).sum())
}

/// Residual sum of squares at `(ρ, λ̂_iρ)` divided by `N T` or `N (T − 1)`.
pub fn constrained_sigma2(rho: f64, clusters: &[Cluster], divisor: Divisor) -> f64 {
    let mut total = 0.0;
    let mut denom = 0usize;
    for c in clusters {
        total += rss(rho, constrained_lambda(rho, c), c);
        denom += match divisor {
            Divisor::Nt => c.len(),
            Divisor::NTMinusOne => c.len() - 1,
        };
    }
    total / denom as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub rho: f64,
    pub sigma2: f64,
    pub lambda: Vec<f64>,
}

/// Maximum likelihood fit: within-cluster least squares for ρ.
pub fn ols_fit(clusters: &[Cluster]) -> Result<OlsFit, Ar1Error> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for c in clusters {
        check(c)?;
        let (my, ml) = means(c);
        for (y, l) in series(c) {
            sxy += (l - ml) * (y - my);
            sxx += (l - ml) * (l - ml);
        }
    }
    let scale: f64 = clusters.iter().flat_map(|c| series(c).map(|(_, l)| l * l)).sum::<f64>().max(1.0);
    if !(sxx > 1e-14 * scale) {
        return Err(Ar1Error::DegenerateDesign);
    }
    let rho = sxy / sxx;
    let lambda = clusters.iter().map(|c| constrained_lambda(rho, c)).collect();
    Ok(OlsFit { rho, sigma2: constrained_sigma2(rho, clusters, Divisor::Nt), lambda })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ar1Model;

impl ClusteredModel for Ar1Model {
    type Simulator = Ar1Simulator;

    fn psi_names(&self, _p: usize) -> Vec<String> {
        vec!["rho".into(), "sigma2".into()]
    }

    fn psi_bounds(&self, _p: usize) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)]
    }

    fn initial_psi(&self, clusters: &[Cluster], _p: usize) -> Vec<f64> {
        match ols_fit(clusters) {
            Ok(f) => vec![f.rho, f.sigma2.max(SIGMA2_FLOOR)],
            Err(_) => vec![0.0, 1.0],
        }
    }

    fn cluster_loglik(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        cluster_loglik(psi[0], psi[1], lambda, c)
    }

    fn nuisance_score(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        series(c).map(|(y, l)| y - lambda - psi[0] * l).sum::<f64>() / psi[1]
    }

    fn nuisance_obs_info(&self, psi: &[f64], _lambda: f64, c: &Cluster) -> f64 {
        c.len() as f64 / psi[1]
    }

    fn constrained_nuisance(&self, psi: &[f64], c: &Cluster) -> f64 {
        constrained_lambda(psi[0], c)
    }

    fn is_informative(&self, c: &Cluster) -> bool {
        check(c).is_ok()
    }

    fn simulator(&self, _clusters: &[Cluster], psi_hat: &[f64], lambda_hat: &[f64]) -> Ar1Simulator {
        Ar1Simulator { rho: psi_hat[0], sigma: psi_hat[1].max(SIGMA2_FLOOR).sqrt(), lambda: lambda_hat.to_vec() }
    }

    /// `(Σ y_t, Σ y_{t−1}, T)`.
    fn linear_score_statistics(&self, c: &Cluster, out: &mut Vec<f64>) -> bool {
        let (my, ml) = means(c);
        let t = c.len() as f64;
        out.extend([my * t, ml * t, t]);
        true
    }

    fn linear_score_coefficients(&self, psi: &[f64], lambda: f64, _c: &Cluster, out: &mut Vec<f64>) -> bool {
        let s2 = psi[1];
        out.extend([1.0 / s2, -psi[0] / s2, -lambda / s2]);
        true
    }
}

/// Replicate series from the fit, started at the observed `y_i0`.
#[derive(Debug, Clone)]
pub struct Ar1Simulator {
    pub rho: f64,
    pub sigma: f64,
    pub lambda: Vec<f64>,
}

impl ReplicateSimulator for Ar1Simulator {
    fn simulate(&self, index: usize, cluster: &Cluster, rng: &mut ChaCha8Rng) -> Cluster {
        let mut prev = cluster.initial.unwrap_or(f64::NAN);
        let y = (0..cluster.len())
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                prev = self.lambda[index] + self.rho * prev + self.sigma * e;
                Some(prev)
            })
            .collect();
        cluster.with_outcomes(y, cluster.indicators.clone())
    }
}

/// The log-likelihood in ρ alone, with σ² replaced by its constrained estimate.
pub struct RhoObjective<'a> {
    objective: Objective<'a, Ar1Model>,
    clusters: &'a [Cluster],
    divisor: Divisor,
}

impl<'a> RhoObjective<'a> {
    pub fn new(clusters: &'a [Cluster], expectation: &'a Expectation, divisor: Divisor) -> Self {
        Self { objective: Objective::new(&Ar1Model, clusters, 0, expectation), clusters, divisor }
    }

    pub fn sigma2(&self, rho: f64) -> f64 {
        constrained_sigma2(rho, self.clusters, self.divisor).max(SIGMA2_FLOOR)
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.joint(&[rho, self.sigma2(rho)])
    }

    /// The objective in (ρ, σ²).
    pub fn joint(&self, psi: &[f64]) -> f64 {
        self.objective.value(psi)
    }
}

/// Objective, bank and σ² divisor for `method`, anchored at the ML fit.
pub fn expectation_for(
    clusters: &[Cluster],
    method: Method,
    mc: &MonteCarloConfig,
) -> Result<(Expectation, Divisor), Ar1Error> {
    match method {
        Method::Profile => Ok((Expectation::None, Divisor::Nt)),
        Method::MplExact => Err(MplError::NoExactExpectation.into()),
        Method::Mcmpl => {
            let ml = ols_fit(clusters)?;
            let psi_hat = [ml.rho, ml.sigma2.max(SIGMA2_FLOOR)];
            let bank = ReplicateBank::build(&Ar1Model, clusters, &psi_hat, &ml.lambda, mc);
            Ok((Expectation::MonteCarlo(bank), Divisor::NTMinusOne))
        }
    }
}

/// Bounded one-dimensional search for ρ with σ² profiled out, followed by
/// standard errors from the Hessian of the objective in (ρ, σ²).
pub fn fit_bounded(
    data: &ClusteredDataset,
    method: Method,
    mc: &MonteCarloConfig,
    bounds: ScalarBounds,
) -> Result<FitResult, Ar1Error> {
    let (clusters, dropped) = data.retain(|c| Ar1Model.is_informative(c));
    if clusters.is_empty() {
        return Err(MplError::NoInformativeClusters.into());
    }
    let (expectation, divisor) = expectation_for(&clusters, method, mc)?;
    fit_with(&clusters, dropped, method, &expectation, divisor, bounds)
}

pub fn fit_with(
    clusters: &[Cluster],
    dropped: usize,
    method: Method,
    expectation: &Expectation,
    divisor: Divisor,
    bounds: ScalarBounds,
) -> Result<FitResult, Ar1Error> {
    let obj = RhoObjective::new(clusters, expectation, divisor);
    let anchor = ols_fit(clusters).map_or(0.0, |f| f.rho);
    let cell = local_peak_cell(|r| obj.value(r), bounds, anchor)?;
    let tol = Tolerances { x_tol: 1e-10, ..Tolerances::scalar() };
    // A single grid point at the centre of the cell: Brent then runs on the whole cell.
    let opt = maximize_scalar_bounded_with_grid(|r| obj.value(r), cell, &tol, 1)?;
    let rho = opt.argmax[0];
    let psi_hat = vec![rho, obj.sigma2(rho)];

    let box_bounds = [(bounds.lo(), bounds.hi()), (0.0, f64::INFINITY)];
    let hits = bound_hits(&box_bounds, &psi_hat);
    let (std_errors, covariance) = standard_errors(&|p: &[f64]| obj.joint(p), &psi_hat, &hits);
    Ok(FitResult {
        method,
        psi_names: Ar1Model.psi_names(0),
        lambda_hat: clusters.iter().map(|c| constrained_lambda(rho, c)).collect(),
        max_value: obj.joint(&psi_hat),
        psi_hat,
        std_errors,
        covariance,
        converged: opt.converged,
        iterations: opt.iterations,
        dropped_clusters: dropped,
        bound_hits: hits,
    })
}

/// Cell `[ρ_{k−1}, ρ_{k+1}]` of the initialization grid around a local peak.
///
/// The modified objective can grow without bound where the Monte Carlo
/// expectation term approaches zero from above, so the best grid value may
/// sit next to that singularity. Instead the grid is climbed from the point
/// nearest `anchor` (the ML estimate) to the first local peak. If the anchor
/// point is not finite, the climb starts from the best finite grid point.
fn local_peak_cell<F: Fn(f64) -> f64>(f: F, bounds: ScalarBounds, anchor: f64) -> Result<ScalarBounds, Ar1Error> {
    let step = bounds.width() / (RHO_GRID + 1) as f64;
    let at = |k: usize| bounds.lo() + step * k as f64;
    let values: Vec<f64> = (0..=RHO_GRID + 1)
        .map(|k| if k == 0 || k == RHO_GRID + 1 { f64::NEG_INFINITY } else { f(at(k)) })
        .map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v })
        .collect();
    let nearest = (((anchor - bounds.lo()) / step).round() as i64).clamp(1, RHO_GRID as i64) as usize;
    let mut k = if values[nearest].is_finite() {
        nearest
    } else {
        (1..=RHO_GRID)
            .filter(|&j| values[j].is_finite())
            .max_by(|&a, &b| values[a].total_cmp(&values[b]))
            .ok_or(OptimError::NoFinitePoint)?
    };
    loop {
        let up = if values[k + 1] > values[k - 1] { k + 1 } else { k - 1 };
        if values[up] > values[k] {
            k = up;
        } else {
            break;
        }
    }
    let lo = if k == 1 { bounds.lo() } else { at(k - 1) };
    let hi = if k == RHO_GRID { bounds.hi() } else { at(k + 1) };
    Ok(ScalarBounds::new(lo, hi)?)
}

/// Objective along `values` of one component of (ρ, σ²): at ρ the constrained
/// σ̂²_ρ is plugged in; at σ² the objective is maximized over ρ in `bounds`.
pub fn trace(
    clusters: &[Cluster],
    expectation: &Expectation,
    divisor: Divisor,
    component: usize,
    values: &[f64],
    bounds: ScalarBounds,
) -> Vec<f64> {
    let obj = RhoObjective::new(clusters, expectation, divisor);
    let tol = Tolerances { x_tol: 1e-10, ..Tolerances::scalar() };
    values
        .iter()
        .map(|&v| {
            let value = if component == 0 {
                obj.value(v)
            } else {
                maximize_scalar_bounded_with_grid(|r| obj.joint(&[r, v]), bounds, &tol, RHO_GRID)
                    .map_or(f64::NEG_INFINITY, |o| o.value)
            };
            if value.is_nan() {
                f64::NEG_INFINITY
            } else {
                value
            }
        })
        .collect()
}

/// Default `(−1.5, 1.5)` search interval.
pub fn default_bounds() -> ScalarBounds {
    ScalarBounds::new(RHO_BOUNDS.0, RHO_BOUNDS.1).expect("valid constant bounds")
}

impl From<OptimError> for Ar1Error {
    fn from(e: OptimError) -> Self {
        Ar1Error::Mpl(MplError::Optim(e))
    }
}
