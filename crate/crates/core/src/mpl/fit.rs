use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{ClusteredModel, Expectation, Method, MonteCarloConfig, MplError, Objective, ReplicateBank};
use crate::data::{Cluster, ClusteredDataset};
use crate::optim::{
    maximize_multivariate_with, numerical_hessian, MultivariateOptions, OptimError, StepRule, Tolerances,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub psi_names: Vec<String>,
    pub psi_hat: Vec<f64>,
    /// λ̂_iψ̂ for each informative cluster.
    pub lambda_hat: Vec<f64>,
    /// NaN where the Hessian is not negative definite or the component sits
    /// on a bound.
    pub std_errors: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
    pub max_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub dropped_clusters: usize,
    /// Components whose estimate sits on an edge of the search box.
    pub bound_hits: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl WaldInterval {
    pub fn new(estimate: f64, se: f64, level: f64) -> Result<Self, MplError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(MplError::InvalidLevel(level));
        }
        if !(se > 0.0) {
            return Err(MplError::NonPositiveSE { component: 0 });
        }
        let z = normal_quantile(0.5 * (1.0 + level));
        Ok(Self { lo: estimate - z * se, hi: estimate + z * se, level })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// Wald statistics of one estimate. Everything but the estimate is NaN when
/// the standard error is not a positive finite number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldSummary {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    /// Two-sided p-value for a zero true value.
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl WaldSummary {
    pub fn new(estimate: f64, std_error: f64, level: f64) -> Result<Self, MplError> {
        if !(level > 0.0 && level < 1.0) {
            return Err(MplError::InvalidLevel(level));
        }
        if !(std_error > 0.0 && std_error.is_finite()) {
            let nan = f64::NAN;
            return Ok(Self { estimate, std_error, z: nan, p_value: nan, ci_lo: nan, ci_hi: nan });
        }
        let z = estimate / std_error;
        let half = normal_quantile(0.5 * (1.0 + level)) * std_error;
        let p_value = 2.0 * Normal::standard().cdf(-z.abs());
        Ok(Self { estimate, std_error, z, p_value, ci_lo: estimate - half, ci_hi: estimate + half })
    }
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

impl FitResult {
    pub fn wald_interval(&self, component: usize, level: f64) -> Result<WaldInterval, MplError> {
        let dim = self.psi_hat.len();
        if component >= dim {
            return Err(MplError::ComponentOutOfRange { component, dim });
        }
        WaldInterval::new(self.psi_hat[component], self.std_errors[component], level).map_err(|e| match e {
            MplError::NonPositiveSE { .. } => MplError::NonPositiveSE { component },
            other => other,
        })
    }

    /// Converged, on no bound and with finite standard errors.
    pub fn is_clean(&self) -> bool {
        self.converged && self.bound_hits.is_empty() && self.std_errors.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

/// Informative clusters of a dataset plus everything needed to fit them.
pub struct Problem<'m, M: ClusteredModel> {
    model: &'m M,
    clusters: Vec<Cluster>,
    p: usize,
    dropped: usize,
    tol: Tolerances,
}

impl<'m, M: ClusteredModel> Problem<'m, M> {
    pub fn new(model: &'m M, data: &ClusteredDataset) -> Result<Self, MplError> {
        let (clusters, dropped) = super::informative_clusters(model, data);
        if clusters.is_empty() {
            return Err(MplError::NoInformativeClusters);
        }
        Ok(Self { model, clusters, p: data.p(), dropped, tol: Tolerances::multivariate() })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn psi_names(&self) -> Vec<String> {
        self.model.psi_names(self.p)
    }

    pub fn objective<'a>(&'a self, expectation: &'a Expectation) -> Objective<'a, M> {
        Objective::new(self.model, &self.clusters, self.p, expectation)
    }

    /// Maximizes the profile log-likelihood from `start` (or the model's default).
    pub fn fit_profile(&self, start: Option<&[f64]>) -> Result<FitResult, MplError> {
        let x0 = match start {
            Some(s) => s.to_vec(),
            None => self.model.initial_psi(&self.clusters, self.p),
        };
        self.maximize(Method::Profile, &Expectation::None, &x0)
    }

    /// Expectation source for `method`, anchored at the profile fit.
    pub fn expectation(
        &self,
        method: Method,
        profile: &FitResult,
        mc: &MonteCarloConfig,
    ) -> Result<Expectation, MplError> {
        Ok(match method {
            Method::Profile => Expectation::None,
            Method::MplExact => {
                let probe = self.model.exact_expectation(
                    &profile.psi_hat,
                    profile.lambda_hat[0],
                    &profile.psi_hat,
                    profile.lambda_hat[0],
                    &self.clusters[0],
                );
                if probe.is_none() {
                    return Err(MplError::NoExactExpectation);
                }
                Expectation::Exact { psi_hat: profile.psi_hat.clone(), lambda_hat: profile.lambda_hat.clone() }
            }
            Method::Mcmpl => {
                if mc.replicates == 0 {
                    return Err(MplError::NoReplicates);
                }
                Expectation::MonteCarlo(ReplicateBank::build(
                    self.model,
                    &self.clusters,
                    &profile.psi_hat,
                    &profile.lambda_hat,
                    mc,
                ))
            }
        })
    }

    /// Maximizes the objective for `method` starting at `start`.
    pub fn maximize(&self, method: Method, expectation: &Expectation, start: &[f64]) -> Result<FitResult, MplError> {
        let objective = self.objective(expectation);
        let f = |psi: &[f64]| objective.value(psi);
        let f0 = f(start);
        if !f0.is_finite() {
            return Err(if method == Method::Profile {
                MplError::Optim(OptimError::NonFiniteStart)
            } else {
                MplError::InfeasibleStart
            });
        }
        // Log-likelihoods grow with the number of units; judge stationarity
        // relative to their size.
        let tol = self.tol.with_grad_tol(self.tol.grad_tol * f0.abs().max(1.0));
        let opt = maximize_multivariate_with(f, start, &tol, &MultivariateOptions::default())?;

        let bound_hits = bound_hits(objective.bounds(), &opt.argmax);
        let (std_errors, covariance) = standard_errors(&f, &opt.argmax, &bound_hits);
        let lambda_hat = objective.constrained_nuisance(&opt.argmax);
        Ok(FitResult {
            method,
            psi_names: self.psi_names(),
            psi_hat: opt.argmax,
            lambda_hat,
            std_errors,
            covariance,
            max_value: opt.value,
            converged: opt.converged,
            iterations: opt.iterations,
            dropped_clusters: self.dropped,
            bound_hits,
        })
    }

    /// Profile fit, then (for the modified methods) the modified objective
    /// maximized from the profile estimate.
    pub fn fit(&self, method: Method, mc: &MonteCarloConfig) -> Result<FitResult, MplError> {
        let profile = self.fit_profile(None)?;
        self.fit_from_profile(method, &profile, mc)
    }

    pub fn fit_from_profile(
        &self,
        method: Method,
        profile: &FitResult,
        mc: &MonteCarloConfig,
    ) -> Result<FitResult, MplError> {
        if method == Method::Profile {
            return Ok(profile.clone());
        }
        let expectation = self.expectation(method, profile, mc)?;
        self.maximize(method, &expectation, &profile.psi_hat)
    }
}

impl<M: ClusteredModel> Problem<'_, M> {
    /// Objective with component `k` of ψ held at each of `values` and the
    /// other components maximized out, warm-started along the grid from
    /// `start`. Cells where that fails are `-inf`.
    pub fn component_trace(&self, expectation: &Expectation, start: &[f64], k: usize, values: &[f64]) -> Vec<f64> {
        let objective = self.objective(expectation);
        let full = |v: f64, rest: &[f64]| {
            let mut psi = rest.to_vec();
            psi.insert(k, v);
            psi
        };
        let mut rest: Vec<f64> = start.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, x)| *x).collect();
        values
            .iter()
            .map(|&v| {
                let value = if rest.is_empty() {
                    objective.value(&[v])
                } else {
                    let f = |r: &[f64]| objective.value(&full(v, r));
                    let f0 = f(&rest);
                    let tol = self.tol.with_grad_tol(self.tol.grad_tol * f0.abs().max(1.0));
                    match maximize_multivariate_with(f, &rest, &tol, &MultivariateOptions::default()) {
                        Ok(opt) if opt.value.is_finite() => {
                            rest = opt.argmax;
                            opt.value
                        }
                        _ => f64::NEG_INFINITY,
                    }
                };
                if value.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    value
                }
            })
            .collect()
    }
}

/// Drops non-informative clusters and fits with `method`.
pub fn fit<M: ClusteredModel>(
    model: &M,
    data: &ClusteredDataset,
    method: Method,
    mc: &MonteCarloConfig,
    tol: &Tolerances,
) -> Result<FitResult, MplError> {
    Problem::new(model, data)?.with_tolerances(*tol).fit(method, mc)
}

pub(crate) fn bound_hits(bounds: &[(f64, f64)], x: &[f64]) -> Vec<usize> {
    let near = |v: f64, b: f64| b.is_finite() && (v - b).abs() <= 1e-3 * b.abs().max(1.0);
    bounds
        .iter()
        .zip(x)
        .enumerate()
        .filter(|(_, ((lo, hi), v))| near(**v, *lo) || near(**v, *hi))
        .map(|(k, _)| k)
        .collect()
}

/// `sqrt(diag((−H)⁻¹))` over the components not on a bound.
pub(crate) fn standard_errors<F>(f: &F, x: &[f64], fixed: &[usize]) -> (Vec<f64>, Option<DMatrix<f64>>)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let free: Vec<usize> = (0..n).filter(|k| !fixed.contains(k)).collect();
    let mut se = vec![f64::NAN; n];
    if free.is_empty() {
        return (se, None);
    }
    let embed = |z: &[f64]| {
        let mut full = x.to_vec();
        for (k, v) in free.iter().zip(z) {
            full[*k] = *v;
        }
        f(&full)
    };
    let z0: Vec<f64> = free.iter().map(|&k| x[k]).collect();
    let Ok(h) = numerical_hessian(embed, &z0, StepRule::HESSIAN) else {
        return (se, None);
    };
    let neg = -h;
    let Some(chol) = neg.cholesky() else {
        return (se, None);
    };
    let cov_free = chol.inverse();
    let mut cov = DMatrix::from_element(n, n, f64::NAN);
    for (a, &ka) in free.iter().enumerate() {
        for (b, &kb) in free.iter().enumerate() {
            cov[(ka, kb)] = cov_free[(a, b)];
        }
        se[ka] = cov_free[(a, a)].sqrt();
    }
    (se, Some(cov))
}
