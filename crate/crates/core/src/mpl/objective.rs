use super::{ClusteredModel, MplError, ReplicateBank};
use crate::data::Cluster;

/// Source of the expectation term `I_λλ(θ̂; θ̂_ψ)`.
#[derive(Debug, Clone)]
pub enum Expectation {
    /// No modification: the objective is the profile log-likelihood.
    None,
    /// Model-supplied closed form at the given fit.
    Exact {
        psi_hat: Vec<f64>,
        lambda_hat: Vec<f64>,
    },
    MonteCarlo(ReplicateBank),
}

/// A log-likelihood objective in ψ over a fixed set of informative clusters.
pub struct Objective<'a, M: ClusteredModel> {
    model: &'a M,
    clusters: &'a [Cluster],
    bounds: Vec<(f64, f64)>,
    expectation: &'a Expectation,
}

impl<'a, M: ClusteredModel> Objective<'a, M> {
    pub fn new(model: &'a M, clusters: &'a [Cluster], p: usize, expectation: &'a Expectation) -> Self {
        Self { model, clusters, bounds: model.psi_bounds(p), expectation }
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn in_bounds(&self, psi: &[f64]) -> bool {
        psi.len() == self.bounds.len()
            && psi.iter().zip(&self.bounds).all(|(v, (lo, hi))| v.is_finite() && *v > *lo && *v < *hi)
    }

    /// Objective value; `-inf` where it is undefined.
    pub fn value(&self, psi: &[f64]) -> f64 {
        if !self.in_bounds(psi) {
            return f64::NEG_INFINITY;
        }
        let mut scratch = Vec::new();
        let mut total = 0.0;
        for (i, c) in self.clusters.iter().enumerate() {
            let lambda = self.model.constrained_nuisance(psi, c);
            if !lambda.is_finite() {
                return f64::NEG_INFINITY;
            }
            total += self.model.cluster_loglik(psi, lambda, c);
            let correction = match self.expectation {
                Expectation::None => 0.0,
                Expectation::Exact { psi_hat, lambda_hat } => {
                    let j = self.model.nuisance_obs_info(psi, lambda, c);
                    let Some(e) = self.model.exact_expectation(psi_hat, lambda_hat[i], psi, lambda, c) else {
                        return f64::NEG_INFINITY;
                    };
                    severini_term(j, e)
                }
                Expectation::MonteCarlo(bank) => {
                    let j = self.model.nuisance_obs_info(psi, lambda, c);
                    let e = bank.expectation(self.model, i, psi, lambda, c, &mut scratch);
                    severini_term(j, e)
                }
            };
            total += correction;
            if !total.is_finite() {
                return f64::NEG_INFINITY;
            }
        }
        total
    }

    /// λ̂_iψ for every cluster.
    pub fn constrained_nuisance(&self, psi: &[f64]) -> Vec<f64> {
        self.clusters.iter().map(|c| self.model.constrained_nuisance(psi, c)).collect()
    }
}

/// `½ log j − log I`, or `-inf` if either is non-positive.
#[inline]
fn severini_term(j: f64, e: f64) -> f64 {
    if j > 0.0 && e > 0.0 && j.is_finite() && e.is_finite() {
        0.5 * j.ln() - e.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `l_P(ψ) = Σᵢ lⁱ(ψ, λ̂_iψ)`; `-inf` if any constrained estimate is not finite.
pub fn profile_loglik<M: ClusteredModel>(model: &M, clusters: &[Cluster], psi: &[f64]) -> Result<f64, MplError> {
    if clusters.is_empty() {
        return Err(MplError::NoInformativeClusters);
    }
    let mut total = 0.0;
    for c in clusters {
        let lambda = model.constrained_nuisance(psi, c);
        if !lambda.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        total += model.cluster_loglik(psi, lambda, c);
    }
    Ok(total)
}

/// Monte Carlo `I*_i(θ̂; θ̂_ψ)` for every cluster (NaN where λ̂_iψ is not finite).
pub fn mc_expectation_term<M: ClusteredModel>(
    model: &M,
    clusters: &[Cluster],
    bank: &ReplicateBank,
    psi: &[f64],
) -> Vec<f64> {
    let mut scratch = Vec::new();
    clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lambda = model.constrained_nuisance(psi, c);
            if lambda.is_finite() {
                bank.expectation(model, i, psi, lambda, c, &mut scratch)
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// `l_P(ψ) + Σᵢ [½ log j − log I]` with `I` from `expectation`.
pub fn modified_profile_loglik<M: ClusteredModel>(
    model: &M,
    clusters: &[Cluster],
    p: usize,
    expectation: &Expectation,
    psi: &[f64],
) -> Result<f64, MplError> {
    if clusters.is_empty() {
        return Err(MplError::NoInformativeClusters);
    }
    Ok(Objective::new(model, clusters, p, expectation).value(psi))
}
