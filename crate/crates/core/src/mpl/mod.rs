//! Profile likelihood, Severini's modification and its Monte Carlo
//! approximation for models with one nuisance parameter per cluster.
//!
//! A model implements [`ClusteredModel`]; everything else here is generic:
//! the profile log-likelihood `l_P(ψ) = Σ lⁱ(ψ, λ̂_iψ)`, the modified profile
//!
//! ```text
//! l_M(ψ) = l_P(ψ) + Σᵢ [ ½ log j_λλ(θ̂_ψ) − log I_λλ(θ̂; θ̂_ψ) ]
//! ```
//!
//! with `I` either supplied in closed form by the model or estimated from
//! replicate datasets simulated once at the maximum likelihood fit, and the
//! fitting/standard-error machinery on top.

mod bank;
pub(crate) mod fit;
mod objective;

pub use bank::ReplicateBank;
pub use fit::{fit, FitResult, Problem, WaldInterval, WaldSummary};
pub use objective::{mc_expectation_term, modified_profile_loglik, profile_loglik, Expectation, Objective};

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{Cluster, ClusteredDataset};
use crate::optim::OptimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MplError {
    #[error("no informative clusters left after dropping non-informative ones")]
    NoInformativeClusters,
    #[error("the model has no closed-form expectation term; use the Monte Carlo method")]
    NoExactExpectation,
    #[error("standard error of component {component} is not positive")]
    NonPositiveSE { component: usize },
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("component {component} out of range for a {dim}-dimensional parameter")]
    ComponentOutOfRange { component: usize, dim: usize },
    #[error("replicate count must be at least 1")]
    NoReplicates,
    #[error("the objective is -inf at the profile maximum")]
    InfeasibleStart,
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Profile,
    MplExact,
    Mcmpl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Profile => "profile",
            Method::MplExact => "mpl-exact",
            Method::Mcmpl => "mcmpl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "profile" => Ok(Method::Profile),
            "mpl-exact" | "mpl_exact" | "exact" => Ok(Method::MplExact),
            "mcmpl" => Ok(Method::Mcmpl),
            other => Err(format!("unknown method '{other}' (expected profile, mpl-exact or mcmpl)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    pub master_seed: u64,
}

impl MonteCarloConfig {
    pub const DEFAULT_REPLICATES: usize = 500;

    pub fn new(replicates: usize, master_seed: u64) -> Result<Self, MplError> {
        if replicates == 0 {
            return Err(MplError::NoReplicates);
        }
        Ok(Self { replicates, master_seed })
    }
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { replicates: Self::DEFAULT_REPLICATES, master_seed: crate::DEFAULT_SEED }
    }
}

/// Generates replicate clusters under a fitted model.
pub trait ReplicateSimulator: Sync {
    /// A replicate of `cluster` (the `index`-th informative cluster).
    fn simulate(&self, index: usize, cluster: &Cluster, rng: &mut ChaCha8Rng) -> Cluster;
}

/// Per-model behavior consumed by the generic engine.
///
/// `psi` is the interest parameter and `lambda` the nuisance parameter of
/// one cluster. Infeasible evaluations return non-finite values rather than
/// errors.
pub trait ClusteredModel: Sync {
    type Simulator: ReplicateSimulator;

    /// Component names of ψ for covariate dimension `p`; also fixes dim ψ.
    fn psi_names(&self, p: usize) -> Vec<String>;

    /// Open box the objective is restricted to. Components whose estimate
    /// ends up on a finite edge are reported as bound hits.
    fn psi_bounds(&self, p: usize) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.psi_names(p).len()]
    }

    /// Starting point for the profile search.
    fn initial_psi(&self, clusters: &[Cluster], p: usize) -> Vec<f64>;

    fn cluster_loglik(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64;

    /// ∂lⁱ/∂λ.
    fn nuisance_score(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64;

    /// −∂²lⁱ/∂λ².
    fn nuisance_obs_info(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64;

    /// λ̂_iψ, or a non-finite value when the cluster has no finite maximizer.
    fn constrained_nuisance(&self, psi: &[f64], c: &Cluster) -> f64;

    fn is_informative(&self, c: &Cluster) -> bool;

    /// Replicate generator at the maximum likelihood fit.
    fn simulator(&self, clusters: &[Cluster], psi_hat: &[f64], lambda_hat: &[f64]) -> Self::Simulator;

    /// Closed-form `I_λλ(θ̂; θ̂_ψ)` for one cluster, when available.
    fn exact_expectation(
        &self,
        _psi_hat: &[f64],
        _lambda_hat: f64,
        _psi: &[f64],
        _lambda_psi: f64,
        _c: &Cluster,
    ) -> Option<f64> {
        None
    }

    /// Models whose nuisance score is linear in a few data summaries,
    /// `score(ψ, λ; c) = Σ_k coef_k(ψ, λ, x) · stat_k(c)`, can expose the
    /// summaries here. The Monte Carlo average then costs O(T) per cluster
    /// and objective evaluation instead of O(R·T).
    ///
    /// Returns `false` (the default) when not supported.
    fn linear_score_statistics(&self, _c: &Cluster, _out: &mut Vec<f64>) -> bool {
        false
    }

    /// Coefficients matching [`Self::linear_score_statistics`]. `c` supplies
    /// covariates only; its responses are not used.
    fn linear_score_coefficients(&self, _psi: &[f64], _lambda: f64, _c: &Cluster, _out: &mut Vec<f64>) -> bool {
        false
    }
}

/// Drops clusters the model deems non-informative.
pub fn informative_clusters<M: ClusteredModel>(model: &M, data: &ClusteredDataset) -> (Vec<Cluster>, usize) {
    data.retain(|c| model.is_informative(c))
}
