use rayon::prelude::*;

use super::{ClusteredModel, MonteCarloConfig, ReplicateSimulator};
use crate::data::Cluster;
use crate::rng::{domain, SeedTree};

/// Replicate datasets simulated once at `(ψ̂, λ̂)` and reused for every ψ
/// (common random numbers), reduced to what the expectation term needs.
///
/// Replicate `r` draws from stream `r` of the replicate seed node and visits
/// clusters in order, so the bank depends only on the data, the fit and the
/// seed, never on thread scheduling.
#[derive(Debug, Clone)]
pub struct ReplicateBank {
    psi_hat: Vec<f64>,
    lambda_hat: Vec<f64>,
    replicates: usize,
    store: Store,
}

#[derive(Debug, Clone)]
enum Store {
    /// `moments[i][k] = (1/R) Σ_r ŝ_ri · stat_k(y^r_i)`.
    Linear { moments: Vec<Vec<f64>> },
    /// Replicate clusters and their scores at the fit, indexed `[i][r]`.
    Generic { replicates: Vec<Vec<Cluster>>, hat_scores: Vec<Vec<f64>> },
}

impl ReplicateBank {
    /// Simulates the bank, using the linear-score reduction when the model
    /// supports it.
    pub fn build<M: ClusteredModel>(
        model: &M,
        clusters: &[Cluster],
        psi_hat: &[f64],
        lambda_hat: &[f64],
        mc: &MonteCarloConfig,
    ) -> Self {
        let mut probe = Vec::new();
        let linear = !clusters.is_empty() && model.linear_score_statistics(&clusters[0], &mut probe);
        Self::build_with(model, clusters, psi_hat, lambda_hat, mc, linear)
    }

    /// As [`Self::build`], choosing the storage explicitly.
    pub fn build_with<M: ClusteredModel>(
        model: &M,
        clusters: &[Cluster],
        psi_hat: &[f64],
        lambda_hat: &[f64],
        mc: &MonteCarloConfig,
        linear: bool,
    ) -> Self {
        assert_eq!(clusters.len(), lambda_hat.len(), "one fitted nuisance value per cluster");
        let sim = model.simulator(clusters, psi_hat, lambda_hat);
        let node = SeedTree::new(mc.master_seed).child(domain::REPLICATES);
        let r_count = mc.replicates.max(1);

        let draw = |r: usize| -> Vec<(Cluster, f64)> {
            let mut rng = node.stream(r as u64);
            clusters
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let rep = sim.simulate(i, c, &mut rng);
                    let s = model.nuisance_score(psi_hat, lambda_hat[i], &rep);
                    (rep, s)
                })
                .collect()
        };

        let store = if linear {
            let per_rep: Vec<Vec<Vec<f64>>> = (0..r_count)
                .into_par_iter()
                .map(|r| {
                    let mut stats = Vec::new();
                    draw(r)
                        .into_iter()
                        .map(|(rep, s)| {
                            stats.clear();
                            let ok = model.linear_score_statistics(&rep, &mut stats);
                            assert!(ok, "linear score statistics must be available for every cluster");
                            stats.iter().map(|v| s * v).collect()
                        })
                        .collect()
                })
                .collect();
            let mut moments: Vec<Vec<f64>> = per_rep[0].iter().map(|v| vec![0.0; v.len()]).collect();
            for rep in &per_rep {
                for (acc, prod) in moments.iter_mut().zip(rep) {
                    for (a, p) in acc.iter_mut().zip(prod) {
                        *a += p;
                    }
                }
            }
            let inv = 1.0 / r_count as f64;
            moments.iter_mut().flatten().for_each(|a| *a *= inv);
            Store::Linear { moments }
        } else {
            let per_rep: Vec<Vec<(Cluster, f64)>> = (0..r_count).into_par_iter().map(draw).collect();
            let n = clusters.len();
            let mut replicates: Vec<Vec<Cluster>> = (0..n).map(|_| Vec::with_capacity(r_count)).collect();
            let mut hat_scores: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(r_count)).collect();
            for rep in per_rep {
                for (i, (c, s)) in rep.into_iter().enumerate() {
                    replicates[i].push(c);
                    hat_scores[i].push(s);
                }
            }
            Store::Generic { replicates, hat_scores }
        };

        Self { psi_hat: psi_hat.to_vec(), lambda_hat: lambda_hat.to_vec(), replicates: r_count, store }
    }

    pub fn psi_hat(&self) -> &[f64] {
        &self.psi_hat
    }

    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.store, Store::Linear { .. })
    }

    /// `I*_i(ψ) = (1/R) Σ_r l^r_λ(ψ, λ̂_iψ) · l^r_λ(ψ̂, λ̂_i)` for cluster `i`.
    pub fn expectation<M: ClusteredModel>(
        &self,
        model: &M,
        i: usize,
        psi: &[f64],
        lambda_psi: f64,
        c: &Cluster,
        scratch: &mut Vec<f64>,
    ) -> f64 {
        match &self.store {
            Store::Linear { moments } => {
                scratch.clear();
                if !model.linear_score_coefficients(psi, lambda_psi, c, scratch) {
                    return f64::NAN;
                }
                scratch.iter().zip(&moments[i]).map(|(a, m)| a * m).sum()
            }
            Store::Generic { replicates, hat_scores } => {
                let total: f64 = replicates[i]
                    .iter()
                    .zip(&hat_scores[i])
                    .map(|(rep, s)| model.nuisance_score(psi, lambda_psi, rep) * s)
                    .sum();
                total / self.replicates as f64
            }
        }
    }

    /// Replicate clusters for cluster `i`, when the bank keeps them.
    pub fn replicate_clusters(&self, i: usize) -> Option<&[Cluster]> {
        match &self.store {
            Store::Generic { replicates, .. } => Some(&replicates[i]),
            Store::Linear { .. } => None,
        }
    }
}
