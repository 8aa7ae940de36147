//! Clustered observations: responses, covariates and per-unit indicators
//! grouped by cluster.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("cluster {id}: {len} covariate values do not form rows of length {p}")]
    CovariateShape { id: String, len: usize, p: usize },
    #[error("cluster {id}: {found} indicators for {expected} units")]
    IndicatorLength { id: String, expected: usize, found: usize },
    #[error("cluster {id}: empty cluster")]
    EmptyCluster { id: String },
    #[error("cluster {id}: non-finite value at unit {unit}")]
    NonFinite { id: String, unit: usize },
    #[error("dataset has no clusters")]
    NoClusters,
    #[error("duplicate cluster id {0}")]
    DuplicateId(String),
}

/// One cluster of `T` units.
///
/// `covariates` is a row-major `T x p` block shared (cheaply cloned) between
/// a dataset and its Monte Carlo replicates. The meaning of `indicators`
/// depends on the model: missingness for binary responses, the event flag
/// for survival times, unused for the AR(1) panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: String,
    pub responses: Vec<Option<f64>>,
    pub covariates: Arc<[f64]>,
    pub indicators: Vec<bool>,
    pub initial: Option<f64>,
}

impl Cluster {
    pub fn new(
        id: impl Into<String>,
        responses: Vec<Option<f64>>,
        covariates: Vec<f64>,
        indicators: Vec<bool>,
        initial: Option<f64>,
    ) -> Self {
        Self { id: id.into(), responses, covariates: covariates.into(), indicators, initial }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Number of covariates per unit.
    pub fn p(&self) -> usize {
        if self.responses.is_empty() {
            0
        } else {
            self.covariates.len() / self.responses.len()
        }
    }

    /// Covariate row of unit `t`.
    #[inline]
    pub fn x(&self, t: usize) -> &[f64] {
        let p = self.p();
        &self.covariates[t * p..(t + 1) * p]
    }

    /// Linear predictor `coef' x_t`.
    #[inline]
    pub fn xb(&self, t: usize, coef: &[f64]) -> f64 {
        self.x(t).iter().zip(coef).map(|(a, b)| a * b).sum()
    }

    /// Same covariates and id with new responses and indicators.
    pub fn with_outcomes(&self, responses: Vec<Option<f64>>, indicators: Vec<bool>) -> Self {
        Self {
            id: self.id.clone(),
            responses,
            covariates: Arc::clone(&self.covariates),
            indicators,
            initial: self.initial,
        }
    }

    fn validate(&self, p: usize) -> Result<(), DataError> {
        let t = self.len();
        if t == 0 {
            return Err(DataError::EmptyCluster { id: self.id.clone() });
        }
        if self.covariates.len() != t * p {
            return Err(DataError::CovariateShape { id: self.id.clone(), len: self.covariates.len(), p });
        }
        if self.indicators.len() != t {
            return Err(DataError::IndicatorLength { id: self.id.clone(), expected: t, found: self.indicators.len() });
        }
        for u in 0..t {
            let bad_y = matches!(self.responses[u], Some(v) if !v.is_finite());
            if bad_y || self.x(u).iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { id: self.id.clone(), unit: u });
            }
        }
        if matches!(self.initial, Some(v) if !v.is_finite()) {
            return Err(DataError::NonFinite { id: self.id.clone(), unit: 0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    clusters: Vec<Cluster>,
    p: usize,
}

impl ClusteredDataset {
    pub fn new(clusters: Vec<Cluster>, p: usize) -> Result<Self, DataError> {
        if clusters.is_empty() {
            return Err(DataError::NoClusters);
        }
        let mut seen = std::collections::HashSet::with_capacity(clusters.len());
        for c in &clusters {
            c.validate(p)?;
            if !seen.insert(c.id.as_str()) {
                return Err(DataError::DuplicateId(c.id.clone()));
            }
        }
        Ok(Self { clusters, p })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::len).collect()
    }

    pub fn n_units(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Keeps the clusters satisfying `keep`; returns the number removed.
    /// The result may be empty, which callers report as an error.
    pub fn retain(&self, mut keep: impl FnMut(&Cluster) -> bool) -> (Vec<Cluster>, usize) {
        let kept: Vec<Cluster> = self.clusters.iter().filter(|c| keep(c)).cloned().collect();
        let dropped = self.clusters.len() - kept.len();
        (kept, dropped)
    }

    /// Clusters reordered by `order` (a permutation of `0..N`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { clusters: order.iter().map(|&i| self.clusters[i].clone()).collect(), p: self.p }
    }
}
