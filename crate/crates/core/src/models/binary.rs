//! Fixed-effects binary regression with a possibly missing response.
//!
//! `Y_it ~ Bern(F(λ_i + βᵀx_it))` and, given `Y_it = y`, the response is
//! missing with probability `G(γ₁ᵀx_it + γ₂ y)` where `G` is the logistic
//! CDF. Under MCAR (`γ₂ = 0`) inference on β uses the observed units only;
//! under MNAR the interest parameter is `ψ = (β, γ₁, γ₂)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::data::Cluster;
use crate::mpl::{ClusteredModel, ReplicateSimulator};

/// Linear predictors are clamped to this range before any CDF evaluation.
pub const ETA_CLAMP: f64 = 35.0;
/// Search box for γ₂; separation drives its estimate to an edge.
pub const GAMMA2_BOUND: f64 = 30.0;
/// Cap on the missingness-regression coefficients under separation.
pub const GAMMA_CAP: f64 = 30.0;

const LN_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BinaryError {
    #[error("missingness regression did not converge (separation?); capped estimate {capped:?}")]
    NonConvergence { capped: Vec<f64> },
    #[error("missingness regression needs at least one unit")]
    NoUnits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Logit,
    Probit,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
        })
    }
}

impl FromStr for Link {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            other => Err(format!("unknown link '{other}' (expected logit or probit)")),
        }
    }
}

/// `F`, `1 − F`, `f = F'` and `f' = F''` at one linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkValues {
    pub cdf: f64,
    pub ccdf: f64,
    pub pdf: f64,
    pub pdf_deriv: f64,
}

impl Link {
    pub fn eval(&self, eta: f64) -> LinkValues {
        let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
        match self {
            Link::Logit => {
                let cdf = 1.0 / (1.0 + (-eta).exp());
                let ccdf = 1.0 / (1.0 + eta.exp());
                let pdf = cdf * ccdf;
                LinkValues { cdf, ccdf, pdf, pdf_deriv: pdf * (ccdf - cdf) }
            }
            Link::Probit => {
                let cdf = std_normal_cdf(eta);
                let ccdf = std_normal_cdf(-eta);
                let pdf = (-0.5 * eta * eta).exp() / (2.0 * std::f64::consts::PI).sqrt();
                LinkValues { cdf, ccdf, pdf, pdf_deriv: -eta * pdf }
            }
        }
    }

    pub fn cdf(&self, eta: f64) -> f64 {
        self.eval(eta).cdf
    }
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
fn expit(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta.clamp(-ETA_CLAMP, ETA_CLAMP)).exp())
}

#[inline]
fn ln(v: f64) -> f64 {
    v.max(LN_FLOOR).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Mcar,
    Mnar,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "mcar",
            Mechanism::Mnar => "mnar",
        })
    }
}

impl FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Mechanism::Mcar),
            "mnar" => Ok(Mechanism::Mnar),
            other => Err(format!("unknown mechanism '{other}' (expected mcar or mnar)")),
        }
    }
}

/// Parameters shared by all clusters, borrowed from a ψ vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryParams<'a> {
    pub beta: &'a [f64],
    /// Absent for the MCAR likelihood, which ignores the missingness model.
    pub gamma1: Option<&'a [f64]>,
    pub gamma2: f64,
}

/// One unit's probabilities `π = F(λ+βᵀx)`, `ζ⁰ = G(γ₁ᵀx)`, `ζ¹ = G(γ₁ᵀx+γ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbabilities {
    pub pi: f64,
    pub zeta0: f64,
    pub zeta1: f64,
}

impl CellProbabilities {
    /// `P(M = 1) = (1−π)ζ⁰ + πζ¹`.
    pub fn missing_probability(&self) -> f64 {
        (1.0 - self.pi) * self.zeta0 + self.pi * self.zeta1
    }
}

/// Per-unit response indicator: `Some(y)` when observed.
#[inline]
fn observed(c: &Cluster, t: usize) -> Option<f64> {
    if c.indicators[t] {
        None
    } else {
        c.responses[t]
    }
}

/// Log-likelihood of one cluster including the missingness model.
pub fn cluster_obs_loglik(link: Link, params: &BinaryParams<'_>, lambda: f64, c: &Cluster) -> f64 {
    let gamma1 = params.gamma1.unwrap_or(&[]);
    let mut total = 0.0;
    for t in 0..c.len() {
        let lv = link.eval(lambda + c.xb(t, params.beta));
        let g = if gamma1.is_empty() { 0.0 } else { c.xb(t, gamma1) };
        let zeta0 = expit(g);
        let zeta1 = expit(g + params.gamma2);
        match observed(c, t) {
            None => total += ln(lv.ccdf * zeta0 + lv.cdf * zeta1),
            Some(y) => {
                let zeta = if y > 0.5 { zeta1 } else { zeta0 };
                total += y * ln(lv.cdf) + (1.0 - y) * ln(lv.ccdf) + ln(1.0 - zeta);
            }
        }
    }
    total
}

/// Log-likelihood of the observed responses only.
pub fn mcar_cluster_loglik(link: Link, beta: &[f64], lambda: f64, c: &Cluster) -> f64 {
    (0..c.len())
        .filter_map(|t| observed(c, t).map(|y| (t, y)))
        .map(|(t, y)| {
            let lv = link.eval(lambda + c.xb(t, beta));
            y * ln(lv.cdf) + (1.0 - y) * ln(lv.ccdf)
        })
        .sum()
}

/// Per-unit score and information contributions.
///
/// Observed unit: `(y−F)f / {F(1−F)}`. Missing unit with `D = ζ⁰ + F(ζ¹−ζ⁰)`:
/// `f(ζ¹−ζ⁰)/D`. The informations are their negative λ-derivatives.
#[inline]
fn unit_terms(lv: &LinkValues, y: Option<f64>, delta: f64, zeta0: f64) -> (f64, f64) {
    match y {
        Some(y) => {
            let v = lv.cdf * lv.ccdf;
            let resid = y - lv.cdf;
            let score = resid * lv.pdf / v;
            let info =
                lv.pdf * lv.pdf / v - resid * (lv.pdf_deriv / v - lv.pdf * lv.pdf * (lv.ccdf - lv.cdf) / (v * v));
            (score, info)
        }
        None => {
            if delta == 0.0 {
                return (0.0, 0.0);
            }
            let d = zeta0 + lv.cdf * delta;
            let ratio = lv.pdf * delta / d;
            (ratio, -lv.pdf_deriv * delta / d + ratio * ratio)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub link: Link,
    pub mechanism: Mechanism,
    /// MNAR only: hold γ₂ at this value instead of estimating it.
    pub fixed_gamma2: Option<f64>,
    /// MCAR only: γ̂₁ used to delete entries in Monte Carlo replicates.
    /// Fitted from the informative clusters when absent.
    pub missingness_gamma: Option<Vec<f64>>,
}

impl BinaryModel {
    pub fn new(link: Link, mechanism: Mechanism) -> Self {
        Self { link, mechanism, fixed_gamma2: None, missingness_gamma: None }
    }

    pub fn with_fixed_gamma2(mut self, gamma2: f64) -> Self {
        self.fixed_gamma2 = Some(gamma2);
        self
    }

    pub fn with_missingness_gamma(mut self, gamma: Vec<f64>) -> Self {
        self.missingness_gamma = Some(gamma);
        self
    }

    /// Splits ψ into `(β, γ₁, γ₂)`.
    pub fn params<'a>(&self, psi: &'a [f64]) -> BinaryParams<'a> {
        match self.mechanism {
            Mechanism::Mcar => BinaryParams { beta: psi, gamma1: None, gamma2: 0.0 },
            Mechanism::Mnar => {
                let p = self.p_from_dim(psi.len());
                let gamma2 = self.fixed_gamma2.unwrap_or_else(|| psi[2 * p]);
                BinaryParams { beta: &psi[..p], gamma1: Some(&psi[p..2 * p]), gamma2 }
            }
        }
    }

    fn p_from_dim(&self, dim: usize) -> usize {
        match (self.mechanism, self.fixed_gamma2) {
            (Mechanism::Mcar, _) => dim,
            (Mechanism::Mnar, Some(_)) => dim / 2,
            (Mechanism::Mnar, None) => (dim - 1) / 2,
        }
    }

    /// Sum of unit scores and informations for one cluster.
    fn score_and_info(&self, psi: &[f64], lambda: f64, c: &Cluster) -> (f64, f64) {
        let par = self.params(psi);
        let mut score = 0.0;
        let mut info = 0.0;
        for t in 0..c.len() {
            let y = observed(c, t);
            if y.is_none() && par.gamma1.is_none() {
                continue;
            }
            let lv = self.link.eval(lambda + c.xb(t, par.beta));
            let (zeta0, delta) = match (y, par.gamma1) {
                (None, Some(g1)) => {
                    let g = c.xb(t, g1);
                    let z0 = expit(g);
                    (z0, expit(g + par.gamma2) - z0)
                }
                _ => (0.0, 0.0),
            };
            let (s, j) = unit_terms(&lv, y, delta, zeta0);
            score += s;
            info += j;
        }
        (score, info)
    }

    /// Root of the nuisance score by safeguarded Newton. The bracket starts
    /// at [−20, 20] and doubles up to four times; without a sign change the
    /// cluster has no finite maximizer and ±inf is returned.
    fn solve_nuisance(&self, psi: &[f64], c: &Cluster) -> f64 {
        let score = |l: f64| self.score_and_info(psi, l, c);
        let mut half = 20.0;
        let (mut lo, mut hi);
        let mut expansions = 0;
        loop {
            lo = -half;
            hi = half;
            let s_lo = score(lo).0;
            let s_hi = score(hi).0;
            if s_lo > 0.0 && s_hi < 0.0 {
                break;
            }
            if expansions == 4 {
                return if s_hi >= 0.0 && s_lo > 0.0 {
                    f64::INFINITY
                } else if s_lo <= 0.0 && s_hi < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::NAN
                };
            }
            half *= 2.0;
            expansions += 1;
        }

        let mut x = 0.0;
        for _ in 0..200 {
            let (s, j) = score(x);
            if s == 0.0 {
                return x;
            }
            if s > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x + s / j;
            let next = if j > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() <= 1e-14 * (1.0 + x.abs()) || hi - lo <= 1e-14 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }
}

impl ClusteredModel for BinaryModel {
    type Simulator = BinarySimulator;

    fn psi_names(&self, p: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..=p).map(|j| format!("beta{j}")).collect();
        if self.mechanism == Mechanism::Mnar {
            names.extend((1..=p).map(|j| format!("gamma1{j}")));
            if self.fixed_gamma2.is_none() {
                names.push("gamma2".to_string());
            }
        }
        names
    }

    fn psi_bounds(&self, p: usize) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); self.psi_names(p).len()];
        if self.mechanism == Mechanism::Mnar && self.fixed_gamma2.is_none() {
            b[2 * p] = (-GAMMA2_BOUND, GAMMA2_BOUND);
        }
        b
    }

    fn initial_psi(&self, clusters: &[Cluster], p: usize) -> Vec<f64> {
        let mut psi = vec![0.0; p];
        if self.mechanism == Mechanism::Mnar {
            let g1 = match fit_missingness_regression(clusters, p) {
                Ok(g) => g,
                Err(BinaryError::NonConvergence { capped }) => capped,
                Err(BinaryError::NoUnits) => vec![0.0; p],
            };
            psi.extend(g1);
            if self.fixed_gamma2.is_none() {
                psi.push(0.0);
            }
        }
        psi
    }

    fn cluster_loglik(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        match self.mechanism {
            Mechanism::Mcar => mcar_cluster_loglik(self.link, psi, lambda, c),
            Mechanism::Mnar => cluster_obs_loglik(self.link, &self.params(psi), lambda, c),
        }
    }

    fn nuisance_score(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        self.score_and_info(psi, lambda, c).0
    }

    fn nuisance_obs_info(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        self.score_and_info(psi, lambda, c).1
    }

    fn constrained_nuisance(&self, psi: &[f64], c: &Cluster) -> f64 {
        self.solve_nuisance(psi, c)
    }

    /// A cluster informs β only if its observed responses include both a 0 and a 1.
    fn is_informative(&self, c: &Cluster) -> bool {
        let mut zero = false;
        let mut one = false;
        for t in 0..c.len() {
            match observed(c, t) {
                Some(y) if y > 0.5 => one = true,
                Some(_) => zero = true,
                None => {}
            }
        }
        zero && one
    }

    fn simulator(&self, clusters: &[Cluster], psi_hat: &[f64], lambda_hat: &[f64]) -> BinarySimulator {
        let par = self.params(psi_hat);
        let p = par.beta.len();
        let (gamma1, gamma2) = match par.gamma1 {
            Some(g1) => (g1.to_vec(), par.gamma2),
            None => {
                let g = match &self.missingness_gamma {
                    Some(g) => g.clone(),
                    None => match fit_missingness_regression(clusters, p) {
                        Ok(g) => g,
                        Err(BinaryError::NonConvergence { capped }) => capped,
                        Err(BinaryError::NoUnits) => vec![0.0; p],
                    },
                };
                (g, 0.0)
            }
        };
        BinarySimulator { link: self.link, beta: par.beta.to_vec(), lambda: lambda_hat.to_vec(), gamma1, gamma2 }
    }

    /// Closed form for the MCAR likelihood:
    /// `Σ_obs f(η̃) f(η̂) / {F(η̃)(1−F(η̃))}` with `η̃ = λ̂_ψ + βᵀx`, `η̂ = λ̂ + β̂ᵀx`.
    fn exact_expectation(
        &self,
        psi_hat: &[f64],
        lambda_hat: f64,
        psi: &[f64],
        lambda_psi: f64,
        c: &Cluster,
    ) -> Option<f64> {
        if self.mechanism != Mechanism::Mcar {
            return None;
        }
        let mut total = 0.0;
        for t in 0..c.len() {
            if observed(c, t).is_none() {
                continue;
            }
            let at = self.link.eval(lambda_psi + c.xb(t, psi));
            let hat = self.link.eval(lambda_hat + c.xb(t, psi_hat));
            total += at.pdf * hat.pdf / (at.cdf * at.ccdf);
        }
        Some(total)
    }

    /// Per unit: `m`, `(1−m)y`, `1−m`.
    fn linear_score_statistics(&self, c: &Cluster, out: &mut Vec<f64>) -> bool {
        out.clear();
        for t in 0..c.len() {
            match observed(c, t) {
                Some(y) => out.extend_from_slice(&[0.0, y, 1.0]),
                None => out.extend_from_slice(&[1.0, 0.0, 0.0]),
            }
        }
        true
    }

    /// Per unit: `f(ζ¹−ζ⁰)/D`, `f/{F(1−F)}`, `−f/(1−F)`.
    fn linear_score_coefficients(&self, psi: &[f64], lambda: f64, c: &Cluster, out: &mut Vec<f64>) -> bool {
        let par = self.params(psi);
        out.clear();
        for t in 0..c.len() {
            let lv = self.link.eval(lambda + c.xb(t, par.beta));
            let a = match par.gamma1 {
                Some(g1) => {
                    let g = c.xb(t, g1);
                    let z0 = expit(g);
                    let delta = expit(g + par.gamma2) - z0;
                    if delta == 0.0 {
                        0.0
                    } else {
                        lv.pdf * delta / (z0 + lv.cdf * delta)
                    }
                }
                None => 0.0,
            };
            let b = lv.pdf / (lv.cdf * lv.ccdf);
            out.extend_from_slice(&[a, b, -lv.pdf / lv.ccdf]);
        }
        true
    }
}

/// Two-stage replicate generator: complete responses from the fitted
/// regression, then deletion with probability `G(γ̂₁ᵀx + γ̂₂y)`.
#[derive(Debug, Clone)]
pub struct BinarySimulator {
    pub link: Link,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: f64,
}

impl BinarySimulator {
    /// One draw of `(y, missing)` per unit; always consumes two uniforms per unit.
    pub fn draw(
        link: Link,
        beta: &[f64],
        lambda: f64,
        gamma1: &[f64],
        gamma2: f64,
        c: &Cluster,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<Option<f64>>, Vec<bool>) {
        let n = c.len();
        let mut responses = Vec::with_capacity(n);
        let mut missing = Vec::with_capacity(n);
        for t in 0..n {
            let u_y: f64 = rng.random();
            let u_m: f64 = rng.random();
            let y = if u_y < link.cdf(lambda + c.xb(t, beta)) { 1.0 } else { 0.0 };
            let m = u_m < expit(c.xb(t, gamma1) + gamma2 * y);
            responses.push(if m { None } else { Some(y) });
            missing.push(m);
        }
        (responses, missing)
    }
}

impl ReplicateSimulator for BinarySimulator {
    fn simulate(&self, index: usize, cluster: &Cluster, rng: &mut ChaCha8Rng) -> Cluster {
        let (y, m) = Self::draw(self.link, &self.beta, self.lambda[index], &self.gamma1, self.gamma2, cluster, rng);
        cluster.with_outcomes(y, m)
    }
}

/// Logistic regression without intercept of the missingness indicators on
/// the covariates, by Newton–Raphson. Under separation the iterates are
/// capped at `|γ_j| ≤ 30` and reported as non-convergent.
pub fn fit_missingness_regression(clusters: &[Cluster], p: usize) -> Result<Vec<f64>, BinaryError> {
    let units: usize = clusters.iter().map(Cluster::len).sum();
    if units == 0 {
        return Err(BinaryError::NoUnits);
    }
    let mut gamma = DVector::<f64>::zeros(p);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for c in clusters {
            for t in 0..c.len() {
                let x = DVector::from_column_slice(c.x(t));
                let prob = expit(x.dot(&gamma));
                let m = if c.indicators[t] { 1.0 } else { 0.0 };
                grad.axpy(m - prob, &x, 1.0);
                hess.ger(prob * (1.0 - prob), &x, &x, 1.0);
            }
        }
        let Some(chol) = hess.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        gamma += &step;
        if gamma.iter().any(|g| g.abs() > GAMMA_CAP) {
            let capped = gamma.iter().map(|g| g.clamp(-GAMMA_CAP, GAMMA_CAP)).collect();
            return Err(BinaryError::NonConvergence { capped });
        }
        if step.amax() <= 1e-12 * (1.0 + gamma.amax()) {
            return Ok(gamma.iter().copied().collect());
        }
    }
    let capped = gamma.iter().map(|g| g.clamp(-GAMMA_CAP, GAMMA_CAP)).collect();
    Err(BinaryError::NonConvergence { capped })
}

/// Removes clusters whose observed responses are all 0, all 1, or absent.
pub fn drop_noninformative(data: &crate::data::ClusteredDataset) -> (Vec<Cluster>, usize) {
    let probe = BinaryModel::new(Link::Logit, Mechanism::Mcar);
    data.retain(|c| probe.is_informative(c))
}
