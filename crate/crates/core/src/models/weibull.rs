//! Stratified Weibull regression for right-censored clustered survival times.
//!
//! Failure times have survival `exp{−(η y)^ξ}` with scale
//! `η = exp{−(λ_i + βᵀx)}` and ψ = (ξ, β). The censoring law is left
//! unspecified: replicates draw censoring times from the Kaplan–Meier
//! estimate of its survival function by conditional bootstrap.

use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Cluster;
use crate::mpl::{ClusteredModel, ReplicateSimulator};
use crate::optim::{find_root_scalar, integrate_semi_infinite, OptimError, ScalarBounds, Tolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeibullError {
    #[error("survival times must be positive (cluster {cluster}, unit {unit})")]
    NonPositiveTime { cluster: String, unit: usize },
    #[error("shape parameter must be positive, got {0}")]
    NonPositiveShape(f64),
    #[error("cluster {0} has no events")]
    NoEvents(String),
    #[error("no observations to estimate the censoring distribution")]
    EmptyData,
    #[error("censoring proportion must lie in (0, 1), got {0}")]
    InvalidProportion(f64),
    #[error("no censoring rate in the bracket reproduces the target proportion: {0}")]
    NoSolutionInBracket(OptimError),
}

#[inline]
fn time(c: &Cluster, t: usize) -> f64 {
    c.responses[t].unwrap_or(f64::NAN)
}

#[inline]
fn event(c: &Cluster, t: usize) -> bool {
    c.indicators[t]
}

fn events(c: &Cluster) -> usize {
    c.indicators.iter().filter(|d| **d).count()
}

/// `Σ_t (η_t y_t)^ξ` with `η_t = exp{−(λ+βᵀx_t)}`.
#[inline]
fn cumulative_hazard(xi: f64, beta: &[f64], lambda: f64, c: &Cluster) -> f64 {
    (0..c.len()).map(|t| (xi * (time(c, t).ln() - lambda - c.xb(t, beta))).exp()).sum()
}

/// Full log-likelihood of one cluster.
pub fn cluster_loglik(xi: f64, beta: &[f64], lambda: f64, c: &Cluster) -> f64 {
    let mut total = 0.0;
    for t in 0..c.len() {
        let y = time(c, t);
        let log_eta = -(lambda + c.xb(t, beta));
        if event(c, t) {
            total += xi.ln() + xi * log_eta + (xi - 1.0) * y.ln();
        }
        total -= (xi * (y.ln() + log_eta)).exp();
    }
    total
}

/// Log-likelihood over all clusters with explicit nuisance values.
pub fn loglik(xi: f64, beta: &[f64], lambda: &[f64], clusters: &[Cluster]) -> Result<f64, WeibullError> {
    if !(xi > 0.0) {
        return Err(WeibullError::NonPositiveShape(xi));
    }
    check_times(clusters)?;
    Ok(clusters.iter().zip(lambda).map(|(c, &l)| cluster_loglik(xi, beta, l, c)).sum())
}

fn check_times(clusters: &[Cluster]) -> Result<(), WeibullError> {
    for c in clusters {
        for t in 0..c.len() {
            if !(time(c, t) > 0.0) {
                return Err(WeibullError::NonPositiveTime { cluster: c.id.clone(), unit: t });
            }
        }
    }
    Ok(())
}

/// `λ̂_iψ = (1/ξ){log Σ_t y_t^ξ e^{−ξβᵀx_t} − log δ_i·}`.
pub fn constrained_nuisance_closed_form(xi: f64, beta: &[f64], c: &Cluster) -> Result<f64, WeibullError> {
    let d = events(c);
    if d == 0 {
        return Err(WeibullError::NoEvents(c.id.clone()));
    }
    Ok((log_sum_scaled(xi, beta, c) - (d as f64).ln()) / xi)
}

/// `log Σ_t exp{ξ(log y_t − βᵀx_t)}`, computed stably.
fn log_sum_scaled(xi: f64, beta: &[f64], c: &Cluster) -> f64 {
    let terms: Vec<f64> = (0..c.len()).map(|t| xi * (time(c, t).ln() - c.xb(t, beta))).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// The profile log-likelihood written out with λ̂_ψ substituted:
/// `Σ_i [δ_i·{log δ_i· − log Σ_t y^ξ e^{−ξβᵀx}} − ξ Σ_t δ βᵀx + δ_i·(log ξ − 1) + (ξ−1) Σ_t δ log y]`.
pub fn profile_loglik_explicit(xi: f64, beta: &[f64], clusters: &[Cluster]) -> Result<f64, WeibullError> {
    if !(xi > 0.0) {
        return Err(WeibullError::NonPositiveShape(xi));
    }
    let mut total = 0.0;
    for c in clusters {
        let d = events(c);
        if d == 0 {
            return Err(WeibullError::NoEvents(c.id.clone()));
        }
        let d = d as f64;
        let mut xb_events = 0.0;
        let mut logy_events = 0.0;
        for t in (0..c.len()).filter(|&t| event(c, t)) {
            xb_events += c.xb(t, beta);
            logy_events += time(c, t).ln();
        }
        total += d * (d.ln() - log_sum_scaled(xi, beta, c)) - xi * xb_events
            + d * (xi.ln() - 1.0)
            + (xi - 1.0) * logy_events;
    }
    Ok(total)
}

/// Relative risk `exp(−ξ β_j)` with its delta-method standard error given
/// the variances of ξ and β_j and their covariance.
pub fn relative_risk(xi: f64, beta_j: f64, var_xi: f64, var_beta: f64, cov: f64) -> (f64, f64) {
    let rr = (-xi * beta_j).exp();
    let (g_xi, g_b) = (-beta_j * rr, -xi * rr);
    let var = g_xi * g_xi * var_xi + 2.0 * g_xi * g_b * cov + g_b * g_b * var_beta;
    (rr, var.sqrt())
}

/// Right-continuous step function: 1 before the first jump, then
/// `survival_values[k]` on `[jump_times[k], jump_times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    pub jump_times: Vec<f64>,
    pub survival_values: Vec<f64>,
}

impl KmCurve {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival_values[k - 1]
        }
    }

    /// Product-limit estimate of the survival function of the times with
    /// `is_event` set. At tied times events leave before the other units,
    /// so those still count in the risk set.
    pub fn product_limit(times: &[f64], is_event: &[bool]) -> Result<Self, WeibullError> {
        if times.is_empty() {
            return Err(WeibullError::EmptyData);
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut at_risk = times.len();
        let mut s = 1.0;
        let mut curve = KmCurve { jump_times: Vec::new(), survival_values: Vec::new() };
        let mut k = 0;
        while k < order.len() {
            let t = times[order[k]];
            let mut tied = 0;
            let mut d = 0;
            while k + tied < order.len() && times[order[k + tied]] == t {
                if is_event[order[k + tied]] {
                    d += 1;
                }
                tied += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / at_risk as f64;
                curve.jump_times.push(t);
                curve.survival_values.push(s);
            }
            at_risk -= tied;
            k += tied;
        }
        Ok(curve)
    }

    /// Kaplan–Meier estimate of the censoring survival function from pooled
    /// clusters: censored units (δ = 0) are the events.
    pub fn censoring(clusters: &[Cluster]) -> Result<Self, WeibullError> {
        let mut times = Vec::new();
        let mut cens = Vec::new();
        for c in clusters {
            for t in 0..c.len() {
                times.push(time(c, t));
                cens.push(!event(c, t));
            }
        }
        Self::product_limit(&times, &cens)
    }

    /// Censoring time drawn given `C > y`: `c = inf{t : Ŝ(t) ≤ u Ŝ(y)}`.
    ///
    /// If `u Ŝ(y)` is below every value of the curve, the largest jump time
    /// is returned; with no jumps at all the result is `+inf`.
    pub fn conditional_draw(&self, y: f64, u: f64) -> f64 {
        let Some(&last) = self.jump_times.last() else {
            return f64::INFINITY;
        };
        let target = u * self.eval(y);
        let k = self.survival_values.partition_point(|&s| s > target);
        if k < self.jump_times.len() {
            self.jump_times[k]
        } else {
            last
        }
    }
}

/// Censoring rate ς of exponential censoring such that the average over
/// units of `P(C < Y) = ∫₀^∞ S_Y(y) ς e^{−ςy} dy` equals `pc`.
pub fn calibrate_censoring_rate(
    xi: f64,
    beta: &[f64],
    lambda: &[f64],
    clusters: &[Cluster],
    pc: f64,
) -> Result<f64, WeibullError> {
    if !(pc > 0.0 && pc < 1.0) {
        return Err(WeibullError::InvalidProportion(pc));
    }
    if !(xi > 0.0) {
        return Err(WeibullError::NonPositiveShape(xi));
    }
    // Failure-time scales 1/η; the integral depends on ς only through ς/η.
    let mut scales: Vec<f64> = Vec::new();
    for (c, &l) in clusters.iter().zip(lambda) {
        for t in 0..c.len() {
            scales.push((l + c.xb(t, beta)).exp());
        }
    }
    if scales.is_empty() {
        return Err(WeibullError::EmptyData);
    }
    let mut sorted = scales.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let hi = 1e3 / median;

    let mean_censored = |rate: f64| -> f64 {
        if rate <= 0.0 {
            return 0.0;
        }
        let total: f64 = scales
            .iter()
            .map(|&s| {
                let a = rate * s;
                integrate_semi_infinite(|z| (-z.powf(xi)).exp() * a * (-a * z).exp(), 1e-10).unwrap_or(f64::NAN)
            })
            .sum();
        total / scales.len() as f64
    };
    let bracket = ScalarBounds::new(0.0, hi).map_err(WeibullError::NoSolutionInBracket)?;
    let tol = Tolerances { x_tol: 1e-12 * hi, f_tol: 1e-10, ..Tolerances::scalar() };
    find_root_scalar(|r| mean_censored(r) - pc, bracket, &tol).map_err(WeibullError::NoSolutionInBracket)
}

/// Weibull draw by inversion: `(−log U)^{1/ξ} / η`.
pub fn weibull_draw(xi: f64, eta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    (-u.ln()).powf(1.0 / xi) / eta
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeibullModel {
    /// Censoring survival curve for replicates; estimated from the
    /// clusters handed to the simulator when absent.
    pub censoring_km: Option<KmCurve>,
}

impl WeibullModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uses `km` for the conditional bootstrap, typically estimated on the
    /// full dataset before non-informative clusters are dropped.
    pub fn with_censoring_km(mut self, km: KmCurve) -> Self {
        self.censoring_km = Some(km);
        self
    }
}

impl ClusteredModel for WeibullModel {
    type Simulator = WeibullSimulator;

    fn psi_names(&self, p: usize) -> Vec<String> {
        std::iter::once("xi".to_string()).chain((1..=p).map(|j| format!("beta{j}"))).collect()
    }

    fn psi_bounds(&self, p: usize) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); p + 1];
        b[0] = (0.0, f64::INFINITY);
        b
    }

    fn initial_psi(&self, _clusters: &[Cluster], p: usize) -> Vec<f64> {
        let mut psi = vec![0.0; p + 1];
        psi[0] = 1.0;
        psi
    }

    fn cluster_loglik(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        cluster_loglik(psi[0], &psi[1..], lambda, c)
    }

    fn nuisance_score(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        let xi = psi[0];
        xi * (cumulative_hazard(xi, &psi[1..], lambda, c) - events(c) as f64)
    }

    fn nuisance_obs_info(&self, psi: &[f64], lambda: f64, c: &Cluster) -> f64 {
        let xi = psi[0];
        xi * xi * cumulative_hazard(xi, &psi[1..], lambda, c)
    }

    fn constrained_nuisance(&self, psi: &[f64], c: &Cluster) -> f64 {
        if !(psi[0] > 0.0) {
            return f64::NAN;
        }
        constrained_nuisance_closed_form(psi[0], &psi[1..], c).unwrap_or(f64::INFINITY)
    }

    fn is_informative(&self, c: &Cluster) -> bool {
        events(c) > 0
    }

    fn simulator(&self, clusters: &[Cluster], psi_hat: &[f64], lambda_hat: &[f64]) -> WeibullSimulator {
        let km = match &self.censoring_km {
            Some(km) => km.clone(),
            None => KmCurve::censoring(clusters).unwrap_or(KmCurve { jump_times: vec![], survival_values: vec![] }),
        };
        WeibullSimulator { xi: psi_hat[0], beta: psi_hat[1..].to_vec(), lambda: lambda_hat.to_vec(), km }
    }
}

#[derive(Debug, Clone)]
pub struct WeibullSimulator {
    pub xi: f64,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub km: KmCurve,
}

impl ReplicateSimulator for WeibullSimulator {
    /// Failure times from the fit; censored units keep their censoring
    /// time, the others get one by conditional bootstrap beyond `y`.
    fn simulate(&self, index: usize, cluster: &Cluster, rng: &mut ChaCha8Rng) -> Cluster {
        let n = cluster.len();
        let mut y = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for t in 0..n {
            let eta = (-(self.lambda[index] + cluster.xb(t, &self.beta))).exp();
            let failure = weibull_draw(self.xi, eta, rng);
            let u: f64 = rng.sample(Open01);
            let obs = time(cluster, t);
            let censor = if event(cluster, t) { self.km.conditional_draw(obs, u) } else { obs };
            let is_event = failure <= censor;
            y.push(Some(if is_event { failure } else { censor }));
            d.push(is_event);
        }
        cluster.with_outcomes(y, d)
    }
}
