//! Simulation studies: data generators, the trial loop and summary metrics.

pub mod config;
pub mod experiment;
pub mod generate;
pub mod metrics;

pub use config::parse_config;
pub use experiment::{
    mcar_model, run_experiment, trial_dataset, ExperimentResult, MethodOutcome, MetricsRow, TrialOutcome,
};
pub use metrics::{compute_metrics, Metrics};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::models::binary::{Link, Mechanism};
use crate::models::weibull::WeibullError;
use crate::mpl::Method;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("at least 2 successful trials are needed, got {0}")]
    InsufficientTrials(usize),
    #[error("cluster size must be even for the survival design, got {0}")]
    OddClusterSize(usize),
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error(transparent)]
    Weibull(#[from] WeibullError),
}

/// Distribution of the cluster intercepts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaGen {
    Normal {
        mean: f64,
        var: f64,
    },
    /// Mean of the first covariate over the cluster plus N(0, 1) noise.
    CovariateMean,
}

impl fmt::Display for LambdaGen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaGen::Normal { mean, var } => write!(f, "normal({mean},{var})"),
            LambdaGen::CovariateMean => f.write_str("correlated"),
        }
    }
}

impl FromStr for LambdaGen {
    type Err = String;

    /// `normal(mean,var)` or `correlated`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "correlated" {
            return Ok(LambdaGen::CovariateMean);
        }
        let inner = s
            .strip_prefix("normal(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("expected normal(mean,var) or correlated, got '{s}'"))?;
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 2 {
            return Err(format!("expected two numbers in '{s}'"));
        }
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
        let (mean, var) = (num(parts[0])?, num(parts[1])?);
        if !(var >= 0.0) || !mean.is_finite() || !var.is_finite() {
            return Err(format!("invalid normal parameters in '{s}'"));
        }
        Ok(LambdaGen::Normal { mean, var })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Binary { link: Link, mechanism: Mechanism, beta: Vec<f64>, gamma1: Vec<f64>, gamma2: f64 },
    Weibull { xi: f64, beta: Vec<f64>, pc: f64 },
    Ar1 { rho: f64, sigma2: f64 },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Binary { .. } => "binary",
            ModelSpec::Weibull { .. } => "weibull",
            ModelSpec::Ar1 { .. } => "ar1",
        }
    }

    /// Intercept distribution used when none is configured.
    pub fn default_lambda_gen(&self) -> LambdaGen {
        match self {
            ModelSpec::Binary { link: Link::Logit, .. } => LambdaGen::Normal { mean: -0.35, var: 1.0 },
            ModelSpec::Binary { link: Link::Probit, .. } => LambdaGen::Normal { mean: -0.22, var: 0.39 },
            ModelSpec::Weibull { .. } => LambdaGen::Normal { mean: 0.5, var: 0.25 },
            ModelSpec::Ar1 { .. } => LambdaGen::Normal { mean: 1.0, var: 1.0 },
        }
    }

    /// Methods run when none are configured.
    pub fn default_methods(&self) -> Vec<Method> {
        match self {
            ModelSpec::Binary { .. } => vec![Method::Profile, Method::MplExact, Method::Mcmpl],
            _ => vec![Method::Profile, Method::Mcmpl],
        }
    }

    /// True value of a named parameter, if the design fixes one.
    pub fn truth(&self, name: &str) -> Option<f64> {
        let indexed = |prefix: &str, v: &[f64]| -> Option<f64> {
            let j: usize = name.strip_prefix(prefix)?.parse().ok()?;
            v.get(j.checked_sub(1)?).copied()
        };
        match self {
            ModelSpec::Binary { beta, gamma1, gamma2, mechanism, .. } => match name {
                "gamma2" if *mechanism == Mechanism::Mnar => Some(*gamma2),
                _ if name.starts_with("beta") => indexed("beta", beta),
                _ if name.starts_with("gamma1") && *mechanism == Mechanism::Mnar => indexed("gamma1", gamma1),
                _ => None,
            },
            ModelSpec::Weibull { xi, beta, .. } => match name {
                "xi" => Some(*xi),
                _ if name.starts_with("beta") => indexed("beta", beta),
                _ if name.starts_with("rr") => indexed("rr", beta).map(|b| (-xi * b).exp()),
                _ => None,
            },
            ModelSpec::Ar1 { rho, sigma2 } => match name {
                "rho" => Some(*rho),
                "sigma2" => Some(*sigma2),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub lambda_gen: LambdaGen,
    pub n: usize,
    pub t: usize,
    pub trials: usize,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Confidence level of the Wald intervals behind coverage.
    pub level: f64,
}

impl ExperimentSpec {
    pub fn new(model: ModelSpec, n: usize, t: usize, trials: usize, replicates: usize, seed: u64) -> Self {
        Self {
            lambda_gen: model.default_lambda_gen(),
            methods: model.default_methods(),
            model,
            n,
            t,
            trials,
            replicates,
            seed,
            level: 0.95,
        }
    }

    pub fn with_methods(mut self, methods: Vec<Method>) -> Self {
        self.methods = methods;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if self.n == 0 || self.t == 0 || self.trials == 0 || self.replicates == 0 {
            return bad("N, T, S and R must all be at least 1");
        }
        if self.methods.is_empty() {
            return bad("no methods requested");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        match &self.model {
            ModelSpec::Binary { beta, gamma1, gamma2, .. } => {
                if beta.is_empty() || gamma1.len() != beta.len() {
                    return bad("beta and gamma1 must be non-empty and of equal length");
                }
                if !gamma2.is_finite() {
                    return bad("gamma2 must be finite");
                }
            }
            ModelSpec::Weibull { xi, beta, pc } => {
                if !(*xi > 0.0) {
                    return bad("xi must be positive");
                }
                if beta.is_empty() {
                    return bad("beta must have at least one component");
                }
                if !(*pc > 0.0 && *pc < 1.0) {
                    return bad("Pc must lie in (0, 1)");
                }
                if !self.t.is_multiple_of(2) {
                    return Err(SimError::OddClusterSize(self.t));
                }
                if self.methods.contains(&Method::MplExact) {
                    return bad("mpl-exact is not available for the weibull model");
                }
            }
            ModelSpec::Ar1 { sigma2, .. } => {
                if !(*sigma2 > 0.0) {
                    return bad("sigma2 must be positive");
                }
                if self.t < 2 {
                    return bad("the ar1 model needs T >= 2");
                }
                if self.methods.contains(&Method::MplExact) {
                    return bad("mpl-exact is not available for the ar1 model");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_gen_parsing() {
        assert_eq!("normal(-0.35, 1)".parse(), Ok(LambdaGen::Normal { mean: -0.35, var: 1.0 }));
        assert_eq!("Correlated".parse(), Ok(LambdaGen::CovariateMean));
        assert!("normal(1)".parse::<LambdaGen>().is_err());
        assert!("normal(0,-1)".parse::<LambdaGen>().is_err());
        let g = LambdaGen::Normal { mean: 0.5, var: 0.25 };
        assert_eq!(g.to_string().parse(), Ok(g));
    }

    #[test]
    fn truths() {
        let w = ModelSpec::Weibull { xi: 1.5, beta: vec![-1.0, 1.0], pc: 0.2 };
        assert_eq!(w.truth("xi"), Some(1.5));
        assert_eq!(w.truth("beta2"), Some(1.0));
        assert!((w.truth("rr2").unwrap() - (-1.5f64).exp()).abs() < 1e-15);
        assert_eq!(w.truth("beta3"), None);
        let b = ModelSpec::Binary {
            link: Link::Logit,
            mechanism: Mechanism::Mcar,
            beta: vec![1.0],
            gamma1: vec![2.5],
            gamma2: 0.0,
        };
        assert_eq!(b.truth("beta1"), Some(1.0));
        assert_eq!(b.truth("gamma2"), None);
    }

    #[test]
    fn validation() {
        let ar = ModelSpec::Ar1 { rho: 0.5, sigma2: 1.0 };
        assert!(ExperimentSpec::new(ar.clone(), 10, 4, 2, 5, 1).validate().is_ok());
        assert!(ExperimentSpec::new(ar.clone(), 10, 4, 0, 5, 1).validate().is_err());
        let exact = ExperimentSpec::new(ar, 10, 4, 2, 5, 1).with_methods(vec![Method::MplExact]);
        assert!(exact.validate().is_err());
    }
}
