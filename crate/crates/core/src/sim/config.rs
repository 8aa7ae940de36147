//! `key = value` experiment files. Blank lines and `#` comments are ignored;
//! keys are case-insensitive and unknown keys are rejected.

use std::collections::HashMap;

use super::{ExperimentSpec, LambdaGen, ModelSpec, SimError};
use crate::models::binary::{Link, Mechanism};
use crate::mpl::{Method, MonteCarloConfig};

const KEYS: &[&str] = &[
    "model",
    "link",
    "mechanism",
    "n",
    "t",
    "s",
    "r",
    "seed",
    "beta",
    "gamma1",
    "gamma2",
    "xi",
    "rho",
    "sigma2",
    "pc",
    "lambda_gen",
    "methods",
];

struct Entries {
    values: HashMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, SimError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse::<T>().map(Some).map_err(|e| SimError::Syntax { line: *line, message: format!("{key}: {e}") })
            }
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, SimError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| SimError::MissingKey(key.to_string()))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, SimError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| SimError::Syntax { line: *line, message: format!("{key}: {e}") })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn require_list(&self, key: &str) -> Result<Vec<f64>, SimError> {
        self.list(key)?.ok_or_else(|| SimError::MissingKey(key.to_string()))
    }
}

/// Parses and validates an experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, SimError> {
    let mut values = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| SimError::Syntax { line, message: format!("expected key = value, got '{content}'") })?;
        let key = k.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(SimError::UnknownKey { line, key: k.trim().to_string() });
        }
        if values.insert(key.clone(), (line, v.trim().to_string())).is_some() {
            return Err(SimError::Syntax { line, message: format!("duplicate key '{key}'") });
        }
    }
    let e = Entries { values };

    let model_name: String = e.require("model")?;
    let model = match model_name.to_ascii_lowercase().as_str() {
        "binary" => {
            let mechanism: Mechanism = e.get("mechanism")?.unwrap_or(Mechanism::Mcar);
            let gamma2 = match mechanism {
                Mechanism::Mnar => e.require("gamma2")?,
                Mechanism::Mcar => e.get("gamma2")?.unwrap_or(0.0),
            };
            ModelSpec::Binary {
                link: e.get::<Link>("link")?.unwrap_or(Link::Logit),
                mechanism,
                beta: e.require_list("beta")?,
                gamma1: e.require_list("gamma1")?,
                gamma2,
            }
        }
        "weibull" => ModelSpec::Weibull { xi: e.require("xi")?, beta: e.require_list("beta")?, pc: e.require("pc")? },
        "ar1" => ModelSpec::Ar1 { rho: e.require("rho")?, sigma2: e.require("sigma2")? },
        other => {
            let line = e.raw("model").map_or(0, |(l, _)| *l);
            return Err(SimError::Syntax { line, message: format!("unknown model '{other}'") });
        }
    };

    let mut spec = ExperimentSpec::new(
        model,
        e.require("n")?,
        e.require("t")?,
        e.require("s")?,
        e.get("r")?.unwrap_or(MonteCarloConfig::DEFAULT_REPLICATES),
        e.get("seed")?.unwrap_or(crate::DEFAULT_SEED),
    );
    if let Some(g) = e.get::<LambdaGen>("lambda_gen")? {
        spec.lambda_gen = g;
    }
    if let Some((line, v)) = e.raw("methods") {
        spec.methods = v
            .split(',')
            .map(|m| m.trim().parse::<Method>().map_err(|message| SimError::Syntax { line: *line, message }))
            .collect::<Result<_, _>>()?;
    }
    spec.validate()?;
    Ok(spec)
}
