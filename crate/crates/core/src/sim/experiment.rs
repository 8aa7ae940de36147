use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::generate::{ar1_dataset, binary_dataset, survival_dataset};
use super::metrics::{compute_metrics, Metrics};
use super::{ExperimentSpec, ModelSpec, SimError};
use crate::data::ClusteredDataset;
use crate::io::format_number;
use crate::models::ar1;
use crate::models::binary::{fit_missingness_regression, BinaryError, BinaryModel, Link, Mechanism};
use crate::models::weibull::{relative_risk, KmCurve, WeibullModel};
use crate::mpl::{ClusteredModel, Expectation, FitResult, Method, MonteCarloConfig, MplError, Problem};
use crate::rng::{domain, SeedTree};

/// Estimates of one method in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub label: String,
    /// `(name, estimate, standard error)`.
    pub params: Vec<(String, f64, f64)>,
    pub failed: bool,
    pub retried: bool,
}

impl MethodOutcome {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _, _)| n == name).map(|(_, e, _)| *e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub outcomes: Vec<MethodOutcome>,
}

impl TrialOutcome {
    pub fn method(&self, label: &str) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.label == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub n: usize,
    pub t: usize,
    pub method: String,
    pub parameter: String,
    /// `None` when fewer than two trials succeeded.
    pub metrics: Option<Metrics>,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub trials: Vec<TrialOutcome>,
    pub rows: Vec<MetricsRow>,
}

impl ExperimentResult {
    pub fn row(&self, method: &str, parameter: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.parameter == parameter)
    }

    /// Comma-separated table, one row per method and parameter.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,T,method,parameter,B,MB,SD,RMSE,MAE,SE_over_SD,coverage,failed_trials\n");
        for r in &self.rows {
            let cells: Vec<String> = match &r.metrics {
                Some(m) => [m.b, m.mb, m.sd, m.rmse, m.mae, m.se_over_sd, m.coverage]
                    .iter()
                    .map(|v| format_number(*v))
                    .collect(),
                None => vec![String::new(); 7],
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n,
                r.t,
                r.method,
                r.parameter,
                cells.join(","),
                r.failed_trials
            ));
        }
        out
    }
}

/// Runs every trial of `spec` (in parallel) and summarizes each method.
///
/// Trial `k` draws its data from stream `k` of the data seed node and its
/// replicates from a node derived from `k`, so results do not depend on
/// the number of threads.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, SimError> {
    spec.validate()?;
    let trials: Vec<TrialOutcome> =
        (0..spec.trials).into_par_iter().map(|k| run_trial(spec, k)).collect::<Result<_, _>>()?;
    let rows = summarize(spec, &trials);
    Ok(ExperimentResult { spec: spec.clone(), trials, rows })
}

fn summarize(spec: &ExperimentSpec, trials: &[TrialOutcome]) -> Vec<MetricsRow> {
    let mut labels: Vec<String> = Vec::new();
    for o in trials.iter().flat_map(|t| &t.outcomes) {
        if !labels.contains(&o.label) {
            labels.push(o.label.clone());
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        let outcomes: Vec<&MethodOutcome> = trials.iter().filter_map(|t| t.method(&label)).collect();
        let failed = outcomes.iter().filter(|o| o.failed).count();
        let names: Vec<String> = outcomes
            .iter()
            .find(|o| !o.failed)
            .map(|o| o.params.iter().map(|(n, _, _)| n.clone()).collect())
            .unwrap_or_default();
        for name in names {
            let Some(truth) = spec.model.truth(&name) else {
                continue;
            };
            let (est, ses): (Vec<f64>, Vec<f64>) = outcomes
                .iter()
                .filter(|o| !o.failed)
                .filter_map(|o| o.params.iter().find(|(n, _, _)| *n == name).map(|(_, e, s)| (*e, *s)))
                .unzip();
            rows.push(MetricsRow {
                n: spec.n,
                t: spec.t,
                method: label.clone(),
                parameter: name,
                metrics: compute_metrics(&est, &ses, truth, spec.level).ok(),
                failed_trials: failed,
            });
        }
    }
    rows
}

/// Seeds and generators owned by one trial.
struct TrialSeeds {
    data: ChaCha8Rng,
    retry: ChaCha8Rng,
    mc: MonteCarloConfig,
}

impl TrialSeeds {
    fn new(spec: &ExperimentSpec, trial: usize) -> Self {
        let root = SeedTree::new(spec.seed);
        let k = trial as u64;
        Self {
            data: root.child(domain::DATA).stream(k),
            retry: root.child(domain::RETRY).stream(k),
            mc: MonteCarloConfig {
                replicates: spec.replicates,
                master_seed: root.child(domain::REPLICATES).child(k).key(),
            },
        }
    }
}

/// Dataset of trial `trial`, as seen by [`run_experiment`].
pub fn trial_dataset(spec: &ExperimentSpec, trial: usize) -> Result<ClusteredDataset, SimError> {
    generate(spec, &mut TrialSeeds::new(spec, trial).data)
}

fn generate(spec: &ExperimentSpec, rng: &mut ChaCha8Rng) -> Result<ClusteredDataset, SimError> {
    let (n, t, g) = (spec.n, spec.t, spec.lambda_gen);
    Ok(match &spec.model {
        ModelSpec::Binary { link, beta, gamma1, gamma2, .. } => {
            binary_dataset(*link, beta, gamma1, *gamma2, g, n, t, rng).data
        }
        ModelSpec::Weibull { xi, beta, pc } => survival_dataset(*xi, beta, *pc, g, n, t, rng)?.data,
        ModelSpec::Ar1 { rho, sigma2 } => ar1_dataset(*rho, *sigma2, g, n, t, rng).data,
    })
}

/// MCAR binary model whose replicates re-delete responses with the
/// missingness regression fitted to `data`.
pub fn mcar_model(link: Link, data: &ClusteredDataset) -> BinaryModel {
    let gamma_hat = match fit_missingness_regression(data.clusters(), data.p()) {
        Ok(g) => g,
        Err(BinaryError::NonConvergence { capped }) => capped,
        Err(BinaryError::NoUnits) => vec![0.0; data.p()],
    };
    BinaryModel::new(link, Mechanism::Mcar).with_missingness_gamma(gamma_hat)
}

pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialOutcome, SimError> {
    let mut seeds = TrialSeeds::new(spec, trial);
    let data = generate(spec, &mut seeds.data)?;
    let outcomes = match &spec.model {
        ModelSpec::Binary { link, mechanism, .. } => {
            let mcar = mcar_model(*link, &data);
            match mechanism {
                Mechanism::Mcar => fit_methods(&mcar, &data, &spec.methods, &seeds.mc, None, ""),
                Mechanism::Mnar => {
                    let mnar = BinaryModel::new(*link, Mechanism::Mnar);
                    let own: Vec<Method> = spec.methods.iter().copied().filter(|m| *m != Method::MplExact).collect();
                    let mut out = fit_methods(&mnar, &data, &own, &seeds.mc, Some(&mut seeds.retry), "");
                    if spec.methods.contains(&Method::MplExact) {
                        // The MNAR model has no closed form; this is the MCAR-model fit
                        // that ignores the missingness mechanism.
                        out.extend(fit_methods(&mcar, &data, &[Method::MplExact], &seeds.mc, None, "-mcar"));
                    }
                    out
                }
            }
        }
        ModelSpec::Weibull { .. } => {
            let km = KmCurve::censoring(data.clusters())?;
            let model = WeibullModel::new().with_censoring_km(km);
            let mut out = fit_methods(&model, &data, &spec.methods, &seeds.mc, None, "");
            for o in &mut out {
                add_relative_risks(o);
            }
            out
        }
        ModelSpec::Ar1 { .. } => spec.methods.iter().map(|m| ar1_outcome(&data, *m, &seeds.mc)).collect(),
    };
    Ok(TrialOutcome { trial, outcomes: outcomes.into_iter().map(|(o, _)| o).collect() })
}

/// Outcome plus the covariance needed for derived quantities.
type Fitted = (MethodOutcome, Option<FitResult>);

fn outcome(label: String, fit: Result<FitResult, MplError>, retried: bool) -> Fitted {
    match fit {
        Ok(f) => {
            let params =
                f.psi_names.iter().zip(&f.psi_hat).zip(&f.std_errors).map(|((n, e), s)| (n.clone(), *e, *s)).collect();
            (MethodOutcome { label, params, failed: !f.is_clean(), retried }, Some(f))
        }
        Err(_) => (MethodOutcome { label, params: Vec::new(), failed: true, retried }, None),
    }
}

fn perturb(x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    x.iter().map(|v| v + 0.1 * (1.0 + v.abs()) * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn clean(fit: &Result<FitResult, MplError>) -> bool {
    matches!(fit, Ok(f) if f.is_clean())
}

/// Profile fit followed by each requested method. With `retry`, a failed
/// fit is repeated once from a randomly perturbed start.
fn fit_methods<M: ClusteredModel>(
    model: &M,
    data: &ClusteredDataset,
    methods: &[Method],
    mc: &MonteCarloConfig,
    mut retry: Option<&mut ChaCha8Rng>,
    suffix: &str,
) -> Vec<Fitted> {
    let label = |m: Method| format!("{}{}", m.as_str(), suffix);
    let problem = match Problem::new(model, data) {
        Ok(p) => p,
        Err(e) => return methods.iter().map(|m| outcome(label(*m), Err(e.clone()), false)).collect(),
    };

    let mut profile = problem.fit_profile(None);
    let mut profile_retried = false;
    if !clean(&profile) {
        if let Some(rng) = retry.as_deref_mut() {
            let start = perturb(&model.initial_psi(problem.clusters(), problem.p()), rng);
            let second = problem.maximize(Method::Profile, &Expectation::None, &start);
            profile_retried = true;
            if clean(&second) || profile.is_err() {
                profile = second;
            }
        }
    }

    methods
        .iter()
        .map(|&m| {
            if m == Method::Profile {
                return outcome(label(m), profile.clone(), profile_retried);
            }
            let prof = match &profile {
                Ok(p) => p,
                Err(e) => return outcome(label(m), Err(e.clone()), profile_retried),
            };
            let expectation = match problem.expectation(m, prof, mc) {
                Ok(e) => e,
                Err(e) => return outcome(label(m), Err(e), false),
            };
            let mut fit = problem.maximize(m, &expectation, &prof.psi_hat);
            let mut retried = false;
            if !clean(&fit) {
                if let Some(rng) = retry.as_deref_mut() {
                    let second = problem.maximize(m, &expectation, &perturb(&prof.psi_hat, rng));
                    retried = true;
                    if clean(&second) || fit.is_err() {
                        fit = second;
                    }
                }
            }
            outcome(label(m), fit, retried)
        })
        .collect()
}

/// Appends `rr{j} = exp(−ξ β_j)` with delta-method standard errors.
fn add_relative_risks(fitted: &mut Fitted) {
    let (o, fit) = fitted;
    let Some(f) = fit else {
        return;
    };
    let xi = f.psi_hat[0];
    for j in 1..f.psi_hat.len() {
        let (rr, se) = match &f.covariance {
            Some(c) => relative_risk(xi, f.psi_hat[j], c[(0, 0)], c[(j, j)], c[(0, j)]),
            None => ((-xi * f.psi_hat[j]).exp(), f64::NAN),
        };
        o.params.push((format!("rr{j}"), rr, se));
    }
}

fn ar1_outcome(data: &ClusteredDataset, method: Method, mc: &MonteCarloConfig) -> Fitted {
    let fit = ar1::fit_bounded(data, method, mc, ar1::default_bounds()).map_err(|e| match e {
        ar1::Ar1Error::Mpl(m) => m,
        _ => MplError::NoInformativeClusters,
    });
    outcome(method.as_str().to_string(), fit, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::binary::Link;

    fn small_ar1() -> ExperimentSpec {
        ExperimentSpec::new(ModelSpec::Ar1 { rho: 0.5, sigma2: 1.0 }, 30, 4, 6, 20, 11)
    }

    #[test]
    fn ar1_rows_and_determinism() {
        let spec = small_ar1();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.row("profile", "rho").is_some() && a.row("mcmpl", "sigma2").is_some());
        assert_eq!(a.rows.len(), 4);
    }

    #[test]
    fn single_trial_has_no_metrics() {
        let mut spec = small_ar1();
        spec.trials = 1;
        let r = run_experiment(&spec).unwrap();
        assert!(r.rows.iter().all(|row| row.metrics.is_none()));
        assert!(r.to_csv().lines().nth(1).unwrap().contains(",,,,,,,"));
    }

    #[test]
    fn mnar_reports_mcar_exact_fit() {
        let model = ModelSpec::Binary {
            link: Link::Logit,
            mechanism: Mechanism::Mnar,
            beta: vec![1.0],
            gamma1: vec![5.0],
            gamma2: 1.0,
        };
        let spec = ExperimentSpec::new(model, 30, 6, 2, 10, 3);
        let r = run_experiment(&spec).unwrap();
        let labels: Vec<&str> = r.trials[0].outcomes.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, vec!["profile", "mcmpl", "mpl-exact-mcar"]);
        assert_eq!(r.trials[0].method("mpl-exact-mcar").unwrap().params.len(), 1);
    }

    #[test]
    fn weibull_adds_relative_risks() {
        let spec = ExperimentSpec::new(ModelSpec::Weibull { xi: 1.5, beta: vec![-1.0, 1.0], pc: 0.2 }, 20, 6, 2, 10, 5);
        let r = run_experiment(&spec).unwrap();
        let o = r.trials[0].method("mcmpl").unwrap();
        let names: Vec<&str> = o.params.iter().map(|(n, _, _)| n.as_str()).collect();
        assert_eq!(names, vec!["xi", "beta1", "beta2", "rr1", "rr2"]);
        let (xi, b2) = (o.estimate("xi").unwrap(), o.estimate("beta2").unwrap());
        assert!((o.estimate("rr2").unwrap() - (-xi * b2).exp()).abs() < 1e-12);
    }
}
