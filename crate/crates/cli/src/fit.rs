use anyhow::{bail, Context};
use mcmpl::data::ClusteredDataset;
use mcmpl::io::{format_number, DatasetKind};
use mcmpl::models::ar1::{self, Ar1Model};
use mcmpl::models::binary::{BinaryModel, Mechanism};
use mcmpl::models::weibull::{relative_risk, KmCurve, WeibullModel};
use mcmpl::mpl::{ClusteredModel, FitResult, Method, MonteCarloConfig, MplError, Problem, WaldSummary};
use mcmpl::sim::mcar_model;

use crate::{output, FitArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean,
    /// Results written, but some fit did not converge, hit a bound or has
    /// no usable standard errors.
    Flagged,
}

/// Fit of one method: the estimates, or the reason there are none.
struct MethodFit {
    method: Method,
    psi_names: Vec<String>,
    fit: Result<FitResult, MplError>,
}

pub fn run(args: &FitArgs) -> anyhow::Result<Status> {
    let kind = args.model.model.context("--model is required")?;
    anyhow::ensure!(args.replicates >= 1, "--replicates must be at least 1");
    anyhow::ensure!(args.level > 0.0 && args.level < 1.0, "--level must lie in (0, 1)");
    let data = output::read(kind, &args.data)?;
    let mc = MonteCarloConfig::new(args.replicates, args.seed)?;
    let methods = &args.method;
    if methods.contains(&Method::MplExact) {
        let exact = kind == DatasetKind::Binary && args.model.mechanism == Mechanism::Mcar;
        anyhow::ensure!(exact, "mpl-exact is only available for the binary model with --mechanism mcar");
    }

    let fits: Vec<MethodFit> = match kind {
        DatasetKind::Binary => match args.model.mechanism {
            Mechanism::Mcar => fit_all(&mcar_model(args.model.link, &data), &data, methods, &mc)?,
            Mechanism::Mnar => fit_all(&BinaryModel::new(args.model.link, Mechanism::Mnar), &data, methods, &mc)?,
        },
        DatasetKind::Weibull => {
            let model = WeibullModel::new().with_censoring_km(KmCurve::censoring(data.clusters())?);
            fit_all(&model, &data, methods, &mc)?
        }
        DatasetKind::Ar1 => methods
            .iter()
            .map(|&m| match ar1::fit_bounded(&data, m, &mc, ar1::default_bounds()) {
                Ok(f) => Ok(MethodFit { method: m, psi_names: f.psi_names.clone(), fit: Ok(f) }),
                Err(ar1::Ar1Error::Mpl(MplError::NoInformativeClusters)) => bail!("no informative clusters"),
                Err(ar1::Ar1Error::Mpl(e)) => {
                    Ok(MethodFit { method: m, psi_names: Ar1Model.psi_names(0), fit: Err(e) })
                }
                Err(e) => Err(e.into()),
            })
            .collect::<anyhow::Result<_>>()?,
    };

    let (text, status) = render(kind, &fits, args)?;
    output::write(args.out.as_deref(), &text)?;
    Ok(status)
}

fn fit_all<M: ClusteredModel>(
    model: &M,
    data: &ClusteredDataset,
    methods: &[Method],
    mc: &MonteCarloConfig,
) -> anyhow::Result<Vec<MethodFit>> {
    let problem = Problem::new(model, data)?;
    let profile = problem.fit_profile(None);
    Ok(methods
        .iter()
        .map(|&m| {
            let fit = match &profile {
                Ok(p) => problem.fit_from_profile(m, p, mc),
                Err(e) => Err(e.clone()),
            };
            MethodFit { method: m, psi_names: problem.psi_names(), fit }
        })
        .collect())
}

fn render(kind: DatasetKind, fits: &[MethodFit], args: &FitArgs) -> anyhow::Result<(String, Status)> {
    let mut text = String::from("method,parameter,estimate,std_error,z,p_value,ci_lo,ci_hi\n");
    let mut warnings = Vec::new();
    let mut dropped = 0;
    let row = |text: &mut String, method: Method, name: &str, est: f64, se: f64| -> anyhow::Result<()> {
        let w = WaldSummary::new(est, se, args.level)?;
        let cells = [w.estimate, w.std_error, w.z, w.p_value, w.ci_lo, w.ci_hi].map(format_number);
        text.push_str(&format!("{method},{name},{}\n", cells.join(",")));
        Ok(())
    };
    for MethodFit { method, psi_names, fit } in fits {
        let f = match fit {
            Ok(f) => f,
            Err(e) => {
                warnings.push(format!("{method}: fit failed: {e}"));
                let mut names = psi_names.clone();
                if kind == DatasetKind::Weibull {
                    names.extend((1..psi_names.len()).map(|j| format!("rr{j}")));
                }
                for name in &names {
                    row(&mut text, *method, name, f64::NAN, f64::NAN)?;
                }
                continue;
            }
        };
        dropped = f.dropped_clusters;
        for (j, name) in psi_names.iter().enumerate() {
            row(&mut text, *method, name, f.psi_hat[j], f.std_errors[j])?;
        }
        if kind == DatasetKind::Weibull {
            let xi = f.psi_hat[0];
            for j in 1..f.psi_hat.len() {
                let (rr, se) = match &f.covariance {
                    Some(c) => relative_risk(xi, f.psi_hat[j], c[(0, 0)], c[(j, j)], c[(0, j)]),
                    None => ((-xi * f.psi_hat[j]).exp(), f64::NAN),
                };
                row(&mut text, *method, &format!("rr{j}"), rr, se)?;
            }
        }
        if !f.converged {
            warnings.push(format!("{method}: optimizer did not converge"));
        }
        for &k in &f.bound_hits {
            let name = &f.psi_names[k];
            let note = if name == "gamma2" { " (separation: the estimate diverges)" } else { "" };
            warnings.push(format!("{method}: {name} at the search bound{note}"));
        }
        if f.bound_hits.is_empty() && f.std_errors.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            warnings.push(format!("{method}: Hessian not negative definite, standard errors unavailable"));
        }
    }
    for w in &warnings {
        text.push_str(&format!("# warning: {w}\n"));
    }
    text.push_str(&format!("# seed={},replicates={},dropped_clusters={dropped}\n", args.seed, args.replicates));
    let status = if warnings.is_empty() { Status::Clean } else { Status::Flagged };
    Ok((text, status))
}
