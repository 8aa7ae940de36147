use anyhow::{bail, Context};
use mcmpl::data::ClusteredDataset;
use mcmpl::io::{format_number, DatasetKind};
use mcmpl::models::ar1::{self, Ar1Model};
use mcmpl::models::binary::{BinaryModel, Link, Mechanism};
use mcmpl::models::weibull::{KmCurve, WeibullModel};
use mcmpl::mpl::{ClusteredModel, Expectation, Method, MonteCarloConfig, Problem};
use mcmpl::sim::{mcar_model, parse_config, trial_dataset, ModelSpec};

use crate::{output, TraceArgs};

/// Points `lo + k step` up to `hi`.
pub fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("--grid must be lo:hi:step, got '{s}'");
    }
    let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("--grid: '{v}' is not a number"));
    let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && lo < hi) {
        bail!("empty grid '{s}': need finite lo < hi and step > 0");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    anyhow::ensure!(n < 10_000_000, "grid '{s}' has too many points");
    Ok((0..=n).map(|k| lo + step * k as f64).collect())
}

/// Shifts finite values so their maximum is 0; `-inf` cells become empty.
fn relative(values: &[f64]) -> Vec<String> {
    let top = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    values.iter().map(|v| if v.is_finite() { format_number(v - top) } else { String::new() }).collect()
}

struct Source {
    kind: DatasetKind,
    link: Link,
    mechanism: Mechanism,
    data: ClusteredDataset,
    mc: MonteCarloConfig,
}

fn source(args: &TraceArgs) -> anyhow::Result<Source> {
    let mut replicates = MonteCarloConfig::DEFAULT_REPLICATES;
    let mut seed = mcmpl::DEFAULT_SEED;
    let (kind, link, mechanism, data) = match (&args.data, &args.config) {
        (Some(path), _) => {
            let kind = args.model.model.context("--model is required with --data")?;
            (kind, args.model.link, args.model.mechanism, output::read(kind, path)?)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
            replicates = spec.replicates;
            seed = spec.seed;
            let data = trial_dataset(&spec, 0)?;
            match spec.model {
                ModelSpec::Binary { link, mechanism, .. } => (DatasetKind::Binary, link, mechanism, data),
                ModelSpec::Weibull { .. } => (DatasetKind::Weibull, Link::Logit, Mechanism::Mcar, data),
                ModelSpec::Ar1 { .. } => (DatasetKind::Ar1, Link::Logit, Mechanism::Mcar, data),
            }
        }
        (None, None) => bail!("one of --data or --config is required"),
    };
    let mc = MonteCarloConfig::new(args.replicates.unwrap_or(replicates), args.seed.unwrap_or(seed))?;
    Ok(Source { kind, link, mechanism, data, mc })
}

pub fn run(args: &TraceArgs) -> anyhow::Result<()> {
    let grid = parse_grid(&args.grid)?;
    let src = source(args)?;
    let (profile, mcmpl) = match src.kind {
        DatasetKind::Binary => match src.mechanism {
            Mechanism::Mcar => generic(&mcar_model(src.link, &src.data), &src, &args.param, &grid)?,
            Mechanism::Mnar => generic(&BinaryModel::new(src.link, Mechanism::Mnar), &src, &args.param, &grid)?,
        },
        DatasetKind::Weibull => {
            let model = WeibullModel::new().with_censoring_km(KmCurve::censoring(src.data.clusters())?);
            generic(&model, &src, &args.param, &grid)?
        }
        DatasetKind::Ar1 => {
            let k = component(&Ar1Model.psi_names(0), &args.param)?;
            let (clusters, _) = src.data.retain(|c| Ar1Model.is_informative(c));
            anyhow::ensure!(!clusters.is_empty(), "no informative clusters");
            let bounds = ar1::default_bounds();
            let curve = |method| -> anyhow::Result<Vec<f64>> {
                let (exp, divisor) = ar1::expectation_for(&clusters, method, &src.mc)?;
                Ok(ar1::trace(&clusters, &exp, divisor, k, &grid, bounds))
            };
            (curve(Method::Profile)?, curve(Method::Mcmpl)?)
        }
    };

    let mut text = String::from("param_value,rel_profile,rel_mcmpl\n");
    for ((x, p), m) in grid.iter().zip(relative(&profile)).zip(relative(&mcmpl)) {
        text.push_str(&format!("{},{p},{m}\n", format_number(*x)));
    }
    output::write(args.out.as_deref(), &text)
}

fn component(names: &[String], param: &str) -> anyhow::Result<usize> {
    names
        .iter()
        .position(|n| n.eq_ignore_ascii_case(param))
        .with_context(|| format!("unknown parameter '{param}' (expected one of {})", names.join(", ")))
}

/// Profile and MCMPL curves with the other components of ψ maximized out.
fn generic<M: ClusteredModel>(
    model: &M,
    src: &Source,
    param: &str,
    grid: &[f64],
) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let problem = Problem::new(model, &src.data)?;
    let k = component(&problem.psi_names(), param)?;
    let profile = problem.fit_profile(None)?;
    let exp = problem.expectation(Method::Mcmpl, &profile, &src.mc)?;
    let start = problem.maximize(Method::Mcmpl, &exp, &profile.psi_hat).map_or(profile.psi_hat.clone(), |f| f.psi_hat);
    Ok((
        problem.component_trace(&Expectation::None, &profile.psi_hat, k, grid),
        problem.component_trace(&exp, &start, k, grid),
    ))
}
