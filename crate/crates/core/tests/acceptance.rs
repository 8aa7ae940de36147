//! Reduced-scale replication of the reference simulation studies plus the
//! numerical property suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;

use mcmpl::data::Cluster;
use mcmpl::models::ar1::{self, Ar1Model};
use mcmpl::models::binary::{BinaryModel, Link, Mechanism};
use mcmpl::models::weibull::{self, KmCurve, WeibullModel};
use mcmpl::mpl::{mc_expectation_term, ClusteredModel, MonteCarloConfig, ReplicateBank};
use mcmpl::optim::{find_root_scalar, numerical_hessian, ScalarBounds, StepRule, Tolerances};
use mcmpl::sim::generate::survival_dataset;
use mcmpl::sim::{run_experiment, ExperimentResult, ExperimentSpec, LambdaGen, Metrics, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

const SEED: u64 = 20_190_601;
const TRIALS: usize = 500;
const REPLICATES: usize = 200;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, criterion: &str, what: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} [{criterion}] {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn bias(&mut self, criterion: &str, r: &ExperimentResult, method: &str, param: &str, lo: f64, hi: f64) {
        let m = metrics(r, method, param);
        let ok = m.is_some_and(|m| m.b >= lo && m.b <= hi);
        let b = m.map_or(f64::NAN, |m| m.b);
        self.check(
            criterion,
            &format!("{method} {param} bias"),
            ok,
            format!("B = {b:.4}, required [{lo:.3}, {hi:.3}]"),
        );
    }

    fn coverage(&mut self, criterion: &str, r: &ExperimentResult, method: &str, param: &str, lo: f64, hi: f64) {
        let m = metrics(r, method, param);
        let ok = m.is_some_and(|m| m.coverage >= lo && m.coverage <= hi);
        let c = m.map_or(f64::NAN, |m| m.coverage);
        self.check(
            criterion,
            &format!("{method} {param} coverage"),
            ok,
            format!("coverage = {c:.3}, required [{lo:.2}, {hi:.2}]"),
        );
    }
}

fn metrics<'a>(r: &'a ExperimentResult, method: &str, param: &str) -> Option<&'a Metrics> {
    r.row(method, param).and_then(|row| row.metrics.as_ref())
}

fn failed_note(r: &ExperimentResult) -> String {
    r.rows
        .iter()
        .map(|row| format!("{}/{}: {}", row.method, row.parameter, row.failed_trials))
        .collect::<Vec<_>>()
        .join(", ")
}

fn criterion_mcar(rep: &mut Report) {
    let model = ModelSpec::Binary {
        link: Link::Logit,
        mechanism: Mechanism::Mcar,
        beta: vec![1.0],
        gamma1: vec![2.5],
        gamma2: 0.0,
    };
    let r = run_experiment(&ExperimentSpec::new(model, 250, 10, TRIALS, REPLICATES, SEED)).unwrap();
    println!("  failed trials: {}", failed_note(&r));
    rep.bias("1", &r, "profile", "beta1", 0.215 - 0.03, 0.215 + 0.03);
    rep.coverage("1", &r, "profile", "beta1", 0.0, 0.70);
    rep.bias("1", &r, "mcmpl", "beta1", -0.03, 0.03);
    rep.coverage("1", &r, "mcmpl", "beta1", 0.91, 0.97);

    let diffs: Vec<f64> = r
        .trials
        .iter()
        .filter_map(|t| {
            let (e, m) = (t.method("mpl-exact")?, t.method("mcmpl")?);
            if e.failed || m.failed {
                return None;
            }
            Some((e.estimate("beta1")? - m.estimate("beta1")?).abs())
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    rep.check(
        "1",
        "mean |exact MPL - MCMPL|",
        mean < 0.01,
        format!("{mean:.5} over {} trials, required < 0.01", diffs.len()),
    );
}

fn criterion_mnar(rep: &mut Report) {
    let model = ModelSpec::Binary {
        link: Link::Logit,
        mechanism: Mechanism::Mnar,
        beta: vec![1.0],
        gamma1: vec![5.0],
        gamma2: 1.0,
    };
    let r = run_experiment(&ExperimentSpec::new(model, 100, 10, TRIALS, REPLICATES, SEED)).unwrap();
    println!("  failed trials: {}", failed_note(&r));
    rep.bias("2", &r, "mpl-exact-mcar", "beta1", -0.28, -0.17);
    rep.coverage("2", &r, "mpl-exact-mcar", "beta1", 0.0, 0.85);
    rep.bias("2", &r, "mcmpl", "beta1", -0.05, 0.05);
    rep.coverage("2", &r, "mcmpl", "beta1", 0.90, 0.97);
}

fn criterion_weibull(rep: &mut Report) {
    let model = ModelSpec::Weibull { xi: 1.5, beta: vec![-1.0, 1.0], pc: 0.2 };
    let r = run_experiment(&ExperimentSpec::new(model, 100, 6, TRIALS, REPLICATES, SEED)).unwrap();
    println!("  failed trials: {}", failed_note(&r));
    rep.bias("3", &r, "profile", "xi", 0.222 - 0.025, 0.222 + 0.025);
    rep.coverage("3", &r, "profile", "xi", 0.0, 0.15);
    rep.bias("3", &r, "mcmpl", "xi", -0.02, 0.02);
    rep.coverage("3", &r, "mcmpl", "xi", 0.92, 0.98);
    rep.bias("3", &r, "mcmpl", "rr2", -0.01, 0.01);
    rep.coverage("3", &r, "mcmpl", "rr2", 0.91, 0.97);
}

fn criterion_ar1(rep: &mut Report) {
    let model = ModelSpec::Ar1 { rho: 0.5, sigma2: 1.0 };
    let r = run_experiment(&ExperimentSpec::new(model, 250, 8, TRIALS, REPLICATES, SEED)).unwrap();
    println!("  failed trials: {}", failed_note(&r));
    rep.bias("4", &r, "profile", "rho", -0.114 - 0.012, -0.114 + 0.012);
    rep.coverage("4", &r, "profile", "rho", 0.0, 0.01);
    rep.bias("4", &r, "mcmpl", "rho", -0.01, 0.01);
    rep.coverage("4", &r, "mcmpl", "rho", 0.91, 0.97);
    rep.bias("4", &r, "profile", "sigma2", -0.147 - 0.015, -0.147 + 0.015);
    rep.bias("4", &r, "mcmpl", "sigma2", -0.015, 0.015);
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_binary_cluster(rng: &mut ChaCha8Rng, t: usize) -> Cluster {
    loop {
        let x: Vec<f64> = (0..t).map(|_| normal(rng)).collect();
        let m: Vec<bool> = (0..t).map(|_| rng.random::<f64>() < 0.3).collect();
        let y: Vec<Option<f64>> =
            m.iter().map(|&mi| if mi { None } else { Some(if rng.random::<bool>() { 1.0 } else { 0.0 }) }).collect();
        let c = Cluster::new("c", y, x, m, None);
        if BinaryModel::new(Link::Logit, Mechanism::Mcar).is_informative(&c) {
            return c;
        }
    }
}

fn random_survival_cluster(rng: &mut ChaCha8Rng, t: usize) -> Cluster {
    let exp = Exp::new(1.0).unwrap();
    let y: Vec<Option<f64>> = (0..t).map(|_| Some(exp.sample(rng) + 1e-3)).collect();
    let mut d: Vec<bool> = (0..t).map(|_| rng.random::<f64>() < 0.7).collect();
    d[0] = true;
    let x: Vec<f64> = (0..2 * t).map(|_| normal(rng)).collect();
    Cluster::new("c", y, x, d, None)
}

fn random_ar1_cluster(rng: &mut ChaCha8Rng, t: usize) -> Cluster {
    let y: Vec<Option<f64>> = (0..t).map(|_| Some(normal(rng))).collect();
    Cluster::new("c", y, vec![], vec![false; t], Some(normal(rng)))
}

/// Largest relative gap between the analytic observed information and the
/// negative finite-difference second derivative, and largest score at λ̂_ψ.
fn score_and_info_gaps<M: ClusteredModel>(model: &M, psi: &[f64], c: &Cluster) -> (f64, f64) {
    let lambda = model.constrained_nuisance(psi, c);
    let score = model.nuisance_score(psi, lambda, c).abs();
    let h = numerical_hessian(|l| model.cluster_loglik(psi, l[0], c), &[lambda], StepRule::HESSIAN).unwrap();
    let j = model.nuisance_obs_info(psi, lambda, c);
    (score, (j + h[(0, 0)]).abs() / j.abs())
}

fn criterion_properties(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let (mut max_score, mut max_info) = (0.0f64, 0.0f64);
    for k in 0..300 {
        let t = 2 + k % 9;
        let c = random_binary_cluster(&mut rng, t);
        for (model, psi) in [
            (BinaryModel::new(Link::Logit, Mechanism::Mcar), vec![normal(&mut rng)]),
            (BinaryModel::new(Link::Probit, Mechanism::Mcar), vec![normal(&mut rng)]),
            (
                BinaryModel::new(Link::Logit, Mechanism::Mnar),
                vec![normal(&mut rng), normal(&mut rng), normal(&mut rng)],
            ),
        ] {
            let (s, i) = score_and_info_gaps(&model, &psi, &c);
            max_score = max_score.max(s);
            max_info = max_info.max(i);
        }
        let c = random_survival_cluster(&mut rng, t);
        let psi = [0.5 + rng.random::<f64>() * 2.0, normal(&mut rng), normal(&mut rng)];
        let (s, i) = score_and_info_gaps(&WeibullModel::new(), &psi, &c);
        max_score = max_score.max(s);
        max_info = max_info.max(i);
        let c = random_ar1_cluster(&mut rng, t);
        let psi = [normal(&mut rng), 0.2 + rng.random::<f64>() * 3.0];
        let (s, i) = score_and_info_gaps(&Ar1Model, &psi, &c);
        max_score = max_score.max(s);
        max_info = max_info.max(i);
    }
    rep.check(
        "5",
        "score at constrained nuisance",
        max_score <= 1e-6,
        format!("max |score| = {max_score:.2e}, required <= 1e-6"),
    );
    rep.check(
        "5",
        "analytic j vs finite differences",
        max_info <= 1e-4,
        format!("max relative gap = {max_info:.2e}, required <= 1e-4"),
    );

    let (mut max_root, mut max_pl) = (0.0f64, 0.0f64);
    let wm = WeibullModel::new();
    for k in 0..1000 {
        let c = random_survival_cluster(&mut rng, 2 + k % 7);
        let psi = [0.5 + rng.random::<f64>() * 2.0, normal(&mut rng), normal(&mut rng)];
        let closed = weibull::constrained_nuisance_closed_form(psi[0], &psi[1..], &c).unwrap();
        let bracket = ScalarBounds::new(closed - 10.0, closed + 10.0).unwrap();
        let tol = Tolerances { x_tol: 1e-14, f_tol: 1e-300, ..Tolerances::scalar() };
        let root = find_root_scalar(|l| wm.nuisance_score(&psi, l, &c), bracket, &tol).unwrap();
        max_root = max_root.max((root - closed).abs());
        let others = random_survival_cluster(&mut rng, 3);
        let clusters = [c, others];
        let explicit = weibull::profile_loglik_explicit(psi[0], &psi[1..], &clusters).unwrap();
        let plug: f64 = clusters.iter().map(|c| wm.cluster_loglik(&psi, wm.constrained_nuisance(&psi, c), c)).sum();
        max_pl = max_pl.max((explicit - plug).abs());
    }
    rep.check(
        "5",
        "weibull closed-form nuisance vs numeric root",
        max_root <= 1e-10,
        format!("max gap = {max_root:.2e}, required <= 1e-10"),
    );
    rep.check(
        "5",
        "weibull explicit profile vs plug-in",
        max_pl <= 1e-10,
        format!("max gap = {max_pl:.2e}, required <= 1e-10"),
    );

    // Monte Carlo expectation at the fit is a mean of squares.
    let clusters: Vec<Cluster> = (0..20).map(|_| random_binary_cluster(&mut rng, 6)).collect();
    let mnar = BinaryModel::new(Link::Logit, Mechanism::Mnar);
    let psi_hat = [0.8, 1.5, 0.5];
    let lambda_hat: Vec<f64> = clusters.iter().map(|c| mnar.constrained_nuisance(&psi_hat, c)).collect();
    let bank = ReplicateBank::build(&mnar, &clusters, &psi_hat, &lambda_hat, &MonteCarloConfig::new(100, 3).unwrap());
    let at_hat = mc_expectation_term(&mnar, &clusters, &bank, &psi_hat);
    let nonneg = at_hat.iter().all(|v| *v >= 0.0);
    rep.check(
        "5",
        "MC expectation at the fit is nonnegative",
        nonneg,
        format!("min = {:.3e}", at_hat.iter().copied().fold(f64::INFINITY, f64::min)),
    );

    // Logistic, fully observed with negligible deletion: I = Σ π(1 − π).
    let x: Vec<f64> = (0..8).map(|k| 1.0 + 0.125 * k as f64).collect();
    let y: Vec<Option<f64>> = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0].iter().map(|v| Some(*v)).collect();
    let c = Cluster::new("c", y, x.clone(), vec![false; 8], None);
    let model = BinaryModel::new(Link::Logit, Mechanism::Mcar).with_missingness_gamma(vec![-40.0]);
    let (beta, lambda) = ([0.4], -0.3);
    let exact: f64 = x
        .iter()
        .map(|xi| {
            let p = 1.0 / (1.0 + (-(lambda + beta[0] * xi)).exp());
            p * (1.0 - p)
        })
        .sum();
    let r = 50_000;
    let bank = ReplicateBank::build_with(
        &model,
        std::slice::from_ref(&c),
        &beta,
        &[lambda],
        &MonteCarloConfig::new(r, 17).unwrap(),
        false,
    );
    let scores: Vec<f64> =
        bank.replicate_clusters(0).unwrap().iter().map(|rc| model.nuisance_score(&beta, lambda, rc).powi(2)).collect();
    let mc = scores.iter().sum::<f64>() / r as f64;
    let se = (scores.iter().map(|s| (s - mc).powi(2)).sum::<f64>() / (r - 1) as f64 / r as f64).sqrt();
    rep.check(
        "5",
        "logistic MC expectation vs sum pi(1-pi)",
        (mc - exact).abs() <= 3.0 * se,
        format!("MC {mc:.5}, exact {exact:.5}, 3 se = {:.5}", 3.0 * se),
    );

    let km = KmCurve::product_limit(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
    let by_hand = [(0.5, 1.0), (1.0, 2.0 / 3.0), (2.5, 1.0 / 3.0), (3.0, 0.0), (9.0, 0.0)];
    let km_ok = by_hand.iter().all(|(t, s)| (km.eval(*t) - s).abs() < 1e-15)
        && KmCurve::product_limit(&[1.0, 2.0], &[false, false]).unwrap().eval(5.0) == 1.0
        && KmCurve::censoring(&[Cluster::new("a", vec![Some(5.0), Some(3.0)], vec![], vec![false, true], None)])
            .unwrap()
            .eval(5.0)
            == 0.0;
    rep.check("5", "Kaplan-Meier hand-computed curves", km_ok, "3 reference curves".into());

    let mut max_id = 0.0f64;
    for _ in 0..100 {
        let clusters: Vec<Cluster> = (0..5).map(|_| random_ar1_cluster(&mut rng, 6)).collect();
        let ml = ar1::ols_fit(&clusters).unwrap();
        let rho = 3.0 * normal(&mut rng);
        for (c, l) in clusters.iter().zip(&ml.lambda) {
            let lag_mean = (c.initial.unwrap() + c.responses[..5].iter().map(|v| v.unwrap()).sum::<f64>()) / 6.0;
            let rhs = ar1::constrained_lambda(rho, c) - (ml.rho - rho) * lag_mean;
            max_id = max_id.max((l - rhs).abs());
        }
    }
    rep.check("5", "AR(1) nuisance identity", max_id <= 1e-12, format!("max gap = {max_id:.2e}, required <= 1e-12"));

    let spec = ExperimentSpec::new(
        ModelSpec::Binary {
            link: Link::Logit,
            mechanism: Mechanism::Mcar,
            beta: vec![1.0],
            gamma1: vec![2.5],
            gamma2: 0.0,
        },
        40,
        5,
        8,
        30,
        SEED,
    );
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&spec).unwrap().to_csv())
    };
    let (one, four) = (in_pool(1), in_pool(4));
    rep.check("5", "identical output across thread counts", one == four, format!("{} bytes", one.len()));

    // One dataset of 10^5 units; the rate is calibrated on this dataset.
    let sim = survival_dataset(1.5, &[-1.0, 1.0], 0.2, LambdaGen::Normal { mean: 0.5, var: 0.25 }, 25_000, 4, &mut rng)
        .unwrap();
    let clusters = sim.data.clusters();
    let censored = clusters.iter().flat_map(|c| c.indicators.iter()).filter(|d| !**d).count();
    let share = censored as f64 / sim.data.n_units() as f64;
    rep.check(
        "5",
        "censoring calibration reproduces Pc",
        (share - 0.2).abs() <= 0.01,
        format!("empirical {share:.4}, target 0.2"),
    );
}

fn main() -> ExitCode {
    let mut rep = Report { failures: 0 };
    println!("acceptance: S = {TRIALS}, R = {REPLICATES}, seed = {SEED}");
    criterion_properties(&mut rep);
    criterion_ar1(&mut rep);
    criterion_mcar(&mut rep);
    criterion_mnar(&mut rep);
    criterion_weibull(&mut rep);
    if rep.failures == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} acceptance check(s) failed", rep.failures);
        ExitCode::FAILURE
    }
}
