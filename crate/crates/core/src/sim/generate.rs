use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use super::{LambdaGen, SimError};
use crate::data::{Cluster, ClusteredDataset};
use crate::models::binary::{BinarySimulator, Link};
use crate::models::weibull::{calibrate_censoring_rate, weibull_draw};

/// Mean and standard deviation of the binary covariates.
pub const BINARY_X_MEAN: f64 = -0.35;

/// A simulated dataset with the nuisance values that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: ClusteredDataset,
    pub lambda: Vec<f64>,
}

fn draw_lambda(gen: LambdaGen, x: &[f64], p: usize, rng: &mut ChaCha8Rng) -> f64 {
    match gen {
        LambdaGen::Normal { mean, var } => mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal),
        LambdaGen::CovariateMean => {
            let t = x.len() / p.max(1);
            let first: f64 = (0..t).map(|k| x[k * p]).sum();
            first / t as f64 + rng.sample::<f64, _>(StandardNormal)
        }
    }
}

/// Binary responses with covariates `x ~ N(−0.35, 1)` and missingness
/// `P(m = 1 | y, x) = expit(γ₁ᵀx + γ₂ y)`.
#[allow(clippy::too_many_arguments)]
pub fn binary_dataset(
    link: Link,
    beta: &[f64],
    gamma1: &[f64],
    gamma2: f64,
    lambda_gen: LambdaGen,
    n: usize,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Simulated {
    let p = beta.len();
    let x_dist = Normal::new(BINARY_X_MEAN, 1.0).expect("valid normal");
    let mut clusters = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..t * p).map(|_| x_dist.sample(rng)).collect();
        let l = draw_lambda(lambda_gen, &x, p, rng);
        let blank = Cluster::new((i + 1).to_string(), vec![None; t], x, vec![false; t], None);
        let (y, m) = BinarySimulator::draw(link, beta, l, gamma1, gamma2, &blank, rng);
        clusters.push(blank.with_outcomes(y, m));
        lambda.push(l);
    }
    Simulated { data: ClusteredDataset::new(clusters, p).expect("generated data are valid"), lambda }
}

/// Weibull failure times with exponential censoring calibrated to a
/// censored share `pc`. The first covariate is 0 for the first half of each
/// cluster and 1 for the second half; the others are standard normal.
pub fn survival_dataset(
    xi: f64,
    beta: &[f64],
    pc: f64,
    lambda_gen: LambdaGen,
    n: usize,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Simulated, SimError> {
    if !t.is_multiple_of(2) {
        return Err(SimError::OddClusterSize(t));
    }
    let p = beta.len();
    let mut blanks = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = vec![0.0; t * p];
        for u in 0..t {
            x[u * p] = if u < t / 2 { 0.0 } else { 1.0 };
            for j in 1..p {
                x[u * p + j] = rng.sample(StandardNormal);
            }
        }
        lambda.push(draw_lambda(lambda_gen, &x, p, rng));
        blanks.push(Cluster::new((i + 1).to_string(), vec![Some(1.0); t], x, vec![true; t], None));
    }
    let rate = calibrate_censoring_rate(xi, beta, &lambda, &blanks, pc)?;
    let cens = Exp::new(rate).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let clusters = blanks
        .iter()
        .zip(&lambda)
        .map(|(c, &l)| {
            let (mut y, mut d) = (Vec::with_capacity(t), Vec::with_capacity(t));
            for u in 0..t {
                let eta = (-(l + c.xb(u, beta))).exp();
                let failure = weibull_draw(xi, eta, rng);
                let censor: f64 = cens.sample(rng);
                // Exp draws can be exactly 0; keep times positive.
                let censor = censor.max(f64::MIN_POSITIVE);
                d.push(failure <= censor);
                y.push(Some(failure.min(censor)));
            }
            c.with_outcomes(y, d)
        })
        .collect();
    Ok(Simulated { data: ClusteredDataset::new(clusters, p).expect("generated data are valid"), lambda })
}

/// AR(1) panels started at `y_0 = 0`.
pub fn ar1_dataset(
    rho: f64,
    sigma2: f64,
    lambda_gen: LambdaGen,
    n: usize,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Simulated {
    let sigma = sigma2.sqrt();
    let mut clusters = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    for i in 0..n {
        let l = draw_lambda(lambda_gen, &[], 0, rng);
        let mut prev = 0.0;
        let y = (0..t)
            .map(|_| {
                prev = l + rho * prev + sigma * rng.sample::<f64, _>(StandardNormal);
                Some(prev)
            })
            .collect();
        clusters.push(Cluster::new((i + 1).to_string(), y, vec![], vec![false; t], Some(0.0)));
        lambda.push(l);
    }
    Simulated { data: ClusteredDataset::new(clusters, 0).expect("generated data are valid"), lambda }
}
