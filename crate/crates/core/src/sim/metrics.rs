use super::SimError;
use crate::mpl::fit::normal_quantile;

/// Summary of one estimator over simulation trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Mean bias.
    pub b: f64,
    /// Median bias.
    pub mb: f64,
    /// Standard deviation with divisor `S − 1`.
    pub sd: f64,
    /// Root mean squared error with divisor `S`.
    pub rmse: f64,
    /// Median absolute error.
    pub mae: f64,
    /// Mean standard error over SD.
    pub se_over_sd: f64,
    /// Share of Wald intervals covering the truth.
    pub coverage: f64,
    pub trials: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bias, spread and interval coverage of `estimates` around `truth`.
pub fn compute_metrics(estimates: &[f64], ses: &[f64], truth: f64, level: f64) -> Result<Metrics, SimError> {
    let s = estimates.len();
    if s < 2 {
        return Err(SimError::InsufficientTrials(s));
    }
    assert_eq!(s, ses.len(), "one standard error per estimate");
    let sf = s as f64;
    let mean = estimates.iter().sum::<f64>() / sf;
    let ss: f64 = estimates.iter().map(|e| (e - mean).powi(2)).sum();
    let sd = (ss / (sf - 1.0)).sqrt();
    let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / sf).sqrt();
    let errors: Vec<f64> = estimates.iter().map(|e| (e - truth).abs()).collect();
    let z = normal_quantile(0.5 * (1.0 + level));
    let covered = estimates.iter().zip(ses).filter(|(e, se)| (*e - truth).abs() <= z * **se).count();
    Ok(Metrics {
        b: mean - truth,
        mb: median(estimates) - truth,
        sd,
        rmse,
        mae: median(&errors),
        se_over_sd: ses.iter().sum::<f64>() / sf / sd,
        coverage: covered as f64 / sf,
        trials: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[1.0; 3], 2.0, 0.95).unwrap();
        assert_abs_diff_eq!(m.b, 0.0);
        assert_abs_diff_eq!(m.mb, 0.0);
        assert_abs_diff_eq!(m.sd, 1.0);
        assert_abs_diff_eq!(m.rmse, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(m.mae, 1.0);
    }

    #[test]
    fn constant_estimates() {
        let m = compute_metrics(&[0.5; 4], &[1.0; 4], 0.5, 0.95).unwrap();
        assert_eq!((m.b, m.mb, m.rmse, m.mae, m.coverage), (0.0, 0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(compute_metrics(&[0.0, 4.0], &[1.0, 1.0], 2.0, 0.95).unwrap().coverage, 0.0);
        let inf = compute_metrics(&[0.0, 4.0], &[f64::INFINITY; 2], 2.0, 0.95).unwrap();
        assert_eq!(inf.coverage, 1.0);
    }

    #[test]
    fn even_median() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn too_few_trials() {
        assert_eq!(compute_metrics(&[1.0], &[1.0], 0.0, 0.95), Err(SimError::InsufficientTrials(1)));
    }

    proptest! {
        #[test]
        fn rmse_decomposes(est in prop::collection::vec(-10.0f64..10.0, 2..40), truth in -5.0f64..5.0) {
            let ses = vec![1.0; est.len()];
            let m = compute_metrics(&est, &ses, truth, 0.95).unwrap();
            let s = est.len() as f64;
            let rhs = m.b * m.b + m.sd * m.sd * (s - 1.0) / s;
            prop_assert!((m.rmse * m.rmse - rhs).abs() <= 1e-12 * (1.0 + rhs));
            prop_assert!((0.0..=1.0).contains(&m.coverage));
            prop_assert!(m.sd >= 0.0 && m.mae >= 0.0);
        }
    }
}
