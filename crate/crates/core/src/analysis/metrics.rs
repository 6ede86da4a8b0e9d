use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;

/// z-value of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Which quantity "R²" denotes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Kind {
    /// Squared Pearson correlation between labels and predictions.
    #[default]
    Pearson,
    /// Coefficient of determination `1 - SS_res / SS_tot`.
    Determination,
}

impl R2Kind {
    pub fn compute(self, y: &[f64], y_hat: &[f64]) -> Result<f64> {
        match self {
            R2Kind::Pearson => r_squared(y, y_hat),
            R2Kind::Determination => coefficient_of_determination(y, y_hat),
        }
    }
}

fn check_lengths(y: &[f64], y_hat: &[f64], min: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} labels vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < min {
        return Err(Error::UndefinedMetric(format!("needs at least {min} samples")));
    }
    Ok(())
}

// Shifted by the first sample so constant inputs average exactly.
fn mean(v: &[f64]) -> f64 {
    let shift = v[0];
    shift + v.iter().map(|x| x - shift).sum::<f64>() / v.len() as f64
}

/// Squared Pearson correlation.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 2)?;
    let (my, mp) = (mean(y), mean(y_hat));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mp);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("zero variance in labels or predictions".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok((r * r).min(1.0))
}

pub fn coefficient_of_determination(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 2)?;
    let my = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("zero variance in labels".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    R2,
    Mae,
}

/// Mean over repetitions with the 95% CI half-width (`None` for a single
/// run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub mean: f64,
    pub ci_half_width: Option<f64>,
    pub n_repetitions: usize,
}

impl MetricReport {
    pub fn from_samples(metric: Metric, samples: &[f64]) -> MetricReport {
        let (mean, half) = mean_and_half_width(samples);
        MetricReport {
            metric,
            mean,
            ci_half_width: half,
            n_repetitions: samples.len(),
        }
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ci_half_width {
            Some(h) => write!(f, "{:.2}({:.2})", self.mean, h),
            None => write!(f, "{:.2}(n/a)", self.mean),
        }
    }
}

/// Sample mean and `1.96 * s / sqrt(n)` with the n-1 sample deviation.
pub fn mean_and_half_width(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let m = mean(samples);
    if n < 2 {
        return (m, None);
    }
    let var = samples.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, Some(Z_95 * var.sqrt() / (n as f64).sqrt()))
}

/// Runs `experiment` with seeds `base_seed..base_seed+n`, results in seed
/// order. The first failing seed (lowest) is reported.
pub fn run_repetitions<T, F>(n: usize, base_seed: u64, exec: Execution, experiment: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    exec.try_map(n, |i| experiment(base_seed + i as u64))
        .map_err(|(i, e)| Error::Repetition {
            seed: base_seed + i as u64,
            source: Box::new(e),
        })
}

/// Repeats an experiment yielding `(R², MAE)` and summarises both metrics.
pub fn repeated_protocol<F>(experiment: F, n: usize, base_seed: u64) -> Result<(MetricReport, MetricReport)>
where
    F: Fn(u64) -> Result<(f64, f64)> + Sync + Send,
{
    repeated_protocol_with(experiment, n, base_seed, Execution::default())
}

pub fn repeated_protocol_with<F>(
    experiment: F,
    n: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<(MetricReport, MetricReport)>
where
    F: Fn(u64) -> Result<(f64, f64)> + Sync + Send,
{
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 repetitions, got {n}")));
    }
    let runs = run_repetitions(n, base_seed, exec, experiment)?;
    let r2: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mae: Vec<f64> = runs.iter().map(|r| r.1).collect();
    Ok((
        MetricReport::from_samples(Metric::R2, &r2),
        MetricReport::from_samples(Metric::Mae, &mae),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_affine_predictions() {
        let y = [1.0, 4.0, 2.0, 8.0, 5.0];
        assert!((r_squared(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        let yh: Vec<f64> = y.iter().map(|v| -3.0 * v + 7.0).collect();
        assert!((r_squared(&y, &yh).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(coefficient_of_determination(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn zero_variance_is_undefined() {
        assert!(matches!(r_squared(&[1.0, 1.0], &[0.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::UndefinedMetric(_))));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 10.0], &[5.0, 5.0]).unwrap(), 5.0);
    }

    #[test]
    fn constant_experiment_has_zero_half_width() {
        let (r2, mae) = repeated_protocol(|_| Ok((0.8, 5.0)), 10, 0).unwrap();
        assert_eq!(r2.mean, 0.8);
        assert_eq!(r2.ci_half_width, Some(0.0));
        assert_eq!(mae.mean, 5.0);
        assert_eq!(r2.to_string(), "0.80(0.00)");
    }

    #[test]
    fn failing_repetition_names_seed() {
        let err = repeated_protocol(
            |s| if s == 13 { Err(Error::UndefinedMetric("x".into())) } else { Ok((1.0, 1.0)) },
            10,
            10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Repetition { seed: 13, .. }), "{err}");
        assert!(repeated_protocol(|_| Ok((1.0, 1.0)), 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn r2_invariant_under_positive_affine_rescaling(
            pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
            a in 0.1f64..10.0,
            b in -100.0f64..100.0,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = r_squared(&y, &yh) {
                let scaled: Vec<f64> = yh.iter().map(|v| a * v + b).collect();
                let r2 = r_squared(&y, &scaled).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
            }
        }

        #[test]
        fn mae_translation(y in proptest::collection::vec(-50.0f64..50.0, 1..40), c in -10.0f64..10.0) {
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            prop_assert!((mae(&y, &shifted).unwrap() - c.abs()).abs() < 1e-9);
            prop_assert_eq!(mae(&y, &y).unwrap(), 0.0);
        }
    }
}
