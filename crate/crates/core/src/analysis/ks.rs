use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par::Execution;

/// Terms of the alternating Kolmogorov series.
const SERIES_TERMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("KS test needs non-empty samples".into()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("KS test sample contains NaN".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Largest absolute gap between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    Ok(d)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.0 {
        // small-lambda theta form of the same distribution; the alternating
        // series needs many more than 100 terms here
        let mut cdf = 0.0;
        for k in 1..=SERIES_TERMS {
            let m = (2 * k - 1) as f64;
            cdf += (-(m * m) * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf
    } else {
        let mut sum = 0.0;
        for k in 1..=SERIES_TERMS {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (-2.0 * kf * kf * lambda * lambda).exp();
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

/// Two-sample KS test with the asymptotic p-value at effective size
/// `n1 n2 / (n1 + n2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(a, b)?;
    let (n1, n2) = (a.len(), b.len());
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
        n1,
        n2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureKsResult {
    pub feature: String,
    pub result: KsResult,
    /// `p < alpha`: the distributions differ, so the feature is a candidate
    /// for the SPECIFIC group.
    pub specific_candidate: bool,
}

pub fn ks_feature_screen(g0: &Dataset, g1: &Dataset, alpha: f64) -> Result<Vec<FeatureKsResult>> {
    ks_feature_screen_with(g0, g1, alpha, Execution::default())
}

pub fn ks_feature_screen_with(g0: &Dataset, g1: &Dataset, alpha: f64, exec: Execution) -> Result<Vec<FeatureKsResult>> {
    g0.schema().ensure_matches(g1.schema())?;
    let names: Vec<&str> = g0.schema().names().collect();
    exec.try_map(names.len(), |j| {
        let result = ks_two_sample(&g0.column(j), &g1.column(j))?;
        Ok(FeatureKsResult {
            feature: names[j].to_string(),
            specific_candidate: result.p_value < alpha,
            result,
        })
    })
    .map_err(|(_, e): (usize, Error)| e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [3.0, 1.0, 2.0, 2.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn disjoint_supports() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (100..120).map(f64::from).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-6);
    }

    // Brute force: ECDFs evaluated at all 8 pooled points.
    #[test]
    fn interleaved_samples() {
        let a = [1.0, 3.0, 5.0, 7.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        let ecdf = |s: &[f64], t: f64| s.iter().filter(|v| **v <= t).count() as f64 / s.len() as f64;
        let oracle = a
            .iter()
            .chain(&b)
            .map(|t| (ecdf(&a, *t) - ecdf(&b, *t)).abs())
            .fold(0.0, f64::max);
        assert_eq!(oracle, 0.25);
        assert_eq!(ks_statistic(&a, &b).unwrap(), oracle);
    }

    #[test]
    fn series_branches_agree_at_switch() {
        // both representations of the same function
        let lam: f64 = 1.0;
        let mut alt = 0.0;
        for k in 1..=100 {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            alt += s * (-2.0 * (k * k) as f64 * lam * lam).exp();
        }
        let just_below = kolmogorov_sf(1.0 - 1e-12);
        assert!((2.0 * alt - just_below).abs() < 1e-9);
    }

    // Reference values of the Kolmogorov survival function (scipy kstwobign.sf).
    #[test]
    fn kolmogorov_reference_values() {
        let table = [
            (0.3, 0.9999906941986655),
            (0.5, 0.9639452436648751),
            (0.8, 0.5441424115741981),
            (1.0, 0.26999967167735456),
            (1.36, 0.049485876755377876),
            (2.0, 0.0006709252557796953),
        ];
        for (lam, q) in table {
            assert!((kolmogorov_sf(lam) - q).abs() < 1e-12, "lambda {lam}");
        }
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }
}
