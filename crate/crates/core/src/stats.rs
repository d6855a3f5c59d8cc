//! Small statistics helpers: means with standard errors, intervals and
//! empirical total variation distance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(LabError::Degenerate("no samples".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self { mean, stderr: (var / n as f64).sqrt(), n })
    }

    /// Self-normalized importance-weighted mean. The standard error uses
    /// the delta method; `n` reports the effective sample size.
    pub fn weighted(values: &[f64], log_weights: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() != log_weights.len() {
            return Err(LabError::Degenerate("weighted estimate needs matching samples".into()));
        }
        let top = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_weights.iter().map(|lw| (lw - top).exp()).collect();
        let sw: f64 = w.iter().sum();
        let mean = w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / sw;
        let var = w.iter().zip(values).map(|(w, v)| (w / sw).powi(2) * (v - mean).powi(2)).sum::<f64>();
        let ess = sw * sw / w.iter().map(|w| w * w).sum::<f64>();
        Ok(Self { mean, stderr: var.sqrt(), n: ess.floor() as usize })
    }

    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.stderr, self.mean + z * self.stderr)
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided critical value for `m` simultaneous tests at family level
/// `alpha`, never below 3.
pub fn bonferroni_z(alpha: f64, m: usize) -> f64 {
    normal_quantile(1.0 - alpha / (2.0 * m.max(1) as f64)).max(3.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn histogram<K: Ord + Clone>(xs: &[K]) -> BTreeMap<K, usize> {
    let mut h = BTreeMap::new();
    for x in xs {
        *h.entry(x.clone()).or_insert(0) += 1;
    }
    h
}

/// Total variation distance between two empirical distributions.
pub fn tvd<K: Ord + Clone>(a: &[K], b: &[K]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let ha = histogram(a);
    let hb = histogram(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let keys: std::collections::BTreeSet<&K> = ha.keys().chain(hb.keys()).collect();
    let mut total = 0.0;
    for k in keys {
        let ca = ha.get(k).copied().unwrap_or(0) as f64 / na;
        let cb = hb.get(k).copied().unwrap_or(0) as f64 / nb;
        total += (ca - cb).abs();
    }
    0.5 * total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvdReport {
    pub tvd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean TVD between random splits of the pooled sample.
    pub null_mean: f64,
    pub null_q95: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Empirical TVD with a percentile bootstrap interval and a permutation
/// reference level for the finite-sample bias.
pub fn tvd_with_uncertainty<K: Ord + Clone, R: Rng + ?Sized>(
    a: &[K],
    b: &[K],
    resamples: usize,
    rng: &mut R,
) -> TvdReport {
    let point = tvd(a, b);
    let mut boot = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let ra: Vec<K> = (0..a.len()).map(|_| a[rng.random_range(0..a.len())].clone()).collect();
        let rb: Vec<K> = (0..b.len()).map(|_| b[rng.random_range(0..b.len())].clone()).collect();
        boot.push(tvd(&ra, &rb));
    }
    let mut pooled: Vec<K> = a.iter().chain(b).cloned().collect();
    let mut null = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        pooled.shuffle(rng);
        let (x, y) = pooled.split_at(a.len());
        null.push(tvd(x, y));
    }
    let q = |v: &mut Vec<f64>, p: f64| {
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v[((v.len() - 1) as f64 * p).round() as usize]
    };
    TvdReport {
        tvd: point,
        ci_lo: q(&mut boot, 0.025),
        ci_hi: q(&mut boot, 0.975),
        null_mean: if null.is_empty() { f64::NAN } else { null.iter().sum::<f64>() / null.len() as f64 },
        null_q95: q(&mut null, 0.95),
        n_a: a.len(),
        n_b: b.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tvd_basics() {
        assert_eq!(tvd(&[1, 1, 2, 2], &[1, 2]), 0.0);
        assert_eq!(tvd(&[1, 1], &[2, 2]), 1.0);
        assert!((tvd(&[1, 1, 1, 2], &[1, 2, 2, 2]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn estimate_of_constant() {
        let e = Estimate::from_values(&[0.25; 10]).unwrap();
        assert_eq!(e.mean, 0.25);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        assert!(bonferroni_z(0.0027, 1) >= 3.0);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
    }
}
