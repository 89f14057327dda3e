//! Empirical-versus-exact comparison of discrete distributions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Smallest expected count for a bin to enter the chi-square sum on its own.
const MIN_EXPECTED: f64 = 5.0;

pub const MIN_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    pub tv_distance: f64,
    /// Pearson statistic over bins with expected count >= 5, the rest pooled.
    pub gof_statistic: f64,
    pub gof_dof: usize,
    pub p_value: f64,
    pub samples: u64,
}

impl DistributionReport {
    pub fn from_counts(exact: &[f64], counts: &[u64]) -> Result<Self> {
        if exact.len() != counts.len() || exact.is_empty() {
            return Err(Error::Validation("exact and empirical supports differ".into()));
        }
        let total: f64 = exact.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("exact distribution sums to {total}")));
        }
        let samples: u64 = counts.iter().sum();
        if samples == 0 {
            return Err(Error::Validation("no samples".into()));
        }
        let ns = samples as f64;
        let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / ns).collect();
        let tv_distance = 0.5 * exact.iter().zip(&empirical).map(|(p, q)| (p - q).abs()).sum::<f64>();

        let mut stat = 0.0;
        let mut bins = 0usize;
        let (mut pooled_expected, mut pooled_observed) = (0.0, 0.0);
        for (&p, &c) in exact.iter().zip(counts) {
            let e = p * ns;
            if e >= MIN_EXPECTED {
                stat += (c as f64 - e).powi(2) / e;
                bins += 1;
            } else {
                pooled_expected += e;
                pooled_observed += c as f64;
            }
        }
        if pooled_expected > 0.0 {
            stat += (pooled_observed - pooled_expected).powi(2) / pooled_expected;
            bins += 1;
        } else if pooled_observed > 0.0 {
            stat = f64::INFINITY;
        }
        let dof = bins.saturating_sub(1).max(1);
        let p_value = if stat.is_finite() {
            ChiSquared::new(dof as f64).expect("positive dof").sf(stat)
        } else {
            0.0
        };
        Ok(Self {
            exact: exact.to_vec(),
            empirical,
            tv_distance,
            gof_statistic: stat,
            gof_dof: dof,
            p_value,
            samples,
        })
    }
}

/// Draw `n_samples` bin indices from `sampler` and compare them with `exact`.
pub fn compare_distribution<R, F>(exact: &[f64], mut sampler: F, n_samples: u64, rng: &mut R) -> Result<DistributionReport>
where
    F: FnMut(&mut R) -> usize,
{
    if n_samples < MIN_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    let mut counts = vec![0u64; exact.len()];
    for _ in 0..n_samples {
        let k = sampler(rng);
        if k >= counts.len() {
            return Err(Error::Validation(format!("sampled bin {k} outside the support")));
        }
        counts[k] += 1;
    }
    DistributionReport::from_counts(exact, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sgf::PanelDistribution;

    #[test]
    fn exact_sampler_passes_and_perturbed_fails() {
        let weights: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let dist = PanelDistribution::from_weights(weights).unwrap();
        let n = 200_000;
        let mut rng = stream(9, 0);
        let ok = compare_distribution(dist.probs(), |r| dist.sample(r), n, &mut rng).unwrap();
        assert!(ok.tv_distance <= 1.5 * (40.0 / n as f64).sqrt());
        assert!(ok.p_value > 1e-3);

        let mut wrong = dist.probs().to_vec();
        wrong[39] -= 0.05;
        wrong[0] += 0.05;
        let bad = compare_distribution(&wrong, |r| dist.sample(r), n, &mut rng).unwrap();
        assert!(bad.tv_distance > 0.04);
        assert!(bad.p_value < 1e-6);
    }

    #[test]
    fn too_few_samples_rejected() {
        let mut rng = stream(0, 0);
        assert!(compare_distribution(&[0.5, 0.5], |_| 0, 10, &mut rng).is_err());
    }
}
