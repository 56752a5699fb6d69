//! Emulator validation scores and the data behind minimum-implausibility,
//! optical-depth and NROY-histogram plots.

mod projection;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::InputPoint;
use crate::emulator::{expected_probability, sigmoid, ClassifierEmulator, HetGpEmulator, Prediction};
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub use projection::{
    grids_csv, histograms_csv, nroy_histograms, projection_grids, GridCell, NroyHistogram, ProjectionGrid,
    DEPTH_FLOOR, IMPLAUSIBILITY_CAP,
};

/// Normal-theory coverage of a mean +- 2 sd interval.
pub const NOMINAL_COVERAGE: f64 = 0.9545;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_validation: usize,
    pub n_within: usize,
    pub fraction: f64,
    pub nominal: f64,
}

/// Fraction of `y` inside `mean +- k_sd * sqrt(variance + noise)`.
pub fn coverage(preds: &[Prediction], noise: &[f64], y: &[f64], k_sd: f64, nominal: f64) -> Result<CoverageReport> {
    if y.is_empty() {
        return Err(Error::contract("validation set is empty"));
    }
    if preds.len() != y.len() || noise.len() != y.len() {
        return Err(Error::contract("predictions, noise and responses differ in length"));
    }
    let n_within = preds
        .iter()
        .zip(noise)
        .zip(y)
        .filter(|((p, d), y)| (**y - p.mean).abs() <= k_sd * (p.variance + **d).sqrt())
        .count();
    Ok(CoverageReport {
        n_validation: y.len(),
        n_within,
        fraction: n_within as f64 / y.len() as f64,
        nominal,
    })
}

/// Interval coverage of single-replicate responses under the energy
/// emulator, counting both the mean uncertainty and the intrinsic noise.
pub fn interval_coverage(em: &HetGpEmulator, validation: &[(InputPoint, f64)], k_sd: f64) -> Result<CoverageReport> {
    if validation.is_empty() {
        return Err(Error::contract("validation set is empty"));
    }
    let rows: Vec<f64> = validation.iter().flat_map(|(x, _)| x.to_row()).collect();
    let preds = em.predict_mean_rows(&rows);
    let noise = em.noise_variance_rows(&rows);
    let y: Vec<f64> = validation.iter().map(|(_, y)| *y).collect();
    coverage(&preds, &noise, &y, k_sd, NOMINAL_COVERAGE)
}

/// Two-category ranked probability score, i.e. the Brier score.
pub fn rps_binary(probs: &[f64], outcomes: &[bool]) -> Result<f64> {
    if probs.len() != outcomes.len() {
        return Err(Error::contract(format!(
            "{} probabilities for {} outcomes",
            probs.len(),
            outcomes.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::contract("no forecasts to score"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::contract(format!("probability {p} outside [0, 1]")));
    }
    let total: f64 = probs
        .iter()
        .zip(outcomes)
        .map(|(p, &y)| (p - if y { 1.0 } else { 0.0 }).powi(2))
        .sum();
    Ok(total / probs.len() as f64)
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpsReference {
    pub scores: Vec<f64>,
    pub quantile_95: f64,
}

/// Scores of hypothetical datasets drawn from the predictive distribution:
/// latent values from each marginal, then Bernoulli outcomes, each scored
/// against the predictive probabilities.
pub fn rps_reference_from(preds: &[Prediction], n_samples: usize, seed: u64) -> Result<RpsReference> {
    if preds.is_empty() || n_samples == 0 {
        return Err(Error::contract("reference distribution needs inputs and samples"));
    }
    let probs: Vec<f64> = preds.iter().map(expected_probability).collect();
    let mut rng = rng_from(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut outcomes = vec![false; preds.len()];
    let scores = (0..n_samples)
        .map(|_| {
            for (o, p) in outcomes.iter_mut().zip(preds) {
                let f = p.mean + p.sd() * std.sample(&mut rng);
                *o = rng.random::<f64>() < sigmoid(f);
            }
            rps_binary(&probs, &outcomes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RpsReference {
        quantile_95: quantile(&scores, 0.95),
        scores,
    })
}

pub fn rps_reference(em: &ClassifierEmulator, inputs: &[InputPoint], n_samples: usize, seed: u64) -> Result<RpsReference> {
    let rows: Vec<f64> = inputs.iter().flat_map(InputPoint::to_row).collect();
    rps_reference_from(&em.predict_rows(&rows), n_samples, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpsReport {
    pub observed_score: f64,
    pub reference_quantile_95: f64,
    pub pass: bool,
}

/// Observed score of `validation` against the classifier, compared with its
/// own reference distribution.
pub fn rps_check(
    em: &ClassifierEmulator,
    validation: &[(InputPoint, bool)],
    n_samples: usize,
    seed: u64,
) -> Result<RpsReport> {
    if validation.is_empty() {
        return Err(Error::contract("validation set is empty"));
    }
    let rows: Vec<f64> = validation.iter().flat_map(|(x, _)| x.to_row()).collect();
    let preds = em.predict_rows(&rows);
    let probs: Vec<f64> = preds.iter().map(expected_probability).collect();
    let outcomes: Vec<bool> = validation.iter().map(|(_, y)| *y).collect();
    let observed_score = rps_binary(&probs, &outcomes)?;
    let reference = rps_reference_from(&preds, n_samples, seed)?;
    Ok(RpsReport {
        observed_score,
        reference_quantile_95: reference.quantile_95,
        pass: observed_score < reference.quantile_95,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rps_examples() {
        assert_eq!(rps_binary(&[1.0], &[true]).unwrap(), 0.0);
        assert_eq!(rps_binary(&[0.5; 4], &[true, false, false, true]).unwrap(), 0.25);
        assert!(rps_binary(&[0.5], &[true, false]).is_err());
        assert!(rps_binary(&[1.5], &[true]).is_err());
    }

    #[test]
    fn rps_is_proper() {
        // expected score q(1-p)^2 + (1-q)p^2 is smallest at p = q
        for q in [0.1, 0.35, 0.8] {
            let expected = |p: f64| q * (1.0 - p) * (1.0 - p) + (1.0 - q) * p * p;
            let best = (0..=100)
                .map(|k| k as f64 / 100.0)
                .min_by(|a, b| expected(*a).total_cmp(&expected(*b)))
                .unwrap();
            assert!((best - q).abs() < 0.011);
        }
    }

    #[test]
    fn degenerate_reference_is_zero() {
        let preds = vec![Prediction::new(60.0, 0.0); 5];
        let r = rps_reference_from(&preds, 50, 1).unwrap();
        assert!(r.scores.iter().all(|&s| s < 1e-20));
    }

    #[test]
    fn quantile_type7() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert!((quantile(&[1.0, 2.0, 3.0, 4.0], 0.95) - 3.85).abs() < 1e-12);
    }

    #[test]
    fn reported_coverage_counts() {
        let preds = vec![Prediction::new(0.0, 1.0); 400];
        let y: Vec<f64> = (0..400).map(|i| if i < 367 { 0.0 } else { 10.0 }).collect();
        let r = coverage(&preds, &[0.0; 400], &y, 2.0, NOMINAL_COVERAGE).unwrap();
        assert_eq!(r.n_within, 367);
        assert!((r.fraction - 0.9175).abs() < 1e-12);
        assert!(coverage(&[], &[], &[], 2.0, NOMINAL_COVERAGE).is_err());
    }
}
