//! Gaussian-process emulators for the two simulator-derived quantities.
//!
//! * [`ClassifierEmulator`]: Bernoulli outcomes with a latent zero-mean GP for
//!   the logit probability, posterior by the Laplace approximation.
//! * [`HetGpEmulator`]: a GP for the mean response with a second GP for the
//!   log noise variance, fitted by alternating MAP stages.
//!
//! Both predict the mean and variance of a latent quantity (logit
//! probability, or the mean response), which is all the matcher needs.

mod classifier;
mod hetgp;
mod regression;

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::erfc;

use crate::error::FitError;
use crate::kernel::KernelParams;
use crate::linalg::Jitter;
use crate::optim::{self, LbfgsSettings};
use crate::prior::HyperPriors;

pub use classifier::{
    classifier_log_posterior, fit_classifier, ClassifierData, ClassifierEmulator, ClassifierSnapshot,
};
pub use hetgp::{fit_hetgp, hetgp_log_posterior, HetGpData, HetGpEmulator, HetGpSnapshot};
pub use regression::{regression_log_posterior, ExactGp};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn new(mean: f64, variance: f64) -> Self {
        Prediction { mean, variance }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn with_extra_variance(self, extra: f64) -> Self {
        Prediction {
            mean: self.mean,
            variance: self.variance + extra,
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability that the latent quantity lies below `threshold`.
/// A zero-variance prediction gives a 0/1 step (0.5 exactly at the threshold).
pub fn prob_below(pred: &Prediction, threshold: f64) -> f64 {
    if pred.variance > 0.0 {
        normal_cdf((threshold - pred.mean) / pred.sd())
    } else if pred.mean < threshold {
        1.0
    } else if pred.mean > threshold {
        0.0
    } else {
        0.5
    }
}

/// Criteria are treated as independent, so the joint probability is the product.
pub fn joint_probability(probs: &[f64]) -> f64 {
    probs.iter().product()
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Gauss-Hermite nodes and weights (physicists' convention) by Golub-Welsch.
fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 64;
        let mut j = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            j[(k, k - 1)] = b;
            j[(k - 1, k)] = b;
        }
        let eig = j.symmetric_eigen();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], sqrt_pi * eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    })
}

/// Predictive event probability `E[sigmoid(f)]` for `f ~ N(mean, variance)`.
pub fn expected_probability(pred: &Prediction) -> f64 {
    if pred.variance <= 0.0 {
        return sigmoid(pred.mean);
    }
    let (nodes, weights) = gauss_hermite();
    let s = (2.0 * pred.variance).sqrt();
    let total: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * sigmoid(pred.mean + s * x))
        .sum();
    total / std::f64::consts::PI.sqrt()
}

/// Anything that predicts a latent mean and variance at flat unit rows.
pub trait LatentEmulator: Send + Sync {
    fn dim(&self) -> usize;

    fn predict_rows(&self, rows: &[f64]) -> Vec<Prediction>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    /// Random restarts drawn from the priors.
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub jitter_start: f64,
    pub jitter_cap: f64,
    /// Outer iterations of the mean / log-variance alternation.
    pub het_max_iter: usize,
    pub het_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            restarts: 5,
            max_iter: 200,
            seed: 0,
            jitter_start: 1e-8,
            jitter_cap: 1e-2,
            het_max_iter: 20,
            het_tol: 1e-6,
        }
    }
}

impl FitSettings {
    pub(crate) fn jitter(&self) -> Jitter {
        Jitter {
            start: self.jitter_start,
            cap: self.jitter_cap,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub(crate) fn log_bounds(n_continuous: usize, n_binary: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![-12.0];
    let mut hi = vec![10.0];
    lo.extend(std::iter::repeat_n(-6.0, n_continuous));
    hi.extend(std::iter::repeat_n(6.0, n_continuous));
    lo.extend(std::iter::repeat_n(-12.0, n_binary));
    hi.extend(std::iter::repeat_n(6.0, n_binary));
    (lo, hi)
}

pub(crate) fn prior_starts(
    priors: &HyperPriors,
    n_continuous: usize,
    n_binary: usize,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count.max(1))
        .map(|_| priors.sample(n_continuous, n_binary, &mut rng).to_log())
        .collect()
}

/// Runs L-BFGS from every start and keeps the best converged result: highest
/// log posterior, ties broken by the lexicographically smallest parameters.
/// `make_objective` returns the negative log posterior for one start.
pub(crate) fn multi_start<O, M>(
    starts: Vec<Vec<f64>>,
    n_continuous: usize,
    n_binary: usize,
    max_iter: usize,
    make_objective: M,
) -> Result<(Vec<f64>, f64), FitError>
where
    O: optim::Objective,
    M: Fn() -> O + Sync,
{
    let (lo, hi) = log_bounds(n_continuous, n_binary);
    let mut settings = LbfgsSettings::with_bounds(lo, hi);
    settings.max_iter = max_iter;
    let outcomes: Vec<optim::Outcome> = starts
        .par_iter()
        .map(|x0| {
            let mut obj = make_objective();
            optim::minimize(&mut obj, x0, &settings)
        })
        .collect();

    let better = |a: &optim::Outcome, b: &optim::Outcome| {
        a.f < b.f
            || (a.f == b.f
                && a.x
                    .iter()
                    .zip(&b.x)
                    .find(|(x, y)| x != y)
                    .is_some_and(|(x, y)| x < y))
    };
    let pick = |filter: &dyn Fn(&optim::Outcome) -> bool| {
        outcomes
            .iter()
            .filter(|o| filter(o) && o.f.is_finite())
            .fold(None::<&optim::Outcome>, |best, o| match best {
                Some(b) if !better(o, b) => Some(b),
                _ => Some(o),
            })
    };
    if let Some(best) = pick(&|o| o.status.converged()) {
        log::debug!("best restart converged after {} iterations", best.iterations);
        return Ok((best.x.clone(), -best.f));
    }
    match pick(&|_| true) {
        Some(best) => Err(FitError::NotConverged {
            best: KernelParams::from_log(&best.x, n_continuous),
            log_posterior: -best.f,
        }),
        None => Err(FitError::NotConverged {
            best: KernelParams::from_log(&starts[0], n_continuous),
            log_posterior: f64::NEG_INFINITY,
        }),
    }
}

pub(crate) fn training_hash(rows: &[f64], columns: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for x in rows.iter().chain(columns.iter().flat_map(|c| c.iter())) {
        h.update(x.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Rows to predict per block; bounds the size of cross-covariance matrices.
pub(crate) const PREDICT_BLOCK: usize = 256;
