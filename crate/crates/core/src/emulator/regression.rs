//! Exact GP regression with known per-point noise variances. Shared by the
//! mean and log-variance processes of the heteroscedastic emulator.

use nalgebra::{DMatrix, DVector};

use super::{Prediction, PREDICT_BLOCK};
use crate::error::FitError;
use crate::kernel::KernelParams;
use crate::linalg::{cholesky_escalating, log_det_from_cholesky, lower_inverse, Jitter};
use crate::prior::HyperPriors;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A factorised exact GP: `y ~ N(0, K + jitter*alpha2*I + diag(noise))`.
#[derive(Clone, Debug)]
pub struct ExactGp {
    params: KernelParams,
    rows: Vec<f64>,
    jitter: f64,
    linv: DMatrix<f64>,
    weights: DVector<f64>,
    log_marginal: f64,
}

impl ExactGp {
    pub fn new(
        params: KernelParams,
        rows: Vec<f64>,
        y: &[f64],
        noise: &[f64],
        jitter: Jitter,
    ) -> Result<Self, FitError> {
        let n = y.len();
        if rows.len() != n * params.dim() || noise.len() != n {
            return Err(FitError::Data("row, response and noise lengths disagree".into()));
        }
        let k = params.gram(&rows, 0.0);
        let (chol, used) = cholesky_escalating(jitter, |j| {
            let mut m = k.clone();
            for i in 0..n {
                m[(i, i)] += j * params.alpha2 + noise[i];
            }
            m
        })?;
        let y = DVector::from_column_slice(y);
        let weights = chol.solve(&y);
        let log_marginal =
            -0.5 * y.dot(&weights) - 0.5 * log_det_from_cholesky(&chol) - 0.5 * n as f64 * LN_2PI;
        let linv = lower_inverse(&chol.l());
        Ok(ExactGp {
            params,
            rows,
            jitter: used,
            linv,
            weights,
            log_marginal,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Posterior mean and variance of the latent function at flat rows.
    pub fn predict_rows(&self, test: &[f64]) -> Vec<Prediction> {
        let d = self.params.dim();
        let mut out = Vec::with_capacity(test.len() / d);
        for block in test.chunks(PREDICT_BLOCK * d) {
            let kstar = self.params.cross(&self.rows, block);
            let means = kstar.tr_mul(&self.weights);
            let v = &self.linv * &kstar;
            for (j, col) in v.column_iter().enumerate() {
                let var = (self.params.alpha2 - col.norm_squared()).max(self.params.alpha2 * 1e-14);
                out.push(Prediction::new(means[j], var));
            }
        }
        out
    }
}

/// Log posterior (log marginal likelihood plus log prior over the
/// log-parameters) and its gradient in the log-parameters.
pub fn regression_log_posterior(
    rows: &[f64],
    y: &[f64],
    noise: &[f64],
    theta: &[f64],
    n_continuous: usize,
    priors: &HyperPriors,
    jitter: Jitter,
) -> Result<(f64, Vec<f64>), FitError> {
    let params = KernelParams::from_log(theta, n_continuous);
    let n = y.len();
    let k = params.gram(rows, 0.0);
    let (chol, used) = cholesky_escalating(jitter, |j| {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += j * params.alpha2 + noise[i];
        }
        m
    })?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det_from_cholesky(&chol) - 0.5 * n as f64 * LN_2PI;

    let linv = lower_inverse(&chol.l());
    let kinv = linv.tr_mul(&linv);
    let mut grad = vec![0.0; theta.len()];
    params.for_each_pair(rows, used, |i, j, _, dk| {
        let q = alpha[i] * alpha[j] - kinv[(i, j)];
        let w = if i == j { 0.5 * q } else { q };
        for (g, d) in grad.iter_mut().zip(dk) {
            *g += w * d;
        }
    });
    let lp = priors.log_density(theta, n_continuous, &mut grad);
    Ok((lml + lp, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = vec![0.1, 0.0, 0.35, 1.0, 0.5, 0.0, 0.8, 1.0, 0.95, 0.0];
        let y = vec![0.3, -0.2, 0.9, 0.1, -0.4];
        let noise = vec![0.01, 0.02, 0.01, 0.05, 0.01];
        let priors = HyperPriors::default();
        let theta = vec![0.2, -0.7, 0.4];
        let (_, g) = regression_log_posterior(&rows, &y, &noise, &theta, 1, &priors, Jitter::default()).unwrap();
        for q in 0..3 {
            let h = 1e-5;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[q] += h;
            tm[q] -= h;
            let fp = regression_log_posterior(&rows, &y, &noise, &tp, 1, &priors, Jitter::default()).unwrap().0;
            let fm = regression_log_posterior(&rows, &y, &noise, &tm, 1, &priors, Jitter::default()).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[q]).abs() < 1e-6 * fd.abs().max(1.0), "param {q}: {fd} vs {}", g[q]);
        }
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let params = KernelParams::new(1.3, vec![0.2], vec![]).unwrap();
        let gp = ExactGp::new(params, vec![0.1, 0.2, 0.3], &[1.0, 2.0, 1.5], &[1e-4; 3], Jitter::default()).unwrap();
        let p = gp.predict_rows(&[50.0])[0];
        assert!(p.mean.abs() < 1e-12);
        assert!((p.variance - 1.3).abs() < 1e-12);
    }
}
