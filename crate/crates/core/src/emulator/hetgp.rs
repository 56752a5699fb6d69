//! Heteroscedastic GP regression. One GP models the mean response, a second
//! models the log noise variance; the two are refitted in turn until the
//! joint objective settles.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::regression::ExactGp;
use super::{multi_start, prior_starts, regression_log_posterior, training_hash, FitSettings, LatentEmulator, Prediction};
use crate::design::InputPoint;
use crate::error::FitError;
use crate::kernel::KernelParams;
use crate::linalg::Jitter;
use crate::prior::HyperPriors;
use crate::seed::derive_seed;

/// Floor on standardised noise variances.
const VARIANCE_FLOOR: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// `E[ln s2] - ln sigma2` for the mean of `n` squared N(0, sigma2) draws.
fn log_chi2_bias(n: f64) -> f64 {
    digamma(n / 2.0) - (n / 2.0).ln()
}

/// Responses pooled by unique input, standardised by the overall mean and sd.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HetGpData {
    pub n_continuous: usize,
    pub dim: usize,
    pub rows: Vec<f64>,
    /// Standardised replicate means.
    pub means: Vec<f64>,
    pub counts: Vec<f64>,
    /// Standardised within-input sums of squared deviations.
    pub within_ss: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
}

impl HetGpData {
    pub fn from_observations(obs: &[(InputPoint, f64)]) -> Result<Self, FitError> {
        let Some((first, _)) = obs.first() else {
            return Err(FitError::Data("no observations".into()));
        };
        if obs.iter().any(|(_, y)| !y.is_finite()) {
            return Err(FitError::Data("non-finite response".into()));
        }
        let n_continuous = first.continuous.len();
        let dim = first.dim();
        let n = obs.len() as f64;
        let y_mean = obs.iter().map(|(_, y)| y).sum::<f64>() / n;
        let var = obs.iter().map(|(_, y)| (y - y_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let y_sd = if var > 0.0 { var.sqrt() } else { 1.0 };

        let mut rows = Vec::new();
        let mut groups: Vec<Vec<f64>> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (x, y) in obs {
            if x.dim() != dim || x.continuous.len() != n_continuous {
                return Err(FitError::Data("inconsistent input dimensions".into()));
            }
            let row = x.to_row();
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let i = *index.entry(key).or_insert_with(|| {
                rows.extend_from_slice(&row);
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[i].push((y - y_mean) / y_sd);
        }
        let mut means = Vec::with_capacity(groups.len());
        let mut counts = Vec::with_capacity(groups.len());
        let mut within_ss = Vec::with_capacity(groups.len());
        for g in &groups {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            means.push(m);
            counts.push(g.len() as f64);
            within_ss.push(g.iter().map(|y| (y - m).powi(2)).sum());
        }
        Ok(HetGpData {
            n_continuous,
            dim,
            rows,
            means,
            counts,
            within_ss,
            y_mean,
            y_sd,
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn n_binary(&self) -> usize {
        self.dim - self.n_continuous
    }

    /// Sample variances where replicated, the pooled value elsewhere.
    fn initial_variances(&self) -> Vec<f64> {
        let (ss, dof) = self
            .within_ss
            .iter()
            .zip(&self.counts)
            .fold((0.0, 0.0), |(s, d), (ss, n)| (s + ss, d + n - 1.0));
        let pooled = if dof > 0.0 && ss > 0.0 { ss / dof } else { 0.1 };
        self.within_ss
            .iter()
            .zip(&self.counts)
            .map(|(ss, &n)| if n > 1.0 && *ss > 0.0 { ss / (n - 1.0) } else { pooled })
            .map(|v| v.max(VARIANCE_FLOOR))
            .collect()
    }

    fn mean_noise(&self, log_noise: &[f64]) -> Vec<f64> {
        log_noise.iter().zip(&self.counts).map(|(l, n)| l.exp() / n).collect()
    }

    /// Log density of the within-input scatter given the log noise variances.
    fn within_log_likelihood(&self, log_noise: &[f64]) -> f64 {
        self.within_ss
            .iter()
            .zip(&self.counts)
            .zip(log_noise)
            .map(|((ss, n), l)| -0.5 * (n - 1.0) * (LN_2PI + l) - 0.5 * n.ln() - ss / (2.0 * l.exp()))
            .sum()
    }
}

/// Mean-process log posterior for fixed log noise variances, with gradient.
pub fn hetgp_log_posterior(
    data: &HetGpData,
    log_noise: &[f64],
    theta: &[f64],
    priors: &HyperPriors,
    jitter: Jitter,
) -> Result<(f64, Vec<f64>), FitError> {
    let noise = data.mean_noise(log_noise);
    regression_log_posterior(&data.rows, &data.means, &noise, theta, data.n_continuous, priors, jitter)
}

fn fit_stage(
    rows: &[f64],
    y: &[f64],
    noise: &[f64],
    n_continuous: usize,
    n_binary: usize,
    starts: Vec<Vec<f64>>,
    priors: &HyperPriors,
    settings: &FitSettings,
) -> Result<(Vec<f64>, f64), FitError> {
    let jitter = settings.jitter();
    multi_start(starts, n_continuous, n_binary, settings.max_iter, || {
        move |theta: &[f64]| match regression_log_posterior(rows, y, noise, theta, n_continuous, priors, jitter) {
            Ok((v, g)) => Some((-v, g.into_iter().map(|x| -x).collect())),
            Err(_) => None,
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HetGpSnapshot {
    pub data: HetGpData,
    pub mean_params: KernelParams,
    pub mean_jitter: f64,
    pub logvar_params: KernelParams,
    pub logvar_jitter: f64,
    pub logvar_center: f64,
    pub logvar_targets: Vec<f64>,
    pub logvar_nugget: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct HetGpEmulator {
    data: HetGpData,
    mean_gp: ExactGp,
    logvar_gp: ExactGp,
    logvar_center: f64,
    logvar_targets: Vec<f64>,
    logvar_nugget: Vec<f64>,
    log_noise: Vec<f64>,
    iterations: usize,
}

pub fn fit_hetgp(
    obs: &[(InputPoint, f64)],
    priors: &HyperPriors,
    settings: &FitSettings,
) -> Result<HetGpEmulator, FitError> {
    let data = HetGpData::from_observations(obs)?;
    fit_hetgp_data(data, priors, settings)
}

pub(crate) fn fit_hetgp_data(
    data: HetGpData,
    priors: &HyperPriors,
    settings: &FitSettings,
) -> Result<HetGpEmulator, FitError> {
    if data.len() < 2 {
        return Err(FitError::Data("at least two distinct inputs are required".into()));
    }
    let (nc, nb) = (data.n_continuous, data.n_binary());
    let jitter = settings.jitter();
    let mut log_noise: Vec<f64> = data.initial_variances().iter().map(|v| v.ln()).collect();
    let mut theta_mean: Option<Vec<f64>> = None;
    let mut theta_var: Option<Vec<f64>> = None;
    let mut logvar_part = 0.0;
    let mut last_objective: Option<f64> = None;
    let mut state: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;

    for iter in 0..settings.het_max_iter.max(1) {
        iterations = iter + 1;
        let noise = data.mean_noise(&log_noise);
        let starts = match &theta_mean {
            Some(t) => vec![t.clone()],
            None => prior_starts(priors, nc, nb, settings.restarts, derive_seed(settings.seed, "hetgp-mean-starts", 0)),
        };
        let (theta, mean_post) = fit_stage(&data.rows, &data.means, &noise, nc, nb, starts, priors, settings)?;
        let objective = mean_post + data.within_log_likelihood(&log_noise) + logvar_part;
        theta_mean = Some(theta.clone());
        if let Some(prev) = last_objective {
            if (objective - prev).abs() < settings.het_tol {
                break;
            }
        }
        last_objective = Some(objective);

        let mean_gp = ExactGp::new(KernelParams::from_log(&theta, nc), data.rows.clone(), &data.means, &noise, jitter)?;
        let fitted = mean_gp.predict_rows(&data.rows);
        let mut targets = Vec::with_capacity(data.len());
        let mut nugget = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let n = data.counts[i];
            let resid = data.within_ss[i] / n + (data.means[i] - fitted[i].mean).powi(2) + fitted[i].variance;
            targets.push(resid.max(VARIANCE_FLOOR).ln() - log_chi2_bias(n));
            nugget.push(trigamma(n / 2.0));
        }
        let center = targets.iter().sum::<f64>() / targets.len() as f64;
        targets.iter_mut().for_each(|z| *z -= center);

        let starts = match &theta_var {
            Some(t) => vec![t.clone()],
            None => prior_starts(priors, nc, nb, settings.restarts, derive_seed(settings.seed, "hetgp-logvar-starts", 0)),
        };
        let (tv, var_post) = fit_stage(&data.rows, &targets, &nugget, nc, nb, starts, priors, settings)?;
        logvar_part = var_post;
        let logvar_gp = ExactGp::new(KernelParams::from_log(&tv, nc), data.rows.clone(), &targets, &nugget, jitter)?;
        log_noise = logvar_gp
            .predict_rows(&data.rows)
            .iter()
            .map(|p| (center + p.mean).max(VARIANCE_FLOOR.ln()))
            .collect();
        theta_var = Some(tv);
        state = Some((center, targets, nugget));
    }

    let (center, targets, nugget) = state.expect("at least one iteration runs");
    let mut em = HetGpEmulator::with_params(
        data,
        KernelParams::from_log(theta_mean.as_ref().expect("fitted"), nc),
        KernelParams::from_log(theta_var.as_ref().expect("fitted"), nc),
        center,
        targets,
        nugget,
        jitter,
        jitter,
    )?;
    em.iterations = iterations;
    Ok(em)
}

impl HetGpEmulator {
    /// Rebuilds both processes from fixed hyperparameters and log-variance
    /// targets; the noise at each input is the log-variance posterior mean.
    #[allow(clippy::too_many_arguments)]
    pub fn with_params(
        data: HetGpData,
        mean_params: KernelParams,
        logvar_params: KernelParams,
        logvar_center: f64,
        logvar_targets: Vec<f64>,
        logvar_nugget: Vec<f64>,
        mean_jitter: Jitter,
        logvar_jitter: Jitter,
    ) -> Result<Self, FitError> {
        if data.is_empty() || logvar_targets.len() != data.len() || logvar_nugget.len() != data.len() {
            return Err(FitError::Data("log-variance targets do not match the data".into()));
        }
        for p in [&mean_params, &logvar_params] {
            if p.dim() != data.dim || p.n_continuous() != data.n_continuous {
                return Err(FitError::Data("parameter and data dimensions disagree".into()));
            }
        }
        let logvar_gp = ExactGp::new(logvar_params, data.rows.clone(), &logvar_targets, &logvar_nugget, logvar_jitter)?;
        let log_noise: Vec<f64> = logvar_gp
            .predict_rows(&data.rows)
            .iter()
            .map(|p| (logvar_center + p.mean).max(VARIANCE_FLOOR.ln()))
            .collect();
        let noise = data.mean_noise(&log_noise);
        let mean_gp = ExactGp::new(mean_params, data.rows.clone(), &data.means, &noise, mean_jitter)?;
        Ok(HetGpEmulator {
            data,
            mean_gp,
            logvar_gp,
            logvar_center,
            logvar_targets,
            logvar_nugget,
            log_noise,
            iterations: 0,
        })
    }

    pub fn from_snapshot(s: HetGpSnapshot) -> Result<Self, FitError> {
        let exact = |j: f64| Jitter { start: j, cap: j };
        let mut em = Self::with_params(
            s.data,
            s.mean_params,
            s.logvar_params,
            s.logvar_center,
            s.logvar_targets,
            s.logvar_nugget,
            exact(s.mean_jitter),
            exact(s.logvar_jitter),
        )?;
        em.iterations = s.iterations;
        Ok(em)
    }

    pub fn snapshot(&self) -> HetGpSnapshot {
        HetGpSnapshot {
            data: self.data.clone(),
            mean_params: self.mean_gp.params().clone(),
            mean_jitter: self.mean_gp.jitter(),
            logvar_params: self.logvar_gp.params().clone(),
            logvar_jitter: self.logvar_gp.jitter(),
            logvar_center: self.logvar_center,
            logvar_targets: self.logvar_targets.clone(),
            logvar_nugget: self.logvar_nugget.clone(),
            iterations: self.iterations,
        }
    }

    pub fn data(&self) -> &HetGpData {
        &self.data
    }

    pub fn mean_params(&self) -> &KernelParams {
        self.mean_gp.params()
    }

    pub fn logvar_params(&self) -> &KernelParams {
        self.logvar_gp.params()
    }

    /// Outer iterations used by the fit.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Log noise variances (standardised scale) at the training inputs.
    pub fn training_log_noise(&self) -> &[f64] {
        &self.log_noise
    }

    pub fn training_hash(&self) -> String {
        training_hash(&self.data.rows, &[&self.data.means, &self.data.counts, &self.data.within_ss])
    }

    /// Latent mean on the standardised scale.
    pub fn predict_standardized_rows(&self, rows: &[f64]) -> Vec<Prediction> {
        self.mean_gp.predict_rows(rows)
    }

    pub fn predict_standardized(&self, x: &InputPoint) -> Prediction {
        self.mean_gp.predict_rows(&x.to_row())[0]
    }

    /// Latent mean response in native units. Excludes the noise variance.
    pub fn predict_mean_rows(&self, rows: &[f64]) -> Vec<Prediction> {
        let (m, s) = (self.data.y_mean, self.data.y_sd);
        self.mean_gp
            .predict_rows(rows)
            .into_iter()
            .map(|p| Prediction::new(m + s * p.mean, s * s * p.variance))
            .collect()
    }

    pub fn predict_mean_energy(&self, x: &InputPoint) -> Prediction {
        self.predict_mean_rows(&x.to_row())[0]
    }

    /// Replicate noise variance in native units at flat rows.
    pub fn noise_variance_rows(&self, rows: &[f64]) -> Vec<f64> {
        let s2 = self.data.y_sd * self.data.y_sd;
        self.logvar_gp
            .predict_rows(rows)
            .iter()
            .map(|p| s2 * (self.logvar_center + p.mean).max(VARIANCE_FLOOR.ln()).exp())
            .collect()
    }

    pub fn noise_variance(&self, x: &InputPoint) -> f64 {
        self.noise_variance_rows(&x.to_row())[0]
    }
}

impl LatentEmulator for HetGpEmulator {
    fn dim(&self) -> usize {
        self.data.dim
    }

    fn predict_rows(&self, rows: &[f64]) -> Vec<Prediction> {
        self.predict_mean_rows(rows)
    }
}
