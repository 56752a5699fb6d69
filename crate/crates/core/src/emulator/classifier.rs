//! Latent-GP classifier with a logistic link, fitted by the Laplace
//! approximation. Replicated runs at one input are pooled into a binomial
//! count, which gives the same likelihood as separate Bernoulli terms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{
    multi_start, prior_starts, sigmoid, training_hash, FitSettings, LatentEmulator, Prediction, PREDICT_BLOCK,
};
use crate::design::InputPoint;
use crate::error::FitError;
use crate::kernel::KernelParams;
use crate::linalg::{cholesky_escalating, lower_inverse, Jitter};
use crate::prior::HyperPriors;
use crate::seed::derive_seed;

const NEWTON_MAX_ITER: usize = 100;

/// Training data pooled by unique input: `successes[i]` events out of
/// `trials[i]` runs at row `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierData {
    pub n_continuous: usize,
    pub dim: usize,
    pub rows: Vec<f64>,
    pub successes: Vec<f64>,
    pub trials: Vec<f64>,
}

impl ClassifierData {
    pub fn from_observations(obs: &[(InputPoint, bool)]) -> Result<Self, FitError> {
        let Some((first, _)) = obs.first() else {
            return Err(FitError::Data("no observations".into()));
        };
        let n_continuous = first.continuous.len();
        let dim = first.dim();
        let mut data = ClassifierData {
            n_continuous,
            dim,
            rows: Vec::new(),
            successes: Vec::new(),
            trials: Vec::new(),
        };
        let mut index = std::collections::HashMap::new();
        for (x, y) in obs {
            if x.dim() != dim || x.continuous.len() != n_continuous {
                return Err(FitError::Data("inconsistent input dimensions".into()));
            }
            let row = x.to_row();
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let i = *index.entry(key).or_insert_with(|| {
                data.rows.extend_from_slice(&row);
                data.successes.push(0.0);
                data.trials.push(0.0);
                data.trials.len() - 1
            });
            data.trials[i] += 1.0;
            if *y {
                data.successes[i] += 1.0;
            }
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_observations(&self) -> usize {
        self.trials.iter().sum::<f64>() as usize
    }

    fn n_binary(&self) -> usize {
        self.dim - self.n_continuous
    }

    fn log_likelihood(&self, f: &DVector<f64>) -> f64 {
        f.iter()
            .zip(self.successes.iter().zip(&self.trials))
            .map(|(&fi, (&k, &m))| k * fi - m * (fi.max(0.0) + (-fi.abs()).exp().ln_1p()))
            .sum()
    }
}

struct Mode {
    a: DVector<f64>,
    f: DVector<f64>,
    grad: DVector<f64>,
    sw: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_q: f64,
}

fn b_matrix(k: &DMatrix<f64>, sw: &DVector<f64>) -> DMatrix<f64> {
    let n = sw.len();
    DMatrix::from_fn(n, n, |i, j| sw[i] * k[(i, j)] * sw[j] + if i == j { 1.0 } else { 0.0 })
}

fn local_terms(data: &ClassifierData, f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = f.len();
    let mut grad = DVector::zeros(n);
    let mut w = DVector::zeros(n);
    for i in 0..n {
        let p = sigmoid(f[i]);
        grad[i] = data.successes[i] - data.trials[i] * p;
        w[i] = data.trials[i] * p * (1.0 - p);
    }
    (grad, w)
}

/// Newton iterations for the posterior mode, in the `a = K^{-1} f`
/// parameterisation with step halving on the objective.
fn find_mode(k: &DMatrix<f64>, data: &ClassifierData, warm: Option<&DVector<f64>>) -> Result<Mode, FitError> {
    let n = data.len();
    let mut a = warm.filter(|a| a.len() == n).cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut f = k * &a;
    let psi = |a: &DVector<f64>, f: &DVector<f64>| -0.5 * a.dot(f) + data.log_likelihood(f);
    let mut obj = psi(&a, &f);

    for _ in 0..NEWTON_MAX_ITER {
        let (grad, w) = local_terms(data, &f);
        let sw = w.map(f64::sqrt);
        let chol = b_matrix(k, &sw)
            .cholesky()
            .ok_or(FitError::Singular { jitter: 0.0 })?;
        let b = w.component_mul(&f) + &grad;
        let c = chol.solve(&sw.component_mul(&(k * &b)));
        let a_newton = b - sw.component_mul(&c);
        let dir = &a_newton - &a;

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let a_t = &a + &dir * step;
            let f_t = k * &a_t;
            let obj_t = psi(&a_t, &f_t);
            if obj_t >= obj {
                a = a_t;
                f = f_t;
                obj = obj_t;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let small = dir.amax() * step <= 1e-10 * (1.0 + a.amax());
        if !accepted || small {
            break;
        }
    }

    let (grad, w) = local_terms(data, &f);
    let sw = w.map(f64::sqrt);
    let chol = b_matrix(k, &sw)
        .cholesky()
        .ok_or(FitError::Singular { jitter: 0.0 })?;
    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum();
    let log_q = -0.5 * a.dot(&f) + data.log_likelihood(&f) - half_log_det;
    Ok(Mode {
        a,
        f,
        grad,
        sw,
        chol,
        log_q,
    })
}

fn prior_gram(params: &KernelParams, rows: &[f64], jitter: Jitter) -> Result<(DMatrix<f64>, f64), FitError> {
    // K itself is only factorised to confirm it is usable at this jitter
    let mut k = params.gram(rows, 0.0);
    let (_, used) = cholesky_escalating(jitter, |j| {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += j * params.alpha2;
        }
        m
    })?;
    for i in 0..k.nrows() {
        k[(i, i)] += used * params.alpha2;
    }
    Ok((k, used))
}

/// Approximate log marginal likelihood plus log prior, and its gradient in
/// the log-parameters.
fn log_posterior_impl(
    data: &ClassifierData,
    theta: &[f64],
    priors: &HyperPriors,
    jitter: Jitter,
    warm: Option<&DVector<f64>>,
) -> Result<(f64, Vec<f64>, DVector<f64>), FitError> {
    let params = KernelParams::from_log(theta, data.n_continuous);
    let (k, used) = prior_gram(&params, &data.rows, jitter)?;
    let mode = find_mode(&k, data, warm)?;
    let n = data.len();

    let linv = lower_inverse(&mode.chol.l());
    let binv = linv.tr_mul(&linv);
    let r = DMatrix::from_fn(n, n, |i, j| mode.sw[i] * binv[(i, j)] * mode.sw[j]);
    let mut swk = k.clone();
    for i in 0..n {
        swk.row_mut(i).scale_mut(mode.sw[i]);
    }
    let c = &linv * swk;
    let mut s2 = DVector::zeros(n);
    for i in 0..n {
        let p = sigmoid(mode.f[i]);
        let third = -data.trials[i] * p * (1.0 - p) * (1.0 - 2.0 * p);
        s2[i] = 0.5 * (k[(i, i)] - c.column(i).norm_squared()) * third;
    }

    let np = theta.len();
    let mut explicit = vec![0.0; np];
    let mut bvecs = vec![DVector::<f64>::zeros(n); np];
    params.for_each_pair(&data.rows, used, |i, j, _, dk| {
        let sym = if i == j { 1.0 } else { 2.0 };
        let q = 0.5 * (mode.a[i] * mode.a[j] - r[(i, j)]) * sym;
        for p in 0..np {
            explicit[p] += q * dk[p];
            bvecs[p][i] += dk[p] * mode.grad[j];
            if i != j {
                bvecs[p][j] += dk[p] * mode.grad[i];
            }
        }
    });
    let mut grad = vec![0.0; np];
    for p in 0..np {
        let b = &bvecs[p];
        let s3 = b - &k * (&r * b);
        grad[p] = explicit[p] + s2.dot(&s3);
    }
    let lp = priors.log_density(theta, data.n_continuous, &mut grad);
    Ok((mode.log_q + lp, grad, mode.a))
}

/// Laplace log posterior of the log-parameters `theta` and its gradient.
pub fn classifier_log_posterior(
    data: &ClassifierData,
    theta: &[f64],
    priors: &HyperPriors,
    jitter: Jitter,
) -> Result<(f64, Vec<f64>), FitError> {
    log_posterior_impl(data, theta, priors, jitter, None).map(|(v, g, _)| (v, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSnapshot {
    pub params: KernelParams,
    pub jitter: f64,
    pub data: ClassifierData,
}

/// A fitted classifier: the Laplace posterior at the MAP hyperparameters.
#[derive(Clone, Debug)]
pub struct ClassifierEmulator {
    params: KernelParams,
    data: ClassifierData,
    jitter: f64,
    grad: DVector<f64>,
    sw: DVector<f64>,
    linv: DMatrix<f64>,
    mode: DVector<f64>,
    log_evidence: f64,
}

pub fn fit_classifier(
    obs: &[(InputPoint, bool)],
    priors: &HyperPriors,
    settings: &FitSettings,
) -> Result<ClassifierEmulator, FitError> {
    let data = ClassifierData::from_observations(obs)?;
    fit_classifier_data(data, priors, settings)
}

pub(crate) fn fit_classifier_data(
    data: ClassifierData,
    priors: &HyperPriors,
    settings: &FitSettings,
) -> Result<ClassifierEmulator, FitError> {
    if data.len() < 2 {
        return Err(FitError::Data("at least two distinct inputs are required".into()));
    }
    let (nc, nb) = (data.n_continuous, data.n_binary());
    let starts = prior_starts(priors, nc, nb, settings.restarts, derive_seed(settings.seed, "classifier-starts", 0));
    let jitter = settings.jitter();
    let (theta, _) = multi_start(starts, nc, nb, settings.max_iter, || {
        let mut warm: Option<DVector<f64>> = None;
        let data = &data;
        move |theta: &[f64]| match log_posterior_impl(data, theta, priors, jitter, warm.as_ref()) {
            Ok((v, g, a)) => {
                warm = Some(a);
                Some((-v, g.into_iter().map(|x| -x).collect()))
            }
            Err(_) => None,
        }
    })?;
    ClassifierEmulator::with_params(data, KernelParams::from_log(&theta, nc), jitter)
}

impl ClassifierEmulator {
    /// Builds the Laplace posterior for fixed hyperparameters.
    pub fn with_params(data: ClassifierData, params: KernelParams, jitter: Jitter) -> Result<Self, FitError> {
        if data.is_empty() {
            return Err(FitError::Data("no observations".into()));
        }
        if params.dim() != data.dim || params.n_continuous() != data.n_continuous {
            return Err(FitError::Data("parameter and data dimensions disagree".into()));
        }
        let (k, used) = prior_gram(&params, &data.rows, jitter)?;
        let mode = find_mode(&k, &data, None)?;
        let linv = lower_inverse(&mode.chol.l());
        let log_q = mode.log_q;
        Ok(ClassifierEmulator {
            params,
            data,
            jitter: used,
            grad: mode.grad,
            sw: mode.sw,
            linv,
            mode: mode.f,
            log_evidence: log_q,
        })
    }

    pub fn from_snapshot(s: ClassifierSnapshot) -> Result<Self, FitError> {
        let exact = Jitter {
            start: s.jitter,
            cap: s.jitter,
        };
        Self::with_params(s.data, s.params, exact)
    }

    pub fn snapshot(&self) -> ClassifierSnapshot {
        ClassifierSnapshot {
            params: self.params.clone(),
            jitter: self.jitter,
            data: self.data.clone(),
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn data(&self) -> &ClassifierData {
        &self.data
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Laplace approximation to the log marginal likelihood.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// Posterior mode of the latent logit at the training inputs.
    pub fn latent_mode(&self) -> &[f64] {
        self.mode.as_slice()
    }

    pub fn training_hash(&self) -> String {
        training_hash(&self.data.rows, &[&self.data.successes, &self.data.trials])
    }

    pub fn predict_logit(&self, x: &InputPoint) -> Prediction {
        self.predict_rows(&x.to_row())[0]
    }

    pub fn predict_rows(&self, test: &[f64]) -> Vec<Prediction> {
        let d = self.params.dim();
        let mut out = Vec::with_capacity(test.len() / d);
        for block in test.chunks(PREDICT_BLOCK * d) {
            let mut kstar = self.params.cross(&self.data.rows, block);
            let means = kstar.tr_mul(&self.grad);
            for i in 0..kstar.nrows() {
                kstar.row_mut(i).scale_mut(self.sw[i]);
            }
            let v = &self.linv * &kstar;
            for (j, col) in v.column_iter().enumerate() {
                let var = (self.params.alpha2 - col.norm_squared()).max(0.0);
                out.push(Prediction::new(means[j], var));
            }
        }
        out
    }
}

impl LatentEmulator for ClassifierEmulator {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn predict_rows(&self, rows: &[f64]) -> Vec<Prediction> {
        ClassifierEmulator::predict_rows(self, rows)
    }
}
