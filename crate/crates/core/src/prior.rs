//! Hyperparameter priors. Densities are evaluated for the log-transformed
//! parameter (the optimisation variable), so each includes the Jacobian
//! term `+ u` for `u = ln x`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::kernel::KernelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Prior {
    HalfNormal { scale: f64 },
    InverseGamma { shape: f64, scale: f64 },
}

impl Prior {
    /// Log density of `u = ln x` and its derivative in `u`.
    pub fn log_density_log(&self, u: f64) -> (f64, f64) {
        let x = u.exp();
        match *self {
            Prior::HalfNormal { scale } => {
                let s2 = scale * scale;
                let c = (2.0 / std::f64::consts::PI).ln() * 0.5 - scale.ln();
                (c - x * x / (2.0 * s2) + u, 1.0 - x * x / s2)
            }
            Prior::InverseGamma { shape, scale } => {
                let c = shape * scale.ln() - ln_gamma(shape);
                (c - shape * u - scale / x, -shape + scale / x)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::HalfNormal { scale } => {
                let z: f64 = rng.sample(StandardNormal);
                scale * z.abs()
            }
            Prior::InverseGamma { shape, scale } => {
                let g = Gamma::new(shape, 1.0 / scale).expect("valid gamma");
                1.0 / g.sample(rng)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperPriors {
    pub alpha: Prior,
    pub lengthscale: Prior,
    pub binary_corr: Prior,
}

impl Default for HyperPriors {
    fn default() -> Self {
        HyperPriors {
            alpha: Prior::HalfNormal { scale: 1.0 },
            lengthscale: Prior::InverseGamma {
                shape: 5.0,
                scale: 5.0,
            },
            binary_corr: Prior::HalfNormal { scale: 1.0 },
        }
    }
}

impl HyperPriors {
    /// Summed log prior over a log-parameter vector, with gradient added into `grad`.
    pub fn log_density(&self, theta: &[f64], n_continuous: usize, grad: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (q, &u) in theta.iter().enumerate() {
            let prior = if q == 0 {
                &self.alpha
            } else if q <= n_continuous {
                &self.lengthscale
            } else {
                &self.binary_corr
            };
            let (lp, d) = prior.log_density_log(u);
            total += lp;
            grad[q] += d;
        }
        total
    }

    pub fn sample<R: Rng + ?Sized>(&self, n_continuous: usize, n_binary: usize, rng: &mut R) -> KernelParams {
        // guard against the (measure-zero) exact zero draws of a half-normal
        let floor = |x: f64| x.max(1e-6);
        KernelParams {
            alpha2: floor(self.alpha.sample(rng)),
            lengthscales: (0..n_continuous).map(|_| floor(self.lengthscale.sample(rng))).collect(),
            binary_corr: (0..n_binary).map(|_| floor(self.binary_corr.sample(rng))).collect(),
        }
    }
}
