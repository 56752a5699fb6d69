//! Squared-exponential covariance over the continuous coordinates combined
//! with an exchangeable correlation over the binary ones:
//!
//! ```text
//! k(a, b) = alpha2 * exp(-sum_i (a_i - b_i)^2 / l_i^2 - sum_j phi_j * [a_j != b_j])
//! ```
//!
//! Hyperparameters are optimised on the log scale; the log-parameter vector
//! is `[ln alpha2, ln l_1.., ln phi_1..]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::InputPoint;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub alpha2: f64,
    pub lengthscales: Vec<f64>,
    pub binary_corr: Vec<f64>,
}

impl KernelParams {
    pub fn new(alpha2: f64, lengthscales: Vec<f64>, binary_corr: Vec<f64>) -> Result<Self> {
        let p = KernelParams {
            alpha2,
            lengthscales,
            binary_corr,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: &f64| x.is_finite() && *x > 0.0;
        if !positive(&self.alpha2) || !self.lengthscales.iter().all(positive) {
            return Err(Error::contract("alpha2 and lengthscales must be finite and > 0"));
        }
        if !self.binary_corr.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::contract("binary correlations must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn n_continuous(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn n_binary(&self) -> usize {
        self.binary_corr.len()
    }

    pub fn dim(&self) -> usize {
        self.n_continuous() + self.n_binary()
    }

    pub fn n_params(&self) -> usize {
        1 + self.dim()
    }

    pub fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.alpha2.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .chain(self.binary_corr.iter().map(|p| p.ln()))
            .collect()
    }

    pub fn from_log(theta: &[f64], n_continuous: usize) -> Self {
        KernelParams {
            alpha2: theta[0].exp(),
            lengthscales: theta[1..1 + n_continuous].iter().map(|x| x.exp()).collect(),
            binary_corr: theta[1 + n_continuous..].iter().map(|x| x.exp()).collect(),
        }
    }

    /// Correlation exponent for two flat rows (`[continuous.., binary..]`).
    #[inline]
    pub(crate) fn exponent(&self, inv_l2: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let nc = inv_l2.len();
        let mut s = 0.0;
        for i in 0..nc {
            let d = a[i] - b[i];
            s += d * d * inv_l2[i];
        }
        for (j, phi) in self.binary_corr.iter().enumerate() {
            if a[nc + j] != b[nc + j] {
                s += phi;
            }
        }
        s
    }

    pub(crate) fn inv_l2(&self) -> Vec<f64> {
        self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect()
    }

    pub fn eval_rows(&self, a: &[f64], b: &[f64]) -> f64 {
        self.alpha2 * (-self.exponent(&self.inv_l2(), a, b)).exp()
    }

    /// Gram matrix over flat rows with `jitter * alpha2` added on the diagonal.
    pub fn gram(&self, rows: &[f64], jitter: f64) -> DMatrix<f64> {
        let d = self.dim();
        let n = rows.len() / d;
        let inv_l2 = self.inv_l2();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            let a = &rows[i * d..(i + 1) * d];
            k[(i, i)] = self.alpha2 * (1.0 + jitter);
            for j in 0..i {
                let v = self.alpha2 * (-self.exponent(&inv_l2, a, &rows[j * d..(j + 1) * d])).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-covariance `K(train, test)` as an `n_train x n_test` matrix.
    pub fn cross(&self, train: &[f64], test: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let n = train.len() / d;
        let m = test.len() / d;
        let inv_l2 = self.inv_l2();
        DMatrix::from_fn(n, m, |i, j| {
            self.alpha2
                * (-self.exponent(&inv_l2, &train[i * d..(i + 1) * d], &test[j * d..(j + 1) * d]))
                    .exp()
        })
    }

    /// Visits every unordered training pair `i >= j` with the covariance value
    /// and its derivatives with respect to the log-parameters. Diagonal pairs
    /// include the jitter term so that `dK/d ln alpha2 == K` holds exactly.
    pub(crate) fn for_each_pair<F>(&self, rows: &[f64], jitter: f64, mut visit: F)
    where
        F: FnMut(usize, usize, f64, &[f64]),
    {
        let d = self.dim();
        let nc = self.n_continuous();
        let n = rows.len() / d;
        let inv_l2 = self.inv_l2();
        let mut dk = vec![0.0; self.n_params()];
        for i in 0..n {
            let a = &rows[i * d..(i + 1) * d];
            dk.iter_mut().for_each(|x| *x = 0.0);
            let kii = self.alpha2 * (1.0 + jitter);
            dk[0] = kii;
            visit(i, i, kii, &dk);
            for j in 0..i {
                let b = &rows[j * d..(j + 1) * d];
                let kij = self.alpha2 * (-self.exponent(&inv_l2, a, b)).exp();
                dk[0] = kij;
                for c in 0..nc {
                    let diff = a[c] - b[c];
                    dk[1 + c] = kij * 2.0 * diff * diff * inv_l2[c];
                }
                for (q, phi) in self.binary_corr.iter().enumerate() {
                    dk[1 + nc + q] = if a[nc + q] != b[nc + q] { -kij * phi } else { 0.0 };
                }
                visit(i, j, kij, &dk);
            }
        }
    }
}

/// Covariance between two points; dimensions must match the parameters.
pub fn kernel_eval(params: &KernelParams, a: &InputPoint, b: &InputPoint) -> Result<f64> {
    for p in [a, b] {
        if p.continuous.len() != params.n_continuous() || p.binary.len() != params.n_binary() {
            return Err(Error::contract(format!(
                "point has {}+{} coordinates, kernel expects {}+{}",
                p.continuous.len(),
                p.binary.len(),
                params.n_continuous(),
                params.n_binary()
            )));
        }
    }
    Ok(params.eval_rows(&a.to_row(), &b.to_row()))
}
