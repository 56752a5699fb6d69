use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::FitError;

/// Relative jitter schedule: start, growth factor, cap (all relative to alpha2).
#[derive(Clone, Copy, Debug)]
pub struct Jitter {
    pub start: f64,
    pub cap: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            start: 1e-8,
            cap: 1e-2,
        }
    }
}

/// Factorises the matrix built by `build(jitter)`, escalating the jitter by
/// a factor of ten on failure. Returns the factor and the jitter used.
pub fn cholesky_escalating<F>(jitter: Jitter, mut build: F) -> Result<(Cholesky<f64, Dyn>, f64), FitError>
where
    F: FnMut(f64) -> DMatrix<f64>,
{
    let mut j = jitter.start;
    loop {
        let m = build(j);
        if m.iter().all(|x| x.is_finite()) {
            if let Some(c) = m.cholesky() {
                return Ok((c, j));
            }
        }
        if j >= jitter.cap * (1.0 - 1e-12) {
            return Err(FitError::Singular { jitter: j });
        }
        j = (j * 10.0).min(jitter.cap);
    }
}

const BLOCK: usize = 48;

/// Inverse of a lower-triangular matrix by recursive 2x2 blocking, so the
/// bulk of the work is matrix products.
pub fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    if n <= BLOCK {
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            inv[(j, j)] = 1.0 / l[(j, j)];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s += l[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / l[(i, i)];
            }
        }
        return inv;
    }
    let k = n / 2;
    let a_inv = lower_inverse(&l.view((0, 0), (k, k)).into_owned());
    let c_inv = lower_inverse(&l.view((k, k), (n - k, n - k)).into_owned());
    let b = l.view((k, 0), (n - k, k));
    let lower_left = -(&c_inv * b * &a_inv);
    let mut inv = DMatrix::zeros(n, n);
    inv.view_mut((0, 0), (k, k)).copy_from(&a_inv);
    inv.view_mut((k, k), (n - k, n - k)).copy_from(&c_inv);
    inv.view_mut((k, 0), (n - k, k)).copy_from(&lower_left);
    inv
}

pub fn log_det_from_cholesky(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}
