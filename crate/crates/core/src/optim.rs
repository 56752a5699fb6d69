//! Limited-memory BFGS with a backtracking Armijo line search and box
//! constraints handled by rejecting infeasible trial points.

use std::collections::VecDeque;

/// An objective to minimise. Returning `None` marks the point as infeasible.
pub trait Objective {
    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self(x)
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsSettings {
    pub max_iter: usize,
    pub memory: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LbfgsSettings {
    pub fn with_bounds(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LbfgsSettings {
            max_iter: 200,
            memory: 8,
            grad_tol: 1e-5,
            f_tol: 1e-10,
            lower,
            upper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    GradTol,
    FTol,
    /// The line search could not improve further; the point is stationary to
    /// working precision.
    Stalled,
    MaxIter,
    /// The starting point itself could not be evaluated.
    Failed,
}

impl Status {
    pub fn converged(self) -> bool {
        matches!(self, Status::GradTol | Status::FTol | Status::Stalled)
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn minimize<O: Objective>(obj: &mut O, x0: &[f64], settings: &LbfgsSettings) -> Outcome {
    let n = x0.len();
    let feasible = |x: &[f64]| {
        x.iter()
            .zip(settings.lower.iter().zip(&settings.upper))
            .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    };
    let mut x: Vec<f64> = x0
        .iter()
        .zip(settings.lower.iter().zip(&settings.upper))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let (mut f, mut g) = match obj.value_grad(&x) {
        Some((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        _ => {
            return Outcome {
                x,
                f: f64::INFINITY,
                iterations: 0,
                status: Status::Failed,
            }
        }
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for iter in 0..settings.max_iter {
        if inf_norm(&g) < settings.grad_tol {
            return Outcome { x, f, iterations: iter, status: Status::GradTol };
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            for i in 0..n {
                d[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(&g).max(1.0),
        };
        d.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for i in 0..n {
                d[i] += (a - b) * s[i];
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v / inf_norm(&g).max(1.0)).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            if feasible(&trial) {
                if let Some((ft, gt)) = obj.value_grad(&trial) {
                    if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + 1e-4 * step * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            return Outcome { x, f, iterations: iter, status: Status::Stalled };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let f_change = (f - f_new).abs();
        x = x_new;
        g = g_new;
        let f_old = f;
        f = f_new;
        if f_change <= settings.f_tol * f_old.abs().max(1.0) {
            return Outcome { x, f, iterations: iter + 1, status: Status::FTol };
        }
    }
    Outcome {
        x,
        f,
        iterations: settings.max_iter,
        status: Status::MaxIter,
    }
}
