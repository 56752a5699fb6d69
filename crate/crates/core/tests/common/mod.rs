//! Small dense-matrix helpers used as independent oracles. Plain `Vec`
//! arithmetic, no shared code with the library's linear algebra.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(n: usize, m: usize) -> Mat {
    vec![vec![0.0; m]; n]
}

pub fn identity(n: usize) -> Mat {
    let mut a = zeros(n, n);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = zeros(n, m);
    for i in 0..n {
        for p in 0..k {
            for j in 0..m {
                c[i][j] += a[i][p] * b[p][j];
            }
        }
    }
    c
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m: Mat = a.iter().zip(b).map(|(row, v)| row.iter().copied().chain([*v]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// `k(a, b) = alpha2 * exp(-sum (a_i - b_i)^2 / l_i^2 - sum phi_j [a_j != b_j])`.
pub fn kernel(alpha2: f64, ls: &[f64], phi: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let nc = ls.len();
    let mut s = 0.0;
    for i in 0..nc {
        s += ((a[i] - b[i]) / ls[i]).powi(2);
    }
    for j in 0..phi.len() {
        if a[nc + j] != b[nc + j] {
            s += phi[j];
        }
    }
    alpha2 * (-s).exp()
}

pub fn gram(alpha2: f64, ls: &[f64], phi: &[f64], xs: &[Vec<f64>]) -> Mat {
    xs.iter().map(|a| xs.iter().map(|b| kernel(alpha2, ls, phi, a, b)).collect()).collect()
}

pub fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

/// Spearman rank correlation without ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m).powi(2)).sum();
    cov / var
}

/// `ln det a` for a matrix with positive determinant.
pub fn log_det(a: &Mat) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut total = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        total += m[c][c].abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    total
}

/// Answers external-simulator requests in `dir` until `stop` is set. Each
/// result reports `energy = 10 * x1 + rep` and `overheat = rep % 2`.
pub fn spawn_echo(
    dir: std::path::PathBuf,
    stop: std::sync::Arc<std::sync::atomic::AtomicBool>,
) -> std::thread::JoinHandle<usize> {
    use std::sync::atomic::Ordering;
    std::thread::spawn(move || {
        let (req, res) = (dir.join("requests.csv"), dir.join("results.csv"));
        let mut batches = 0;
        while !stop.load(Ordering::SeqCst) {
            if req.exists() && !res.exists() {
                let text = std::fs::read_to_string(&req).unwrap();
                let mut out = String::from("id,rep,energy_kwh_m2,overheat\n");
                for line in text.lines().skip(1) {
                    let f: Vec<&str> = line.split(',').collect();
                    let rep: usize = f[1].parse().unwrap();
                    let x1: f64 = f[3].parse().unwrap();
                    out.push_str(&format!("{},{},{},{}\n", f[0], rep, 10.0 * x1 + rep as f64, rep % 2));
                }
                let tmp = dir.join("results.tmp");
                std::fs::write(&tmp, out).unwrap();
                std::fs::rename(&tmp, &res).unwrap();
                batches += 1;
            }
            std::thread::sleep(std::time::Duration::from_millis(2));
        }
        batches
    })
}
