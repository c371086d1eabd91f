#![allow(dead_code)]

use gmemi_core::linalg::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| randn(rng)).collect()
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| randn(rng))
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Minimizes a convex function of two variables by repeatedly halving a
/// 21×21 grid around the best point found so far.
pub fn grid_min_2d(f: impl Fn(f64, f64) -> f64, center: (f64, f64), half_width: f64) -> (f64, f64) {
    let (mut ca, mut cb) = center;
    let mut w = half_width;
    while w > 1e-10 {
        let mut best = (f64::INFINITY, ca, cb);
        for i in 0..=20 {
            for j in 0..=20 {
                let a = ca - w + w * i as f64 / 10.0;
                let b = cb - w + w * j as f64 / 10.0;
                let v = f(a, b);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        ca = best.1;
        cb = best.2;
        w *= 0.5;
    }
    (ca, cb)
}

/// One-dimensional counterpart of [`grid_min_2d`].
pub fn grid_min_1d(f: impl Fn(f64) -> f64, center: f64, half_width: f64) -> f64 {
    let mut c = center;
    let mut w = half_width;
    while w > 1e-12 {
        let mut best = (f64::INFINITY, c);
        for i in 0..=200 {
            let t = c - w + w * i as f64 / 100.0;
            let v = f(t);
            if v < best.0 {
                best = (v, t);
            }
        }
        c = best.1;
        w *= 0.1;
    }
    c
}

/// Perspective of `½u² + ½`, written out independently of the library.
pub fn perspective(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a * a / (2.0 * b) + b / 2.0
    } else if a == 0.0 && b == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Sort-based Euclidean projection onto the `ℓ1` ball.
pub fn l1_ball_sort_oracle(x: &[f64], radius: f64) -> Vec<f64> {
    if x.iter().map(|v| v.abs()).sum::<f64>() <= radius {
        return x.to_vec();
    }
    let mut mu: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut theta = 0.0;
    let mut cs = 0.0;
    for (k, m) in mu.iter().enumerate() {
        cs += m;
        let t = (cs - radius) / (k as f64 + 1.0);
        if m - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| v.signum() * (v.abs() - theta).max(0.0)).collect()
}

/// `ρ_{γ,b}(t)`: `√b t − t²/(2γ)` up to `t = γ√b`, then `γb/2`.
pub fn rho(gamma: f64, b: f64, t: f64) -> f64 {
    if t <= gamma * b.sqrt() {
        b.sqrt() * t - t * t / (2.0 * gamma)
    } else {
        gamma * b / 2.0
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(s: &DenseMatrix) -> Vec<f64> {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub fn jacobi_min_eig(s: &DenseMatrix) -> f64 {
    jacobi_eigenvalues(s).into_iter().fold(f64::INFINITY, f64::min)
}
