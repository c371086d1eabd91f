//! Gaussian sensing matrices, noise at a target SNR, and the error metric.

use gmemi_core::linalg::{dist, norm, DenseMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BenchError, Result};

/// `A` with i.i.d. N(0, 1) entries and `y = A x_org + ε`.
///
/// The noise variance is `‖A x_org‖² / (d · 10^{snr_db/10})`, i.e. the SNR is
/// set against the realized signal power. `snr_db = +∞` gives `ε = 0`.
pub fn gen_measurements<R: Rng + ?Sized>(
    x_org: &[f64],
    d: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<(DenseMatrix, Vec<f64>)> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(BenchError::Config(format!("invalid snr_db {snr_db}")));
    }
    let n = x_org.len();
    let a = DenseMatrix::from_fn(d, n, |_, _| StandardNormal.sample(rng));
    let mut y = a.matvec(x_org);
    if snr_db.is_finite() {
        let power = norm(&y).powi(2);
        let sd = (power / (d as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += sd * e;
        }
    }
    Ok((a, y))
}

/// `‖x_org − x_hat‖² / ‖x_org‖²`
pub fn nmse(x_org: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_org.len() != x_hat.len() {
        return Err(BenchError::Config(format!("length {} vs {}", x_org.len(), x_hat.len())));
    }
    let den = norm(x_org).powi(2);
    if den == 0.0 {
        return Err(BenchError::Config("nmse needs a nonzero reference signal".into()));
    }
    Ok(dist(x_org, x_hat).powi(2) / den)
}
