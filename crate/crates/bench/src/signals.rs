//! Ground-truth signals for the synthetic experiments.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{BenchError, Result};

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Block lengths from a symmetric Dirichlet draw, each at least one, summing
/// to `nonzeros`.
fn block_lengths<R: Rng + ?Sized>(blocks: usize, nonzeros: usize, rng: &mut R) -> Vec<usize> {
    let w: Vec<f64> = (0..blocks).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    let spare = (nonzeros - blocks) as f64;
    let shares: Vec<f64> = w.iter().map(|v| v / total * spare).collect();
    let mut lens: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
    let mut left = nonzeros - lens.iter().sum::<usize>();
    // largest fractional parts first
    let mut order: Vec<usize> = (0..blocks).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        lens[i] += 1;
        left -= 1;
    }
    lens
}

/// A vector with `nonzeros` entries spread over `blocks` separated runs, with
/// i.i.d. standard normal amplitudes.
///
/// Runs never touch, so the support has exactly `blocks` connected pieces.
pub fn gen_block_sparse<R: Rng + ?Sized>(n: usize, blocks: usize, nonzeros: usize, rng: &mut R) -> Result<Vec<f64>> {
    if blocks == 0 || blocks > nonzeros || nonzeros > n {
        return Err(BenchError::Signal(format!(
            "need 1 <= blocks <= nonzeros <= n, got blocks={blocks} nonzeros={nonzeros} n={n}"
        )));
    }
    let lens = block_lengths(blocks, nonzeros, rng);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut spans: Vec<(usize, usize)> =
            lens.iter().map(|&len| { let start = rng.random_range(0..=n - len); (start, start + len) }).collect();
        spans.sort_unstable();
        if spans.windows(2).all(|w| w[0].1 < w[1].0) {
            let mut x = vec![0.0; n];
            for (s, e) in spans {
                for v in &mut x[s..e] {
                    *v = StandardNormal.sample(rng);
                }
            }
            return Ok(x);
        }
    }
    Err(BenchError::Signal(format!(
        "could not place {blocks} separated blocks of {nonzeros} nonzeros in {n} entries"
    )))
}

/// Named piecewise-linear test signals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    /// Zeros up to index 25, then `s(i − 26) + r` (1-based), on 50 entries.
    JumpRamp { s: f64, r: f64 },
    /// Four linear pieces in `[−1, 1]` with one jump and three slope changes.
    Default,
}

impl std::str::FromStr for Profile {
    type Err = BenchError;

    /// `default` or `jump-ramp(s, r)`.
    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "default" {
            return Ok(Profile::Default);
        }
        let bad = || BenchError::Signal(format!("unknown profile {text:?}"));
        let inner = t.strip_prefix("jump-ramp(").and_then(|s| s.strip_suffix(')')).ok_or_else(bad)?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [s, r] => Ok(Profile::JumpRamp { s: s.parse().map_err(|_| bad())?, r: r.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

pub fn gen_piecewise_linear(n: usize, profile: Profile) -> Result<Vec<f64>> {
    if n < 4 {
        return Err(BenchError::Signal(format!("piecewise-linear signals need n >= 4, got {n}")));
    }
    Ok(match profile {
        Profile::JumpRamp { s, r } => (1..=n).map(|i| if i <= 25 { 0.0 } else { s * (i as f64 - 26.0) + r }).collect(),
        Profile::Default => (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                if t < 0.3 {
                    -0.6 + 2.0 * t
                } else if t < 0.55 {
                    0.8
                } else if t < 0.8 {
                    0.8 - 4.0 * (t - 0.55)
                } else {
                    -0.2 - 1.5 * (t - 0.8)
                }
            })
            .collect(),
    })
}
