//! Proximity operators used by the splitting solver.
//!
//! Every operator here is exact: closed forms, a Cardano root, or a finite
//! sort/pivot procedure. Conjugate proxes are always derived from the primal
//! ones through the Moreau decomposition, see [`prox_conjugate`].

use crate::error::{Error, Result};
use crate::linalg::{norm, norm1, Vector};

/// `prox_{γ f}` for a fixed convex function `f`.
pub trait ProxOperator {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector>;
}

impl<F> ProxOperator for F
where
    F: Fn(f64, &[f64]) -> Result<Vector>,
{
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        self(gamma, x)
    }
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("prox step must be positive, got {gamma}")))
    }
}

/// A partition of `{0..dim-1}` into nonempty disjoint groups, each carrying a
/// positive weight. The default weight of group `I` is `√|I|`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPartition {
    dim: usize,
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl GroupPartition {
    pub fn new(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let weights = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
        Self::with_weights(dim, groups, weights)
    }

    pub fn with_weights(dim: usize, groups: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != groups.len() {
            return Err(Error::InvalidPartition("one weight per group required".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidPartition("weights must be positive".into()));
        }
        let mut seen = vec![false; dim];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidPartition("empty group".into()));
            }
            for &i in g {
                if i >= dim {
                    return Err(Error::InvalidPartition(format!("index {i} out of range {dim}")));
                }
                if seen[i] {
                    return Err(Error::InvalidPartition(format!("index {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {i} not covered")));
        }
        Ok(Self { dim, groups, weights })
    }

    /// Every index in its own group; the mixed norm becomes `‖·‖₁`.
    pub fn singletons(dim: usize) -> Self {
        Self { dim, groups: (0..dim).map(|i| vec![i]).collect(), weights: vec![1.0; dim] }
    }

    /// Consecutive blocks of `block` indices (the last one may be shorter).
    pub fn contiguous(dim: usize, block: usize) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidPartition("block size must be positive".into()));
        }
        let groups = (0..dim).step_by(block).map(|s| (s..(s + block).min(dim)).collect()).collect();
        Self::new(dim, groups)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mixed `ℓ2/ℓ1` norm `Σ_k w_k ‖x_{I_k}‖₂`.
    pub fn mixed_norm(&self, x: &[f64]) -> f64 {
        self.groups
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| w * g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
            .sum()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("partition of {} applied to length {len}", self.dim)))
        }
    }
}

/// Positive root of `t³ + (2σ/γ + 1)t − 2|u|/γ = 0` for `u ≠ 0`.
///
/// Cardano's formula in the form `c − p/(3c)` with `c = ∛(|u|/γ + √Δ)`, which
/// equals the textbook sum of two cube roots but does not cancel when `p` is
/// large. The trigonometric branch covers `Δ < 0`. Two guarded Newton steps
/// then clean up the last few ulps.
pub fn perspective_root(u: f64, sigma: f64, gamma: f64) -> f64 {
    let a = u.abs() / gamma;
    let p = 2.0 * sigma / gamma + 1.0;
    let delta = a * a + p * p * p / 27.0;
    let mut t = if delta >= 0.0 {
        let c = (a + delta.sqrt()).cbrt();
        c - p / (3.0 * c)
    } else {
        2.0 * (-p / 3.0).sqrt() * (((-delta).sqrt() / a).atan() / 3.0).cos()
    };
    let residual = |t: f64| t * t * t + p * t - 2.0 * a;
    for _ in 0..2 {
        let d = 3.0 * t * t + p;
        if d <= 0.0 {
            break;
        }
        let next = t - residual(t) / d;
        if next > 0.0 && residual(next).abs() < residual(t).abs() {
            t = next;
        } else {
            break;
        }
    }
    t
}

/// `prox_{γh}(u, σ)` for the perspective `h` of `½u² + ½`.
pub fn prox_perspective_quad(u: f64, sigma: f64, gamma: f64) -> Result<(f64, f64)> {
    check_step(gamma)?;
    Ok(perspective_prox_unchecked(u, sigma, gamma))
}

#[inline]
fn perspective_prox_unchecked(u: f64, sigma: f64, gamma: f64) -> (f64, f64) {
    if 2.0 * gamma * sigma + u * u <= gamma * gamma {
        (0.0, 0.0)
    } else if u == 0.0 {
        // here σ > γ/2 necessarily
        (0.0, sigma - gamma / 2.0)
    } else {
        let t = perspective_root(u, sigma, gamma);
        (u - gamma * t * u.signum(), sigma + gamma * (t * t - 1.0) / 2.0)
    }
}

/// The perspective `h(u, σ)`: `u²/(2σ) + σ/2` for `σ > 0`, `0` at the origin,
/// `+∞` elsewhere.
pub fn perspective_value(u: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        u * u / (2.0 * sigma) + sigma / 2.0
    } else if u == 0.0 && sigma == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Euclidean projection onto `{ξ : ‖ξ‖₁ ≤ α}` by sorting magnitudes and
/// scanning for the soft-threshold level.
pub fn project_l1_ball(xi: &[f64], alpha: f64) -> Result<Vector> {
    check_radius(alpha)?;
    if norm1(xi) <= alpha {
        return Ok(xi.to_vec());
    }
    if alpha == 0.0 {
        return Ok(vec![0.0; xi.len()]);
    }
    let mut mags: Vec<f64> = xi.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - alpha) / (j + 1) as f64;
        if *m > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    Ok(soft_threshold(xi, tau))
}

/// Same projection via the pivot method of Condat, linear in expectation.
pub fn project_l1_ball_pivot(xi: &[f64], alpha: f64) -> Result<Vector> {
    check_radius(alpha)?;
    if norm1(xi) <= alpha {
        return Ok(xi.to_vec());
    }
    if alpha == 0.0 {
        return Ok(vec![0.0; xi.len()]);
    }
    let mut iter = xi.iter().map(|v| v.abs());
    let first = iter.next().expect("nonempty since ‖ξ‖₁ > α ≥ 0");
    let mut active = vec![first];
    let mut parked = Vec::new();
    let mut rho = first - alpha;
    for y in iter {
        if y > rho {
            rho += (y - rho) / (active.len() + 1) as f64;
            if rho > y - alpha {
                active.push(y);
            } else {
                parked.append(&mut active);
                active.push(y);
                rho = y - alpha;
            }
        }
    }
    for y in parked {
        if y > rho {
            active.push(y);
            rho += (y - rho) / active.len() as f64;
        }
    }
    loop {
        let before = active.len();
        let mut i = 0;
        while i < active.len() {
            let y = active[i];
            if y <= rho {
                active.swap_remove(i);
                rho += (rho - y) / active.len() as f64;
            } else {
                i += 1;
            }
        }
        if active.len() == before {
            break;
        }
    }
    Ok(soft_threshold(xi, rho))
}

fn check_radius(alpha: f64) -> Result<()> {
    if alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("ball radius must be nonnegative, got {alpha}")))
    }
}

pub fn soft_threshold(x: &[f64], tau: f64) -> Vector {
    x.iter().map(|v| v.signum() * (v.abs() - tau).max(0.0)).collect()
}

/// Group soft thresholding: `prox` of `κ ‖·‖_{2,1}` with the partition's
/// weights folded into the per-group threshold `κ·w_g`.
pub fn prox_group_l21(w: &[f64], part: &GroupPartition, kappa: f64) -> Result<Vector> {
    if kappa < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold must be nonnegative, got {kappa}")));
    }
    part.check_dim(w.len())?;
    let mut out = w.to_vec();
    group_shrink_in_place(&mut out, part, kappa);
    Ok(out)
}

fn group_shrink_in_place(w: &mut [f64], part: &GroupPartition, kappa: f64) {
    for (g, weight) in part.groups.iter().zip(&part.weights) {
        let thr = kappa * weight;
        if thr == 0.0 {
            continue;
        }
        let nrm = g.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
        let factor = 1.0 - thr / thr.max(nrm);
        for &i in g {
            w[i] *= factor;
        }
    }
}

/// `prox_{γf}` for `f(u, σ) = α‖u − σ‖_{2,1}` via `U = [I −I]`, `UUᵀ = 2I`.
pub fn prox_tgv_f(
    u: &[f64],
    sigma: &[f64],
    gamma: f64,
    alpha: f64,
    g1: &GroupPartition,
) -> Result<(Vector, Vector)> {
    check_step(gamma)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if u.len() != sigma.len() {
        return Err(Error::DimensionMismatch(format!("u has {} entries, σ has {}", u.len(), sigma.len())));
    }
    g1.check_dim(u.len())?;
    let mut s: Vector = u.iter().zip(sigma).map(|(a, b)| a - b).collect();
    group_shrink_in_place(&mut s, g1, 2.0 * gamma * alpha);
    let mid = u.iter().zip(sigma).map(|(a, b)| a + b);
    let (pu, ps) = mid.zip(&s).map(|(m, si)| ((m + si) / 2.0, (m - si) / 2.0)).unzip();
    Ok((pu, ps))
}

/// `prox_{γα‖u − ·‖_{2,1}}(s) = u + shrink(s − u, γα)` with `u` held fixed.
pub fn prox_tgv_latent(
    u: &[f64],
    s: &[f64],
    gamma: f64,
    alpha: f64,
    g1: &GroupPartition,
) -> Result<Vector> {
    check_step(gamma)?;
    if u.len() != s.len() {
        return Err(Error::DimensionMismatch(format!("u has {} entries, σ has {}", u.len(), s.len())));
    }
    g1.check_dim(u.len())?;
    let mut d: Vector = s.iter().zip(u).map(|(a, b)| a - b).collect();
    group_shrink_in_place(&mut d, g1, gamma * alpha);
    Ok(d.iter().zip(u).map(|(a, b)| a + b).collect())
}

/// `argmin_σ h(u, σ) + (σ − s)²/(2γ)` with `u` held fixed: the positive
/// root of `2σ³ + (γ − 2s)σ² − γu²`, or `max(s − γ/2, 0)` when `u = 0`.
pub fn prox_perspective_latent(u: f64, s: f64, gamma: f64) -> Result<f64> {
    check_step(gamma)?;
    if u == 0.0 {
        return Ok((s - gamma / 2.0).max(0.0));
    }
    let c2 = gamma - 2.0 * s;
    let c0 = gamma * u * u;
    let p = |x: f64| (2.0 * x + c2) * x * x - c0;
    // one sign change in the coefficients: exactly one positive root
    let (mut lo, mut hi) = (0.0f64, s.max(0.0) + u.abs() + gamma);
    while p(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut x = hi;
    for _ in 0..200 {
        let fx = p(x);
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dfx = (6.0 * x + 2.0 * c2) * x;
        let mut next = if dfx > 0.0 { x - fx / dfx } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// `prox_{γf*}(x) = x − γ prox_{f/γ}(x/γ)` using only the primal prox.
pub fn prox_conjugate<P: ProxOperator + ?Sized>(prox_of_f: &P, gamma: f64, x: &[f64]) -> Result<Vector> {
    check_step(gamma)?;
    let scaled: Vector = x.iter().map(|v| v / gamma).collect();
    let p = prox_of_f.prox(1.0 / gamma, &scaled)?;
    Ok(x.iter().zip(&p).map(|(xi, pi)| xi - gamma * pi).collect())
}

/// Coordinate-wise clamp onto `[lo, hi]^n`.
pub fn project_box(x: &[f64], lo: f64, hi: f64) -> Result<Vector> {
    if lo > hi {
        return Err(Error::InvalidParameter(format!("empty box [{lo}, {hi}]")));
    }
    Ok(x.iter().map(|v| v.clamp(lo, hi)).collect())
}

/// `c‖·‖₁`
#[derive(Clone, Copy, Debug)]
pub struct L1Norm {
    pub scale: f64,
}

impl ProxOperator for L1Norm {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        check_step(gamma)?;
        Ok(soft_threshold(x, gamma * self.scale))
    }
}

/// `c‖·‖_{2,1}` over a partition.
#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub partition: GroupPartition,
    pub scale: f64,
}

impl GroupNorm {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.partition.mixed_norm(x)
    }
}

impl ProxOperator for GroupNorm {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        check_step(gamma)?;
        prox_group_l21(x, &self.partition, gamma * self.scale)
    }
}

/// Indicator of the `ℓ1` ball of radius `radius`.
#[derive(Clone, Copy, Debug)]
pub struct L1Ball {
    pub radius: f64,
}

impl ProxOperator for L1Ball {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        check_step(gamma)?;
        project_l1_ball(x, self.radius)
    }
}

/// Indicator of the box `[lo, hi]^n`.
#[derive(Clone, Copy, Debug)]
pub struct BoxSet {
    pub lo: f64,
    pub hi: f64,
}

impl ProxOperator for BoxSet {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        check_step(gamma)?;
        project_box(x, self.lo, self.hi)
    }
}

/// `Σ_i h(u_i, σ_i)` acting on the stacked vector `[u; σ]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PerspectiveSum;

impl PerspectiveSum {
    pub fn value(&self, u: &[f64], sigma: &[f64]) -> f64 {
        u.iter().zip(sigma).map(|(a, b)| perspective_value(*a, *b)).sum()
    }
}

impl ProxOperator for PerspectiveSum {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        check_step(gamma)?;
        if x.len() % 2 != 0 {
            return Err(Error::DimensionMismatch("stacked (u, σ) must have even length".into()));
        }
        let m = x.len() / 2;
        let mut out = vec![0.0; x.len()];
        for i in 0..m {
            let (pu, ps) = perspective_prox_unchecked(x[i], x[m + i], gamma);
            out[i] = pu;
            out[m + i] = ps;
        }
        Ok(out)
    }
}

/// `α‖u − σ‖_{2,1}` acting on the stacked vector `[u; σ]`.
#[derive(Clone, Debug)]
pub struct TgvFidelity {
    pub alpha: f64,
    pub partition: GroupPartition,
}

impl TgvFidelity {
    pub fn value(&self, u: &[f64], sigma: &[f64]) -> f64 {
        let d: Vector = u.iter().zip(sigma).map(|(a, b)| a - b).collect();
        self.alpha * self.partition.mixed_norm(&d)
    }
}

impl ProxOperator for TgvFidelity {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        let m = self.partition.dim();
        if x.len() != 2 * m {
            return Err(Error::DimensionMismatch(format!("expected stacked length {}, got {}", 2 * m, x.len())));
        }
        let (pu, ps) = prox_tgv_f(&x[..m], &x[m..], gamma, self.alpha, &self.partition)?;
        Ok([pu, ps].concat())
    }
}

/// Euclidean norm helper kept next to the group operators.
pub fn group_norms(x: &[f64], part: &GroupPartition) -> Vector {
    part.groups.iter().map(|g| norm(&g.iter().map(|&i| x[i]).collect::<Vec<_>>())).collect()
}
