//! Seed functions `φ(u, σ) = f(u, σ) + g(Mσ)`, the structured difference
//! matrices, and numerical evaluators of `ψ(u) = min_σ φ(u, σ)` and of the
//! enhanced penalty `Ψ_B`.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, DenseMatrix, Vector};
use crate::prox::{
    prox_conjugate, prox_group_l21, prox_perspective_latent, prox_perspective_quad, prox_tgv_latent,
    GroupNorm, GroupPartition, L1Ball, PerspectiveSum, ProxOperator, TgvFidelity,
};

/// Index pairs `(i, j)` defining the rows `σ_i − σ_j` of a difference operator.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    pairs: Vec<(usize, usize)>,
}

impl NeighborGraph {
    /// Rejects self loops and repeated pairs (either orientation).
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &pairs {
            if i == j {
                return Err(Error::InvalidGraph(format!("self pair ({i}, {i})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!("duplicate pair ({i}, {j})")));
            }
        }
        Ok(Self { pairs })
    }

    /// `(i, i+1)` for `i = 0..m-2`.
    pub fn chain(m: usize) -> Self {
        Self { pairs: (1..m).map(|i| (i - 1, i)).collect() }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn check_nodes(&self, m: usize) -> Result<()> {
        match self.pairs.iter().find(|&&(i, j)| i >= m || j >= m) {
            Some(&(i, j)) => Err(Error::InvalidGraph(format!("pair ({i}, {j}) outside 0..{m}"))),
            None => Ok(()),
        }
    }
}

/// The coupling matrix `M ∈ R^{p×l}` with matrix-free products.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    /// `p = 0`.
    Empty { l: usize },
    /// Rows `σ_i − σ_j` over a neighbor graph.
    Pairs { l: usize, graph: NeighborGraph },
    /// Transpose of the `l × (l+1)` first-difference matrix, so `p = l + 1`.
    DiffTranspose { l: usize },
}

impl Coupling {
    pub fn rows(&self) -> usize {
        match self {
            Coupling::Empty { .. } => 0,
            Coupling::Pairs { graph, .. } => graph.len(),
            Coupling::DiffTranspose { l } => l + 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Coupling::Empty { l } | Coupling::Pairs { l, .. } | Coupling::DiffTranspose { l } => *l,
        }
    }

    /// `Mσ`
    pub fn apply(&self, sigma: &[f64]) -> Vector {
        match self {
            Coupling::Empty { .. } => Vec::new(),
            Coupling::Pairs { graph, .. } => graph.pairs.iter().map(|&(i, j)| sigma[i] - sigma[j]).collect(),
            Coupling::DiffTranspose { l } => {
                let l = *l;
                let mut out = vec![0.0; l + 1];
                if l > 0 {
                    out[0] = -sigma[0];
                    for j in 1..l {
                        out[j] = sigma[j - 1] - sigma[j];
                    }
                    out[l] = sigma[l - 1];
                }
                out
            }
        }
    }

    /// `Mᵀξ`
    pub fn apply_t(&self, xi: &[f64]) -> Vector {
        let mut out = vec![0.0; self.cols()];
        match self {
            Coupling::Empty { .. } => {}
            Coupling::Pairs { graph, .. } => {
                for (k, &(i, j)) in graph.pairs.iter().enumerate() {
                    out[i] += xi[k];
                    out[j] -= xi[k];
                }
            }
            Coupling::DiffTranspose { l } => {
                for (j, o) in out.iter_mut().enumerate().take(*l) {
                    *o = xi[j + 1] - xi[j];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let (p, l) = (self.rows(), self.cols());
        let mut d = DenseMatrix::zeros(p, l);
        for c in 0..l {
            let mut e = vec![0.0; l];
            e[c] = 1.0;
            for (r, v) in self.apply(&e).into_iter().enumerate() {
                d.set(r, c, v);
            }
        }
        d
    }
}

#[derive(Clone, Debug)]
enum SeedKind {
    Lop { alpha: f64 },
    Tgv { alpha: f64, g1: GroupPartition, g2: GroupPartition },
    Plain { part: GroupPartition },
}

/// `φ(u, σ) = f(u, σ) + g(Mσ)` with `u ∈ R^m`, `σ ∈ R^l`, `Mσ ∈ R^p`.
#[derive(Clone, Debug)]
pub struct SeedFunction {
    m: usize,
    coupling: Coupling,
    coupling_norm: f64,
    kind: SeedKind,
}

/// LOP-ℓ2/ℓ1 seed: `f = Σ h(u_i, σ_i)`, `g` the indicator of the `ℓ1` ball
/// of radius `alpha`, `M` the pairwise difference over `graph`.
pub fn make_lop_seed(m: usize, alpha: f64, graph: NeighborGraph) -> Result<SeedFunction> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    graph.check_nodes(m)?;
    Ok(SeedFunction::new(m, Coupling::Pairs { l: m, graph }, SeedKind::Lop { alpha }))
}

/// Anisotropic 1-D TGV seed: `f = α‖u − σ‖₁`, `g = (1−α)‖·‖₁`, `M = D_1dᵀ`.
pub fn make_tgv_seed(m: usize, alpha: f64) -> Result<SeedFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let kind = SeedKind::Tgv {
        alpha,
        g1: GroupPartition::singletons(m),
        g2: GroupPartition::singletons(m + 1),
    };
    Ok(SeedFunction::new(m, Coupling::DiffTranspose { l: m }, kind))
}

/// Seed without latent variable: `ψ(u) = ‖u‖_{2,1}` over `part`.
pub fn make_plain_seed(m: usize, part: GroupPartition) -> Result<SeedFunction> {
    if part.dim() != m {
        return Err(Error::InvalidPartition(format!("partition of {} for m = {m}", part.dim())));
    }
    Ok(SeedFunction::new(m, Coupling::Empty { l: 0 }, SeedKind::Plain { part }))
}

impl SeedFunction {
    fn new(m: usize, coupling: Coupling, kind: SeedKind) -> Self {
        let coupling_norm = match &coupling {
            Coupling::Empty { .. } => 0.0,
            c => crate::linalg::operator_norm(&c.to_dense(), 1e-10),
        };
        Self { m, coupling, coupling_norm, kind }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.coupling.cols()
    }

    pub fn p(&self) -> usize {
        self.coupling.rows()
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    /// `‖M‖_op`, computed once at construction.
    pub fn coupling_norm(&self) -> f64 {
        self.coupling_norm
    }

    pub fn m_dense(&self) -> DenseMatrix {
        self.coupling.to_dense()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SeedKind::Lop { .. } => "lop",
            SeedKind::Tgv { .. } => "tgv",
            SeedKind::Plain { .. } => "plain",
        }
    }

    /// `prox_{γf(u, ·)}(s)`: the prox in the latent variable with `u` fixed.
    pub fn prox_f_latent(&self, gamma: f64, u: &[f64], s: &[f64]) -> Result<Vector> {
        self.check_u(u.len())?;
        self.check_sigma(s.len())?;
        match &self.kind {
            SeedKind::Lop { .. } => u.iter().zip(s).map(|(a, b)| prox_perspective_latent(*a, *b, gamma)).collect(),
            SeedKind::Tgv { alpha, g1, .. } => prox_tgv_latent(u, s, gamma, *alpha, g1),
            SeedKind::Plain { .. } => {
                check_gamma(gamma)?;
                Ok(Vec::new())
            }
        }
    }

    /// The `u`-part of a subgradient of `f` at `(u, σ*)` whose `σ`-part is
    /// `−Mᵀy`, given `mty = Mᵀy`.
    fn latent_subgradient(&self, u: &[f64], mty: &[f64]) -> Vector {
        match &self.kind {
            // ∇h = (a, ½ − a²/2) with a = u/σ
            SeedKind::Lop { .. } => u
                .iter()
                .zip(mty)
                .map(|(ui, t)| if *ui == 0.0 { 0.0 } else { ui.signum() * (1.0 + 2.0 * t).max(0.0).sqrt() })
                .collect(),
            SeedKind::Tgv { alpha, g1, .. } => {
                let mut r = mty.to_vec();
                for (g, w) in g1.groups().iter().zip(g1.weights()) {
                    let nrm = g.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt();
                    let cap = alpha * w;
                    if nrm > cap {
                        for &i in g {
                            r[i] *= cap / nrm;
                        }
                    }
                }
                r
            }
            SeedKind::Plain { part } => plain_subgradient(u, part),
        }
    }

    /// `prox_{γf}(u, σ)`.
    pub fn prox_f(&self, gamma: f64, u: &[f64], sigma: &[f64]) -> Result<(Vector, Vector)> {
        self.check_u(u.len())?;
        self.check_sigma(sigma.len())?;
        match &self.kind {
            SeedKind::Lop { .. } => {
                let mut pu = Vec::with_capacity(u.len());
                let mut ps = Vec::with_capacity(u.len());
                for (a, b) in u.iter().zip(sigma) {
                    let (x, y) = prox_perspective_quad(*a, *b, gamma)?;
                    pu.push(x);
                    ps.push(y);
                }
                Ok((pu, ps))
            }
            SeedKind::Tgv { alpha, g1, .. } => crate::prox::prox_tgv_f(u, sigma, gamma, *alpha, g1),
            SeedKind::Plain { part } => {
                check_gamma(gamma)?;
                Ok((prox_group_l21(u, part, gamma)?, Vec::new()))
            }
        }
    }

    /// `prox_{γg}(ξ)`.
    pub fn prox_g(&self, gamma: f64, xi: &[f64]) -> Result<Vector> {
        self.check_xi(xi.len())?;
        self.g_operator().prox(gamma, xi)
    }

    /// `prox_{γf*}` on the stacked point, via the Moreau decomposition.
    pub fn prox_f_conj(&self, gamma: f64, u: &[f64], sigma: &[f64]) -> Result<(Vector, Vector)> {
        self.check_u(u.len())?;
        self.check_sigma(sigma.len())?;
        let stacked = [u, sigma].concat();
        let out = prox_conjugate(&self.f_operator(), gamma, &stacked)?;
        Ok(self.split(out))
    }

    /// `prox_{γg*}` via the Moreau decomposition.
    pub fn prox_g_conj(&self, gamma: f64, xi: &[f64]) -> Result<Vector> {
        self.check_xi(xi.len())?;
        prox_conjugate(&self.g_operator(), gamma, xi)
    }

    /// `f` as a prox handle on the stacked vector `[u; σ]`.
    pub fn f_operator(&self) -> FOperator<'_> {
        FOperator { seed: self }
    }

    /// `g` as a prox handle on `R^p`.
    pub fn g_operator(&self) -> GOperator {
        match &self.kind {
            SeedKind::Lop { alpha } => GOperator::Ball(L1Ball { radius: *alpha }),
            SeedKind::Tgv { alpha, g2, .. } => {
                GOperator::Norm(GroupNorm { partition: g2.clone(), scale: 1.0 - alpha })
            }
            SeedKind::Plain { .. } => GOperator::Zero,
        }
    }

    pub fn eval_f(&self, u: &[f64], sigma: &[f64]) -> f64 {
        match &self.kind {
            SeedKind::Lop { .. } => PerspectiveSum.value(u, sigma),
            SeedKind::Tgv { alpha, g1, .. } => TgvFidelity { alpha: *alpha, partition: g1.clone() }.value(u, sigma),
            SeedKind::Plain { part } => part.mixed_norm(u),
        }
    }

    pub fn eval_g(&self, xi: &[f64]) -> f64 {
        self.eval_g_with_slack(xi, 0.0)
    }

    /// Like [`eval_g`](Self::eval_g) but an indicator accepts points up to
    /// `slack` outside its set (and then reports 0).
    pub fn eval_g_with_slack(&self, xi: &[f64], slack: f64) -> f64 {
        match &self.kind {
            SeedKind::Lop { alpha } => {
                if crate::linalg::norm1(xi) <= alpha + slack {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            SeedKind::Tgv { alpha, g2, .. } => (1.0 - alpha) * g2.mixed_norm(xi),
            SeedKind::Plain { .. } => 0.0,
        }
    }

    /// `φ(u, σ) = f(u, σ) + g(Mσ)`.
    pub fn eval_phi(&self, u: &[f64], sigma: &[f64]) -> f64 {
        self.eval_f(u, sigma) + self.eval_g(&self.coupling.apply(sigma))
    }

    /// A reasonable starting latent for given `u`.
    fn initial_sigma(&self, u: &[f64]) -> Vector {
        match self.kind {
            SeedKind::Lop { .. } => u.iter().map(|v| v.abs()).collect(),
            SeedKind::Tgv { .. } => u.to_vec(),
            SeedKind::Plain { .. } => Vec::new(),
        }
    }

    fn split(&self, mut stacked: Vector) -> (Vector, Vector) {
        let sigma = stacked.split_off(self.m);
        (stacked, sigma)
    }

    fn check_u(&self, len: usize) -> Result<()> {
        if len == self.m {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("u has {len} entries, seed expects {}", self.m)))
        }
    }

    fn check_sigma(&self, len: usize) -> Result<()> {
        if len == self.l() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("σ has {len} entries, seed expects {}", self.l())))
        }
    }

    fn check_xi(&self, len: usize) -> Result<()> {
        if len == self.p() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("ξ has {len} entries, seed expects {}", self.p())))
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("prox step must be positive, got {gamma}")))
    }
}

/// Prox handle of `f` on `[u; σ]`.
#[derive(Clone, Copy, Debug)]
pub struct FOperator<'a> {
    seed: &'a SeedFunction,
}

impl ProxOperator for FOperator<'_> {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        let m = self.seed.m;
        if x.len() != m + self.seed.l() {
            return Err(Error::DimensionMismatch(format!(
                "stacked point has {} entries, expected {}",
                x.len(),
                m + self.seed.l()
            )));
        }
        let (pu, ps) = self.seed.prox_f(gamma, &x[..m], &x[m..])?;
        Ok([pu, ps].concat())
    }
}

/// Prox handle of `g`.
#[derive(Clone, Debug)]
pub enum GOperator {
    Ball(L1Ball),
    Norm(GroupNorm),
    /// `g` on `R^0`.
    Zero,
}

impl ProxOperator for GOperator {
    fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vector> {
        match self {
            GOperator::Ball(b) => b.prox(gamma, x),
            GOperator::Norm(n) => n.prox(gamma, x),
            GOperator::Zero => {
                check_gamma(gamma)?;
                Ok(x.to_vec())
            }
        }
    }
}

/// `D_1d ∈ R^{(n-1)×n}`, rows `(-1, +1)` on consecutive entries.
pub fn difference_matrix_1d(n: usize) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("difference matrix needs n >= 2, got {n}")));
    }
    let mut d = DenseMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        d.set(i, i, -1.0);
        d.set(i, i + 1, 1.0);
    }
    Ok(d)
}

/// `S_1d ∈ R^{n×n}`, lower-triangular ones.
pub fn cumsum_matrix(n: usize) -> Result<DenseMatrix> {
    if n < 1 {
        return Err(Error::InvalidParameter("cumsum matrix needs n >= 1".into()));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 }))
}

/// Knobs for the inner primal-dual iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerOptions {
    /// Stop once the primal-dual residual drops below `tol·max(1, ‖u‖∞)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl InnerOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_iters: 100_000 }
    }

    fn validate(&self) -> Result<()> {
        if self.tol > 0.0 && self.tol.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)))
        }
    }
}

/// Result of evaluating `ψ(u)`.
#[derive(Clone, Debug)]
pub struct MiEvaluation {
    pub value: f64,
    /// Approximate minimizer `σ*` of `φ(u, ·)`.
    pub sigma: Vector,
    /// An element of `∂ψ(u)` recovered from the dual of the coupling.
    pub subgradient: Vector,
    pub iterations: usize,
    pub residual: f64,
    dual_xi: Vector,
}

/// Result of evaluating `inf_v [ψ(v) + ½‖B(u − v)‖²]`.
#[derive(Clone, Debug)]
pub struct EnvelopeEvaluation {
    pub value: f64,
    pub v: Vector,
    pub sigma: Vector,
    pub iterations: usize,
    pub residual: f64,
    dual_xi: Vector,
}

/// `ψ(u) = min_σ φ(u, σ)`.
pub fn eval_mi_penalty(seed: &SeedFunction, u: &[f64], tol: f64) -> Result<f64> {
    Ok(eval_mi_penalty_detailed(seed, u, &InnerOptions::new(tol), None)?.value)
}

/// `ψ(u)` with the minimizing latent and a subgradient.
///
/// Runs Chambolle–Pock on `min_σ f(u, σ) + g(Mσ)` using the prox of `f` in
/// `σ` alone. `warm` restarts from an earlier evaluation.
pub fn eval_mi_penalty_detailed(
    seed: &SeedFunction,
    u: &[f64],
    opts: &InnerOptions,
    warm: Option<&MiEvaluation>,
) -> Result<MiEvaluation> {
    opts.validate()?;
    seed.check_u(u.len())?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if seed.l() == 0 {
        let value = seed.eval_f(u, &[]);
        let subgradient = seed.latent_subgradient(u, &[]);
        return Ok(MiEvaluation { value, sigma: Vec::new(), subgradient, iterations: 0, residual: 0.0, dual_xi: Vec::new() });
    }
    let mc = &seed.coupling;
    let kn = seed.coupling_norm.max(1.0);
    let tau = 0.99 / kn;
    let s = 0.99 / kn;

    let (mut sigma, mut y) = match warm {
        Some(e) if e.sigma.len() == seed.l() && e.dual_xi.len() == seed.p() => (e.sigma.clone(), e.dual_xi.clone()),
        _ => (seed.initial_sigma(u), vec![0.0; seed.p()]),
    };
    let g = seed.g_operator();
    let stop = opts.tol * scale_of(u);
    let mut residual = f64::INFINITY;
    let mut mty = mc.apply_t(&y);
    let mut it = 0;
    while it < opts.max_iters {
        it += 1;
        let ps: Vector = sigma.iter().zip(&mty).map(|(a, b)| a - tau * b).collect();
        let s1 = seed.prox_f_latent(tau, u, &ps)?;
        let y1 = if seed.p() > 0 {
            let sbar: Vector = s1.iter().zip(&sigma).map(|(a, b)| 2.0 * a - b).collect();
            let msb = mc.apply(&sbar);
            let arg: Vector = y.iter().zip(&msb).map(|(a, b)| a + s * b).collect();
            prox_conjugate(&g, s, &arg)?
        } else {
            Vec::new()
        };
        let mty1 = mc.apply_t(&y1);

        let dsig: Vector = sigma.iter().zip(&s1).map(|(a, b)| a - b).collect();
        let mdsig = mc.apply(&dsig);
        let mut acc = 0.0;
        for j in 0..dsig.len() {
            acc += (dsig[j] / tau - (mty[j] - mty1[j])).powi(2);
        }
        for k in 0..y.len() {
            acc += ((y[k] - y1[k]) / s - mdsig[k]).powi(2);
        }
        residual = acc.sqrt();
        sigma = s1;
        y = y1;
        mty = mty1;
        if residual < stop {
            break;
        }
    }
    if residual >= stop {
        return Err(Error::InnerNotConverged { iterations: it, residual });
    }
    let subgradient = seed.latent_subgradient(u, &mty);
    let value = seed.eval_f(u, &sigma) + seed.eval_g_with_slack(&mc.apply(&sigma), inner_slack(opts.tol, scale_of(u)));
    Ok(MiEvaluation { value, sigma, subgradient, iterations: it, residual, dual_xi: y })
}

/// Tolerances are absolute for `‖u‖∞ ≤ 1` and relative beyond.
fn scale_of(u: &[f64]) -> f64 {
    u.iter().fold(1.0f64, |acc, v| acc.max(v.abs()))
}

fn inner_slack(tol: f64, scale: f64) -> f64 {
    (10.0 * tol * scale).max(1e-12)
}

fn plain_subgradient(u: &[f64], part: &GroupPartition) -> Vector {
    let mut r = vec![0.0; u.len()];
    for (g, w) in part.groups().iter().zip(part.weights()) {
        let nrm = g.iter().map(|&i| u[i] * u[i]).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for &i in g {
                r[i] = w * u[i] / nrm;
            }
        }
    }
    r
}

/// `inf_v [ψ(v) + ½(u − v)ᵀ BᵀB (u − v)]` as a joint minimization over
/// `(v, σ)`, solved by a Condat–Vũ iteration (plain forward-backward when
/// the seed has no latent variable).
pub fn eval_envelope(
    seed: &SeedFunction,
    btb: &DenseMatrix,
    u: &[f64],
    opts: &InnerOptions,
    warm: Option<&EnvelopeEvaluation>,
) -> Result<EnvelopeEvaluation> {
    opts.validate()?;
    seed.check_u(u.len())?;
    if btb.rows() != seed.m || btb.cols() != seed.m {
        return Err(Error::DimensionMismatch(format!(
            "BᵀB is {}×{}, seed expects {m}×{m}",
            btb.rows(),
            btb.cols(),
            m = seed.m
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mc = &seed.coupling;
    let beta = crate::linalg::operator_norm(btb, 1e-10);
    let c = seed.coupling_norm;
    let (tau, s) = if seed.p() == 0 {
        (if beta > 0.0 { 1.0 / beta } else { 1.0 }, 1.0)
    } else {
        (0.99 / (beta / 2.0 + c), 1.0 / c)
    };

    let (mut v, mut sigma, mut y) = match warm {
        Some(e) if e.v.len() == seed.m && e.sigma.len() == seed.l() && e.dual_xi.len() == seed.p() => {
            (e.v.clone(), e.sigma.clone(), e.dual_xi.clone())
        }
        _ => (u.to_vec(), seed.initial_sigma(u), vec![0.0; seed.p()]),
    };
    let g = seed.g_operator();
    let grad = |v: &[f64]| -> Vector {
        let diff: Vector = v.iter().zip(u).map(|(a, b)| a - b).collect();
        btb.matvec(&diff)
    };
    let mut gv = grad(&v);
    let stop = opts.tol * scale_of(u);
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iters {
        it += 1;
        let pv: Vector = v.iter().zip(&gv).map(|(a, b)| a - tau * b).collect();
        let mty = mc.apply_t(&y);
        let ps: Vector = sigma.iter().zip(&mty).map(|(a, b)| a - tau * b).collect();
        let (v1, s1) = seed.prox_f(tau, &pv, &ps)?;
        let y1 = if seed.p() > 0 {
            let sbar: Vector = s1.iter().zip(&sigma).map(|(a, b)| 2.0 * a - b).collect();
            let msb = mc.apply(&sbar);
            let arg: Vector = y.iter().zip(&msb).map(|(a, b)| a + s * b).collect();
            prox_conjugate(&g, s, &arg)?
        } else {
            Vec::new()
        };
        let gv1 = grad(&v1);

        let dy: Vector = y.iter().zip(&y1).map(|(a, b)| a - b).collect();
        let mtdy = mc.apply_t(&dy);
        let dsig: Vector = sigma.iter().zip(&s1).map(|(a, b)| a - b).collect();
        let mdsig = mc.apply(&dsig);
        let mut acc = 0.0;
        for i in 0..v.len() {
            acc += ((v[i] - v1[i]) / tau - (gv[i] - gv1[i])).powi(2);
        }
        for j in 0..dsig.len() {
            acc += (dsig[j] / tau - mtdy[j]).powi(2);
        }
        for k in 0..dy.len() {
            acc += (dy[k] / s - mdsig[k]).powi(2);
        }
        residual = acc.sqrt();
        v = v1;
        sigma = s1;
        y = y1;
        gv = gv1;
        if residual < stop {
            break;
        }
    }
    if residual >= stop {
        return Err(Error::InnerNotConverged { iterations: it, residual });
    }
    let diff: Vector = v.iter().zip(u).map(|(a, b)| a - b).collect();
    let value = seed.eval_f(&v, &sigma)
        + seed.eval_g_with_slack(&mc.apply(&sigma), inner_slack(opts.tol, scale_of(u)))
        + 0.5 * dot(&diff, &gv);
    Ok(EnvelopeEvaluation { value, v, sigma, iterations: it, residual, dual_xi: y })
}

/// `Ψ_B(u) = ψ(u) − inf_v [ψ(v) + ½‖B(u − v)‖²]`.
pub fn eval_gme_mi_penalty(seed: &SeedFunction, btb: &DenseMatrix, u: &[f64], tol: f64) -> Result<f64> {
    let opts = InnerOptions::new(tol);
    let psi = eval_mi_penalty_detailed(seed, u, &opts, None)?.value;
    let env = eval_envelope(seed, btb, u, &opts, None)?.value;
    Ok(psi - env)
}

/// `f(u, σ) + g(Mσ) − ψ(u)` with indicator slack scaled by `tol`.
pub fn inner_gap(seed: &SeedFunction, u: &[f64], sigma: &[f64], tol: f64) -> Result<f64> {
    if seed.l() == 0 {
        return Ok(0.0);
    }
    seed.check_sigma(sigma.len())?;
    let phi = seed.eval_f(u, sigma) + seed.eval_g_with_slack(&seed.coupling.apply(sigma), inner_slack(tol, scale_of(u)));
    let psi = eval_mi_penalty(seed, u, tol)?;
    Ok(phi - psi)
}

/// Euclidean norm of `u`, re-exported for the closed-form anchors.
pub fn lop_zero_alpha_value(u: &[f64]) -> f64 {
    (u.len() as f64).sqrt() * norm(u)
}
