//! Convexity-preserving choices of `BᵀB`, the matrix `Q`, step parameters
//! and the metric `P` in which the splitting operator is averaged.

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue_symmetric, operator_norm, DenseMatrix, Vector};
use crate::seeds::{cumsum_matrix, Coupling};
use crate::solver::SolverState;

const EIG_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;

fn check_theta_lambda(lambda: f64, theta: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok(())
}

/// `B = √(θ/λ) A`, so that `Q = (1 − θ)AᵀA` when `L = I`.
pub fn design_b_identity_l(a: &DenseMatrix, lambda: f64, theta: f64) -> Result<DenseMatrix> {
    check_theta_lambda(lambda, theta)?;
    Ok(a.scaled((theta / lambda).sqrt()))
}

/// `BᵀB = (θ/λ) Hᵀ(I − hh†)H` with `[h H] = A S_1d`, for `L = D_1d`.
///
/// `h†` is taken as zero when `‖h‖ ≤ 1e-12 ‖A‖_op`.
pub fn design_btb_difference_l(a: &DenseMatrix, lambda: f64, theta: f64) -> Result<DenseMatrix> {
    check_theta_lambda(lambda, theta)?;
    let n = a.cols();
    if n < 2 {
        return Err(Error::DimensionMismatch(format!("difference design needs n >= 2, got {n}")));
    }
    let as1d = a.matmul(&cumsum_matrix(n)?)?;
    let d = a.rows();
    let h: Vector = (0..d).map(|i| as1d.get(i, 0)).collect();
    let big_h = DenseMatrix::from_fn(d, n - 1, |i, j| as1d.get(i, j + 1));
    let hn = crate::linalg::norm(&h);
    let mut proj = big_h.clone();
    if hn > 1e-12 * operator_norm(a, NORM_TOL) {
        // (I − hhᵀ/‖h‖²) H
        let coef = big_h.matvec_t(&h);
        let hh = hn * hn;
        for i in 0..d {
            for j in 0..n - 1 {
                proj.set(i, j, big_h.get(i, j) - h[i] * coef[j] / hh);
            }
        }
    }
    // Hᵀ(I − hh†)H = ((I − hh†)H)ᵀ((I − hh†)H) since the projector is idempotent.
    let mut btb = proj.gram().scaled(theta / lambda);
    symmetrize(&mut btb);
    Ok(btb)
}

fn symmetrize(s: &mut DenseMatrix) {
    let n = s.rows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (s.get(i, j) + s.get(j, i));
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
}

/// `Q = AᵀA − λ LᵀBᵀBL`.
pub fn assemble_q(a: &DenseMatrix, l: &DenseMatrix, btb: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if l.cols() != a.cols() || btb.rows() != l.rows() || btb.cols() != l.rows() {
        return Err(Error::DimensionMismatch(format!(
            "A {}×{}, L {}×{}, BᵀB {}×{}",
            a.rows(),
            a.cols(),
            l.rows(),
            l.cols(),
            btb.rows(),
            btb.cols()
        )));
    }
    let lt_btb_l = l.transpose().matmul(&btb.matmul(l)?)?;
    let mut q = a.gram().sub(&lt_btb_l.scaled(lambda))?;
    symmetrize(&mut q);
    Ok(q)
}

/// `(λ_min(Q) ≥ −tol, λ_min(Q))`.
pub fn verify_overall_convexity(q: &DenseMatrix, tol: f64) -> Result<(bool, f64)> {
    let e = min_eigenvalue_symmetric(q, EIG_TOL)?;
    Ok((e >= -tol, e))
}

/// `κ` and the four step sizes, plus the slack `δ` used to pick them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub delta: f64,
}

impl StepParams {
    /// `κ/(2κ − 1)`
    pub fn averaging_constant(&self) -> f64 {
        self.kappa / (2.0 * self.kappa - 1.0)
    }
}

/// Smallest eigenvalue of each of the four step conditions; all must be
/// positive (the third is allowed to be zero).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMargins(pub [f64; 4]);

impl StepMargins {
    pub fn all_hold(&self) -> bool {
        self.0[0] > 0.0 && self.0[1] > 0.0 && self.0[2] >= 0.0 && self.0[3] > 0.0
    }

    pub fn first_violation(&self) -> Option<usize> {
        (0..4).find(|&i| if i == 2 { self.0[i] < 0.0 } else { self.0[i] <= 0.0 }).map(|i| i + 1)
    }
}

/// The closed-form step selection with `‖B‖² = ‖BᵀB‖`, re-verified by
/// eigenvalue checks.
pub fn select_step_params(
    a: &DenseMatrix,
    l: &DenseMatrix,
    m: &DenseMatrix,
    btb: &DenseMatrix,
    lambda: f64,
    kappa: f64,
    delta: f64,
) -> Result<StepParams> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must exceed 1, got {kappa}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let h1 = a.gram().scaled(kappa / 2.0).add(&l.gram().scaled(lambda))?;
    let m_norm = operator_norm(m, NORM_TOL);
    let c = kappa / 2.0 + 2.0 / kappa;
    let gamma1 = 1.0 / (operator_norm(&h1, NORM_TOL) + delta);
    let gamma2 = 1.0 / (m_norm * m_norm + 1.0 + delta);
    let gamma3 = 1.0 / (c * operator_norm(btb, NORM_TOL) + delta);
    let gamma4 = 1.0 / (gamma3 * m_norm * m_norm + delta);
    let params = StepParams { kappa, gamma1, gamma2, gamma3, gamma4, delta };
    let margins = step_margins(a, l, m, btb, lambda, &params)?;
    match margins.first_violation() {
        None => Ok(params),
        Some(index) => Err(Error::StepCondition { index, margin: margins.0[index - 1] }),
    }
}

/// Evaluates the four step conditions for arbitrary parameters.
pub fn step_margins(
    a: &DenseMatrix,
    l: &DenseMatrix,
    m: &DenseMatrix,
    btb: &DenseMatrix,
    lambda: f64,
    params: &StepParams,
) -> Result<StepMargins> {
    let StepParams { kappa, gamma1, gamma2, gamma3, gamma4, .. } = *params;
    let n = a.cols();
    let c1 = DenseMatrix::identity(n)
        .scaled(1.0 / gamma1)
        .sub(&a.gram().scaled(kappa / 2.0))?
        .sub(&l.gram().scaled(lambda))?;
    let c2 = DenseMatrix::identity(m.cols()).scaled(1.0 / gamma2 - 1.0).sub(&m.gram())?;
    let c = kappa / 2.0 + 2.0 / kappa;
    let c3 = DenseMatrix::identity(btb.rows()).scaled(1.0 / (gamma3 * c)).sub(btb)?;
    let c4 = DenseMatrix::identity(m.rows()).scaled(1.0 / gamma4).sub(&m.transpose().gram().scaled(gamma3))?;
    let eig = |s: &DenseMatrix, empty: f64| -> Result<f64> {
        if s.rows() == 0 {
            Ok(empty)
        } else {
            let mut s = s.clone();
            symmetrize(&mut s);
            min_eigenvalue_symmetric(&s, EIG_TOL)
        }
    };
    Ok(StepMargins([
        eig(&c1, 1.0 / gamma1)?,
        eig(&c2, 1.0 / gamma2 - 1.0)?,
        eig(&c3, 1.0 / (gamma3 * c))? * c,
        eig(&c4, 1.0 / gamma4)?,
    ]))
}

/// The metric `P` of the splitting operator, applied matrix-free; dense
/// blocks are assembled on demand.
#[derive(Clone, Debug)]
pub struct PMetric {
    lambda: f64,
    params: StepParams,
    l: DenseMatrix,
    btb: DenseMatrix,
    lt_btb: DenseMatrix,
    coupling: Coupling,
}

pub fn build_p_metric(
    l: &DenseMatrix,
    btb: &DenseMatrix,
    coupling: &Coupling,
    params: StepParams,
    lambda: f64,
) -> Result<PMetric> {
    if btb.rows() != l.rows() || btb.cols() != l.rows() {
        return Err(Error::DimensionMismatch("BᵀB must be m×m with m = rows(L)".into()));
    }
    Ok(PMetric {
        lambda,
        params,
        l: l.clone(),
        btb: btb.clone(),
        lt_btb: l.transpose().matmul(btb)?,
        coupling: coupling.clone(),
    })
}

impl PMetric {
    pub fn params(&self) -> &StepParams {
        &self.params
    }

    /// `P z`
    pub fn apply(&self, z: &SolverState) -> SolverState {
        let lam = self.lambda;
        let StepParams { gamma1, gamma2, gamma3, gamma4, .. } = self.params;
        let mc = &self.coupling;
        let btb_v = self.lt_btb.matvec(&z.v);
        let lt_r = self.l.matvec_t(&z.r);
        let x = (0..z.x.len()).map(|i| z.x[i] / gamma1 - lam * btb_v[i] - lam * lt_r[i]).collect();
        let mt_xi = mc.apply_t(&z.xi);
        let sigma = (0..z.sigma.len()).map(|i| lam / gamma2 * z.sigma[i] - lam * z.eta[i] - lam * mt_xi[i]).collect();
        let lx = self.l.matvec(&z.x);
        let btb_lx = self.btb.matvec(&lx);
        let v = (0..z.v.len()).map(|i| lam / gamma3 * z.v[i] - lam * btb_lx[i]).collect();
        let mt_zeta = mc.apply_t(&z.zeta);
        let tau = (0..z.tau.len()).map(|i| lam / gamma3 * z.tau[i] - lam * mt_zeta[i]).collect();
        let r = (0..z.r.len()).map(|i| lam * (z.r[i] - lx[i])).collect();
        let eta = (0..z.eta.len()).map(|i| lam * (z.eta[i] - z.sigma[i])).collect();
        let m_sigma = mc.apply(&z.sigma);
        let xi = (0..z.xi.len()).map(|i| lam * (z.xi[i] - m_sigma[i])).collect();
        let m_tau = mc.apply(&z.tau);
        let zeta = (0..z.zeta.len()).map(|i| lam / gamma4 * z.zeta[i] - lam * m_tau[i]).collect();
        SolverState { x, sigma, v, tau, r, eta, xi, zeta }
    }

    /// `⟨z₁, P z₂⟩`
    pub fn inner(&self, z1: &SolverState, z2: &SolverState) -> f64 {
        z1.dot(&self.apply(z2))
    }

    /// `‖z‖_P`
    pub fn norm(&self, z: &SolverState) -> f64 {
        self.inner(z, z).max(0.0).sqrt()
    }

    /// `P₁` over `(x, v, r)`.
    pub fn p1_dense(&self) -> DenseMatrix {
        let (n, m) = (self.l.cols(), self.l.rows());
        let lam = self.lambda;
        let mut p = DenseMatrix::zeros(n + 2 * m, n + 2 * m);
        p.set_block(0, 0, &DenseMatrix::identity(n).scaled(1.0 / self.params.gamma1));
        p.set_block(0, n, &self.lt_btb.scaled(-lam));
        p.set_block(n, 0, &self.lt_btb.transpose().scaled(-lam));
        p.set_block(0, n + m, &self.l.transpose().scaled(-lam));
        p.set_block(n + m, 0, &self.l.scaled(-lam));
        p.set_block(n, n, &DenseMatrix::identity(m).scaled(lam / self.params.gamma3));
        p.set_block(n + m, n + m, &DenseMatrix::identity(m).scaled(lam));
        p
    }

    /// `P₂` over `(σ, η, ξ)`.
    pub fn p2_dense(&self) -> DenseMatrix {
        let (l, p) = (self.coupling.cols(), self.coupling.rows());
        let md = self.coupling.to_dense();
        let lam = self.lambda;
        let mut out = DenseMatrix::zeros(2 * l + p, 2 * l + p);
        out.set_block(0, 0, &DenseMatrix::identity(l).scaled(lam / self.params.gamma2));
        out.set_block(0, l, &DenseMatrix::identity(l).scaled(-lam));
        out.set_block(l, 0, &DenseMatrix::identity(l).scaled(-lam));
        out.set_block(l, l, &DenseMatrix::identity(l).scaled(lam));
        out.set_block(0, 2 * l, &md.transpose().scaled(-lam));
        out.set_block(2 * l, 0, &md.scaled(-lam));
        out.set_block(2 * l, 2 * l, &DenseMatrix::identity(p).scaled(lam));
        out
    }

    /// `P₃` over `(τ, ζ)`.
    pub fn p3_dense(&self) -> DenseMatrix {
        let (l, p) = (self.coupling.cols(), self.coupling.rows());
        let md = self.coupling.to_dense();
        let lam = self.lambda;
        let mut out = DenseMatrix::zeros(l + p, l + p);
        out.set_block(0, 0, &DenseMatrix::identity(l).scaled(lam / self.params.gamma3));
        out.set_block(0, l, &md.transpose().scaled(-lam));
        out.set_block(l, 0, &md.scaled(-lam));
        out.set_block(l, l, &DenseMatrix::identity(p).scaled(lam / self.params.gamma4));
        out
    }

    /// Full `P` in the natural block order `(x, σ, v, τ, r, η, ξ, ζ)`,
    /// assembled column by column from [`apply`](Self::apply).
    pub fn to_dense(&self) -> DenseMatrix {
        let (n, m, l, p) = (self.l.cols(), self.l.rows(), self.coupling.cols(), self.coupling.rows());
        let dims = [n, l, m, l, m, l, p, p];
        let dim = dims.iter().sum();
        let mut out = DenseMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut e = vec![0.0; dim];
            e[c] = 1.0;
            let col = self.apply(&SolverState::from_flat(dims, &e)).to_flat();
            for (r, v) in col.into_iter().enumerate() {
                out.set(r, c, v);
            }
        }
        out
    }
}
