//! The averaged operator `T` of the GME-MI model and its fixed-point
//! iteration, with objective evaluation and optimality diagnostics.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::{build_p_metric, verify_overall_convexity, PMetric, StepParams};
use crate::error::{Error, Result};
use crate::linalg::{norm, DenseMatrix, Vector};
use crate::prox::{project_box, prox_conjugate};
use crate::seeds::{
    eval_envelope, eval_mi_penalty_detailed, inner_gap, EnvelopeEvaluation, InnerOptions, MiEvaluation,
    SeedFunction,
};

/// Projection onto the constraint set `C`.
#[derive(Clone)]
pub enum Constraint {
    WholeSpace,
    Box { lo: f64, hi: f64 },
    Custom(Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>),
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::WholeSpace => write!(f, "WholeSpace"),
            Constraint::Box { lo, hi } => write!(f, "Box[{lo}, {hi}]"),
            Constraint::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Constraint {
    pub fn project(&self, x: &[f64]) -> Result<Vector> {
        match self {
            Constraint::WholeSpace => Ok(x.to_vec()),
            Constraint::Box { lo, hi } => project_box(x, *lo, *hi),
            Constraint::Custom(p) => {
                let out = p(x);
                if out.len() != x.len() {
                    return Err(Error::DimensionMismatch("custom projection changed the length".into()));
                }
                Ok(out)
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        let p = self.project(x)?;
        Ok(p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
    }
}

/// One instance of `min_{x∈C} ½‖y − Ax‖² + λ Ψ_B(Lx)`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    a: DenseMatrix,
    y: Vector,
    l: DenseMatrix,
    lambda: f64,
    seed: SeedFunction,
    btb: DenseMatrix,
    constraint: Constraint,
    aty: Vector,
    q: DenseMatrix,
    lt_btb: DenseMatrix,
    lt: DenseMatrix,
    min_eig_q: f64,
}

impl ProblemSpec {
    /// Validates shapes and the overall convexity condition `Q ⪰ O`.
    pub fn new(
        a: DenseMatrix,
        y: Vector,
        l: DenseMatrix,
        lambda: f64,
        seed: SeedFunction,
        btb: DenseMatrix,
        constraint: Constraint,
    ) -> Result<Self> {
        if y.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!("y has {} entries, A has {} rows", y.len(), a.rows())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if l.rows() != seed.m() {
            return Err(Error::DimensionMismatch(format!("L has {} rows, seed expects m = {}", l.rows(), seed.m())));
        }
        if btb.max_abs() > 0.0 && !btb.is_symmetric(1e-12 * btb.max_abs().max(1.0)) {
            return Err(Error::NotSymmetric(btb.asymmetry()));
        }
        let q = crate::design::assemble_q(&a, &l, &btb, lambda)?;
        let scale = a.gram().max_abs().max(1.0);
        let (ok, min_eig_q) = verify_overall_convexity(&q, 1e-8 * scale)?;
        if !ok {
            return Err(Error::NotConvex(min_eig_q));
        }
        let aty = a.matvec_t(&y);
        let lt = l.transpose();
        let lt_btb = lt.matmul(&btb)?;
        Ok(Self { a, y, l, lambda, seed, btb, constraint, aty, q, lt_btb, lt, min_eig_q })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> &SeedFunction {
        &self.seed
    }

    pub fn btb(&self) -> &DenseMatrix {
        &self.btb
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    /// `Q = AᵀA − λLᵀBᵀBL`.
    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn min_eigenvalue_q(&self) -> f64 {
        self.min_eig_q
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Block sizes `(n, l, m, l, m, l, p, p)` of the iterate.
    pub fn state_dims(&self) -> [usize; 8] {
        let (n, m, l, p) = (self.n(), self.seed.m(), self.seed.l(), self.seed.p());
        [n, l, m, l, m, l, p, p]
    }

    /// Step parameters from the closed-form rule.
    pub fn select_steps(&self, kappa: f64, delta: f64) -> Result<StepParams> {
        crate::design::select_step_params(&self.a, &self.l, &self.seed.m_dense(), &self.btb, self.lambda, kappa, delta)
    }

    pub fn p_metric(&self, params: StepParams) -> Result<PMetric> {
        build_p_metric(&self.l, &self.btb, self.seed.coupling(), params, self.lambda)
    }
}

/// The iterate `z = (x, σ, v, τ, r, η, ξ, ζ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Vector,
    pub sigma: Vector,
    pub v: Vector,
    pub tau: Vector,
    pub r: Vector,
    pub eta: Vector,
    pub xi: Vector,
    pub zeta: Vector,
}

impl SolverState {
    pub fn zeros(dims: [usize; 8]) -> Self {
        Self::from_flat(dims, &vec![0.0; dims.iter().sum()])
    }

    /// Splits a flat vector into blocks of the given sizes.
    pub fn from_flat(dims: [usize; 8], flat: &[f64]) -> Self {
        assert_eq!(flat.len(), dims.iter().sum::<usize>(), "flat state has the wrong length");
        let mut off = 0;
        let mut take = |k: usize| {
            let out = flat[off..off + dims[k]].to_vec();
            off += dims[k];
            out
        };
        Self {
            x: take(0),
            sigma: take(1),
            v: take(2),
            tau: take(3),
            r: take(4),
            eta: take(5),
            xi: take(6),
            zeta: take(7),
        }
    }

    pub fn blocks(&self) -> [&Vector; 8] {
        [&self.x, &self.sigma, &self.v, &self.tau, &self.r, &self.eta, &self.xi, &self.zeta]
    }

    pub fn dims(&self) -> [usize; 8] {
        self.blocks().map(|b| b.len())
    }

    pub fn to_flat(&self) -> Vector {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn dot(&self, other: &SolverState) -> f64 {
        self.blocks().iter().zip(other.blocks()).map(|(a, b)| crate::linalg::dot(a, b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self − other`
    pub fn sub(&self, other: &SolverState) -> SolverState {
        self.combine(other, 1.0, -1.0)
    }

    /// `a·self + b·other`
    pub fn combine(&self, other: &SolverState, a: f64, b: f64) -> SolverState {
        let f = |p: &Vector, q: &Vector| p.iter().zip(q).map(|(s, t)| a * s + b * t).collect::<Vector>();
        SolverState {
            x: f(&self.x, &other.x),
            sigma: f(&self.sigma, &other.sigma),
            v: f(&self.v, &other.v),
            tau: f(&self.tau, &other.tau),
            r: f(&self.r, &other.r),
            eta: f(&self.eta, &other.eta),
            xi: f(&self.xi, &other.xi),
            zeta: f(&self.zeta, &other.zeta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// The point `prox_f(r + L(2x̂ − x), η + 2σ̂ − σ)` produced inside one
/// application of `T`. It lies in `dom f` and equals `(Lx, σ)` at a fixed
/// point.
#[derive(Clone, Debug, PartialEq)]
pub struct Shadow {
    pub u: Vector,
    pub sigma: Vector,
}

/// `T(z)`.
pub fn apply_t(state: &SolverState, spec: &ProblemSpec, params: &StepParams) -> Result<SolverState> {
    Ok(apply_t_with_shadow(state, spec, params)?.0)
}

/// `T(z)` together with the [`Shadow`] point of the step.
pub fn apply_t_with_shadow(
    state: &SolverState,
    spec: &ProblemSpec,
    params: &StepParams,
) -> Result<(SolverState, Shadow)> {
    if state.dims() != spec.state_dims() {
        return Err(Error::DimensionMismatch(format!(
            "state blocks {:?}, problem expects {:?}",
            state.dims(),
            spec.state_dims()
        )));
    }
    let StepParams { gamma1, gamma2, gamma3, gamma4, .. } = *params;
    let lam = spec.lambda;
    let seed = &spec.seed;
    let mc = seed.coupling();
    let SolverState { x, sigma, v, tau, r, eta, xi, zeta } = state;

    let qx = spec.q.matvec(x);
    let lbv = spec.lt_btb.matvec(v);
    let ltr = spec.lt.matvec(r);
    let step: Vector = (0..x.len())
        .map(|i| x[i] - gamma1 * (qx[i] - spec.aty[i] + lam * (lbv[i] + ltr[i])))
        .collect();
    let x_hat = spec.constraint.project(&step)?;

    let mt_xi = mc.apply_t(xi);
    let sigma_hat: Vector = (0..sigma.len()).map(|i| sigma[i] - gamma2 * (eta[i] + mt_xi[i])).collect();

    let xbar: Vector = x_hat.iter().zip(x).map(|(a, b)| 2.0 * a - b).collect();
    let u = spec.l.matvec(&xbar);
    let u_minus_v: Vector = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let btb_d = spec.btb.matvec(&u_minus_v);
    let pv: Vector = v.iter().zip(&btb_d).map(|(a, b)| a + gamma3 * b).collect();
    let mt_zeta = mc.apply_t(zeta);
    let pt: Vector = tau.iter().zip(&mt_zeta).map(|(a, b)| a - gamma3 * b).collect();
    let (v_hat, tau_hat) = seed.prox_f(gamma3, &pv, &pt)?;

    // prox_{f*} with unit step: p − prox_f(p)
    let sbar: Vector = sigma_hat.iter().zip(sigma).map(|(a, b)| 2.0 * a - b).collect();
    let pr: Vector = r.iter().zip(&u).map(|(a, b)| a + b).collect();
    let pe: Vector = eta.iter().zip(&sbar).map(|(a, b)| a + b).collect();
    let (su, ss) = seed.prox_f(1.0, &pr, &pe)?;
    let r_hat: Vector = pr.iter().zip(&su).map(|(a, b)| a - b).collect();
    let eta_hat: Vector = pe.iter().zip(&ss).map(|(a, b)| a - b).collect();

    let g = seed.g_operator();
    let msbar = mc.apply(&sbar);
    let pxi: Vector = xi.iter().zip(&msbar).map(|(a, b)| a + b).collect();
    let xi_hat = if pxi.is_empty() { pxi } else { prox_conjugate(&g, 1.0, &pxi)? };

    let tbar: Vector = tau_hat.iter().zip(tau).map(|(a, b)| 2.0 * a - b).collect();
    let mtbar = mc.apply(&tbar);
    let pz: Vector = zeta.iter().zip(&mtbar).map(|(a, b)| a + gamma4 * b).collect();
    let zeta_hat = if pz.is_empty() { pz } else { prox_conjugate(&g, gamma4, &pz)? };

    let next = SolverState {
        x: x_hat,
        sigma: sigma_hat,
        v: v_hat,
        tau: tau_hat,
        r: r_hat,
        eta: eta_hat,
        xi: xi_hat,
        zeta: zeta_hat,
    };
    Ok((next, Shadow { u: su, sigma: ss }))
}

/// Knobs for [`solve`].
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Stop once `‖z_{k+1} − z_k‖` (all eight blocks) drops below this.
    pub threshold: f64,
    pub max_iters: usize,
    /// Relaxation `μ ∈ (0, 1]`: `z_{k+1} = (1 − μ) z_k + μ T(z_k)`.
    pub relaxation: f64,
    pub initial: Option<SolverState>,
    /// Record `‖z_{k+1} − z_k‖` and `‖T z_k − z_k‖_P` per iteration.
    pub record_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { threshold: 1e-4, max_iters: 10_000, relaxation: 1.0, initial: None, record_history: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub residual: f64,
    pub p_residual: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x_star: Vector,
    pub state: SolverState,
    pub shadow: Shadow,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub history: Option<Vec<HistoryEntry>>,
}

/// Iterates `T` from the initial point until the successive difference falls
/// below the threshold or the iteration budget runs out.
pub fn solve(spec: &ProblemSpec, params: &StepParams, opts: &SolveOptions) -> Result<Solution> {
    if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
        return Err(Error::InvalidParameter(format!("relaxation must lie in (0, 1], got {}", opts.relaxation)));
    }
    if !(opts.threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {}", opts.threshold)));
    }
    let mut z = match &opts.initial {
        Some(s) => {
            if s.dims() != spec.state_dims() {
                return Err(Error::DimensionMismatch("initial state has the wrong block sizes".into()));
            }
            s.clone()
        }
        None => SolverState::zeros(spec.state_dims()),
    };
    let metric = if opts.record_history { Some(spec.p_metric(*params)?) } else { None };
    let mut history = opts.record_history.then(Vec::new);
    let mu = opts.relaxation;
    let mut shadow = Shadow { u: vec![0.0; spec.seed.m()], sigma: vec![0.0; spec.seed.l()] };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let (tz, sh) = apply_t_with_shadow(&z, spec, params)?;
        shadow = sh;
        let next = if mu == 1.0 { tz.clone() } else { z.combine(&tz, 1.0 - mu, mu) };
        residual = next.sub(&z).norm();
        if let (Some(h), Some(pm)) = (history.as_mut(), metric.as_ref()) {
            h.push(HistoryEntry { residual, p_residual: pm.norm(&tz.sub(&z)) });
        }
        iterations += 1;
        z = next;
        if !residual.is_finite() {
            break;
        }
        if residual < opts.threshold {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        x_star: z.x.clone(),
        state: z,
        shadow,
        iterations,
        converged,
        final_residual: residual,
        history,
    })
}

/// Evaluates `J(x) = ½‖y − Ax‖² + λΨ_B(Lx)`, `+∞` outside `C`.
pub fn evaluate_objective(spec: &ProblemSpec, x: &[f64], tol: f64) -> Result<f64> {
    ObjectiveEvaluator::new(spec, InnerOptions::new(tol)).eval(x)
}

/// Repeated objective evaluations that warm-start the inner problems from
/// the previous call.
#[derive(Debug)]
pub struct ObjectiveEvaluator<'a> {
    spec: &'a ProblemSpec,
    opts: InnerOptions,
    mi: Option<MiEvaluation>,
    env: Option<EnvelopeEvaluation>,
}

impl<'a> ObjectiveEvaluator<'a> {
    pub fn new(spec: &'a ProblemSpec, opts: InnerOptions) -> Self {
        Self { spec, opts, mi: None, env: None }
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let spec = self.spec;
        if x.len() != spec.n() {
            return Err(Error::DimensionMismatch(format!("x has {} entries, expected {}", x.len(), spec.n())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !spec.constraint.contains(x, 1e-12)? {
            return Ok(f64::INFINITY);
        }
        let ax = spec.a.matvec(x);
        let resid: Vector = spec.y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let data = 0.5 * norm(&resid).powi(2);
        let u = spec.l.matvec(x);
        let mi = eval_mi_penalty_detailed(&spec.seed, &u, &self.opts, self.mi.as_ref())?;
        let env = eval_envelope(&spec.seed, &spec.btb, &u, &self.opts, self.env.as_ref())?;
        let value = data + spec.lambda * (mi.value - env.value);
        self.mi = Some(mi);
        self.env = Some(env);
        Ok(value)
    }
}

/// `f(u, σ) + g(Mσ) − ψ(u)` at the shadow point of a solution; zero for seeds
/// without a latent variable.
pub fn certify_inner_optimality(spec: &ProblemSpec, solution: &Solution, tol: f64) -> Result<f64> {
    if spec.seed.l() == 0 {
        return Ok(0.0);
    }
    inner_gap(&spec.seed, &solution.shadow.u, &solution.shadow.sigma, tol)
}

/// Outcome of [`averagedness_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct AveragednessReport {
    pub trials: usize,
    /// Pairs violating `‖Tz₁ − Tz₂‖_P ≤ ‖z₁ − z₂‖_P` beyond the slack.
    pub nonexpansive_failures: usize,
    /// Pairs violating the averaged inequality beyond the slack.
    pub averaged_failures: usize,
    /// Smallest relative margin of the averaged inequality.
    pub worst_margin: f64,
    /// Smallest relative margin of plain nonexpansiveness.
    pub worst_nonexpansive_margin: f64,
}

impl AveragednessReport {
    pub fn passed(&self) -> bool {
        self.nonexpansive_failures == 0 && self.averaged_failures == 0
    }
}

/// Checks the `κ/(2κ−1)`-averaged inequality in the `P` norm on random
/// state pairs drawn from a seeded generator. Violations are counted, never
/// raised.
pub fn averagedness_check(
    spec: &ProblemSpec,
    params: &StepParams,
    trials: usize,
    rng_seed: u64,
) -> Result<AveragednessReport> {
    const NONEXP_SLACK: f64 = 1e-9;
    const AVG_SLACK: f64 = 1e-8;
    let metric = spec.p_metric(*params)?;
    let alpha = params.averaging_constant();
    let dims = spec.state_dims();
    let total: usize = dims.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = AveragednessReport {
        trials,
        nonexpansive_failures: 0,
        averaged_failures: 0,
        worst_margin: f64::INFINITY,
        worst_nonexpansive_margin: f64::INFINITY,
    };
    for _ in 0..trials {
        let mut draw = || -> SolverState {
            let flat: Vector = (0..total).map(|_| StandardNormal.sample(&mut rng)).collect();
            SolverState::from_flat(dims, &flat)
        };
        let z1 = draw();
        let z2 = draw();
        let t1 = apply_t(&z1, spec, params)?;
        let t2 = apply_t(&z2, spec, params)?;
        let d = z1.sub(&z2);
        let dt = t1.sub(&t2);
        let dr = z1.sub(&t1).sub(&z2.sub(&t2));
        let base = metric.inner(&d, &d);
        let lhs_t = metric.inner(&dt, &dt);
        let lhs_r = metric.inner(&dr, &dr);
        let scale = base.abs().max(f64::MIN_POSITIVE);
        let nonexp = (base - lhs_t) / scale;
        let avg = (base - lhs_t - (1.0 - alpha) / alpha * lhs_r) / scale;
        if nonexp < -NONEXP_SLACK {
            report.nonexpansive_failures += 1;
        }
        if avg < -AVG_SLACK {
            report.averaged_failures += 1;
        }
        report.worst_margin = report.worst_margin.min(avg);
        report.worst_nonexpansive_margin = report.worst_nonexpansive_margin.min(nonexp);
    }
    Ok(report)
}
