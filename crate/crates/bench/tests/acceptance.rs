//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! nonzero if any criterion fails.

use std::io::Write;
use std::time::Instant;

use gmemi_bench::config::{ConstraintKind, Scenario};
use gmemi_bench::curve::penalty_curve;
use gmemi_bench::measurements::nmse;
use gmemi_bench::models::{build_problem, default_params, ModelKind, ModelParams, ROSTER};
use gmemi_bench::sweep::{trial_data, trial_rng};
use gmemi_core::design::{design_b_identity_l, design_btb_difference_l, select_step_params, step_margins};
use gmemi_core::linalg::{dist, norm, norm1, operator_norm, DenseMatrix};
use gmemi_core::prox::{
    perspective_root, project_l1_ball, project_l1_ball_pivot, prox_conjugate, prox_perspective_quad, GroupPartition,
    ProxOperator,
};
use gmemi_core::seeds::{
    difference_matrix_1d, eval_gme_mi_penalty, eval_mi_penalty_detailed, make_lop_seed, make_plain_seed,
    make_tgv_seed, InnerOptions, MiEvaluation, NeighborGraph,
};
use gmemi_core::solver::{
    apply_t, averagedness_check, certify_inner_optimality, solve, ObjectiveEvaluator, Solution, SolveOptions,
};
use gmemi_core::{Constraint, ProblemSpec, SeedFunction, SolverState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Solutions collected along the way for the inner-optimality certificate.
#[derive(Default)]
struct Certified {
    entries: Vec<(String, f64, f64)>,
}

impl Certified {
    fn add(&mut self, label: String, spec: &ProblemSpec, sol: &Solution, tol: f64) {
        if spec.seed().l() == 0 || !sol.converged {
            return;
        }
        let gap = certify_inner_optimality(spec, sol, tol).unwrap_or(f64::INFINITY);
        self.entries.push((label, gap, tol));
    }
}

fn main() {
    let mut certified = Certified::default();
    let criteria: Vec<(usize, &str, Box<dyn FnOnce(&mut Certified) -> Outcome>)> = vec![
        (1, "perspective prox", Box::new(|_| prox_oracle())),
        (2, "l1-ball projection", Box::new(|_| l1_projection())),
        (3, "Moreau pairs", Box::new(|_| moreau_pairs())),
        (4, "designs, steps and metric", Box::new(|_| construction())),
        (5, "averaged nonexpansiveness", Box::new(|_| averagedness())),
        (6, "closed-form envelope anchors", Box::new(|_| closed_forms())),
        (7, "global optimality", Box::new(global_optimality)),
        (8, "desk-scale convergence", Box::new(desk_scale)),
        (9, "TGV penalty curve", Box::new(|_| curve())),
        (10, "enhanced beats baseline", Box::new(orderings)),
        (11, "inner optimality certificate", Box::new(|c: &mut Certified| certificate(c))),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout();
    // ACCEPTANCE_ONLY=7,9 runs a subset
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut ran = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let r = check(&mut certified);
        if !r.pass {
            failed += 1;
        }
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {id:>2} {verdict}  {name}: {} [{:.1}s]", r.detail, start.elapsed().as_secs_f64())
            .unwrap();
        out.flush().unwrap();
    }
    writeln!(out, "acceptance: {} of {ran} criteria passed", ran - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| randn(rng)).collect()
}

fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| randn(rng))
}

fn perspective(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a * a / (2.0 * b) + b / 2.0
    } else if a == 0.0 && b == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Minimizes `g·persp(a, b) + ½(a − u)² + ½(b − s)²` by eliminating `a`
/// (optimal `a = u·b/(b + g)` for fixed `b`) and a golden-section search on
/// the convex profile in `b ≥ 0`.
fn perspective_prox_oracle(u: f64, s: f64, g: f64) -> (f64, f64) {
    let profile = |b: f64| {
        let a = u * b / (b + g);
        g * perspective(a, b) + 0.5 * ((a - u).powi(2) + (b - s).powi(2))
    };
    let (mut lo, mut hi) = (0.0, u.abs() + s.abs() + g + 1.0);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if profile(m1) <= profile(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let b = 0.5 * (lo + hi);
    (u * b / (b + g), b)
}

fn sort_projection(x: &[f64], radius: f64) -> Vec<f64> {
    if x.iter().map(|v| v.abs()).sum::<f64>() <= radius {
        return x.to_vec();
    }
    let mut mu: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let mut theta = 0.0;
    let mut cs = 0.0;
    for (k, m) in mu.iter().enumerate() {
        cs += m;
        let t = (cs - radius) / (k as f64 + 1.0);
        if m - t >= 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| v.signum() * (v.abs() - theta).max(0.0)).collect()
}

/// Smallest eigenvalue by cyclic Jacobi rotations.
fn jacobi_min_eig(s: &DenseMatrix) -> f64 {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    let scale: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().max(1e-300);
    for _ in 0..100 {
        let off: f64 = (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| a[i][j] * a[i][j]).sum::<f64>()).sum();
        if off < 1e-28 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - sn * akq;
                    row[q] = sn * akp + c * akq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for k in 0..n {
                    a[p][k] = c * rp[k] - sn * rq[k];
                    a[q][k] = sn * rp[k] + c * rq[k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}

fn criterion_1_draw(r: &mut ChaCha8Rng) -> (f64, f64, f64) {
    (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(0.05..5.0))
}

fn prox_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (u, s, g) = criterion_1_draw(&mut r);
        let (pu, ps) = prox_perspective_quad(u, s, g).unwrap();
        let (ou, os) = perspective_prox_oracle(u, s, g);
        worst = worst.max((pu - ou).abs()).max((ps - os).abs());
    }
    // the root over many orders of magnitude
    let mut root_worst: f64 = 0.0;
    for _ in 0..1000 {
        let u = 10f64.powf(r.random_range(-4.0..4.0)) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let s = 10f64.powf(r.random_range(-4.0..4.0)) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let g = 10f64.powf(r.random_range(-3.0..3.0));
        let t = perspective_root(u, s, g);
        let (a, p) = (u.abs() / g, 2.0 * s / g + 1.0);
        let res = (t * t * t + p * t - 2.0 * a).abs() / (t * t * t).abs().max((p * t).abs()).max(2.0 * a).max(1.0);
        root_worst = root_worst.max(res);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && root_worst < 1e-8 && secs < 10.0,
        format!("max oracle gap {worst:.1e} (< 1e-6), max relative root residual {root_worst:.1e} (< 1e-8), {secs:.2}s (< 10s)"),
    )
}

fn l1_projection() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p = r.random_range(1..=500);
        let x = randn_vec(&mut r, p);
        let alpha = match k % 10 {
            0 => norm1(&x),
            1 => 0.0,
            _ => r.random_range(0.0..1.5) * norm1(&x),
        };
        let o = sort_projection(&x, alpha);
        for q in [project_l1_ball(&x, alpha).unwrap(), project_l1_ball_pivot(&x, alpha).unwrap()] {
            worst = worst.max(dist(&q, &o) / (p as f64).sqrt()).max(q.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    outcome(worst < 1e-12, format!("max entrywise deviation {worst:.1e} over 1000 vectors (< 1e-12)"))
}

/// Projection onto `{(a, b) : b ≤ ½ − a²/2}`, the domain of the conjugate of
/// the perspective.
fn project_parabola(x: f64, y: f64) -> (f64, f64) {
    if y <= 0.5 - x * x / 2.0 {
        return (x, y);
    }
    // stationary points of the distance along the boundary: a³/2 + (½ + y)a − x = 0
    let c = 0.5 + y;
    let f = |a: f64| a * a * a / 2.0 + c * a - x;
    let bound = 2.0 + x.abs() + c.abs();
    let mut cuts = vec![-bound];
    if c < 0.0 {
        let t = (-2.0 * c / 3.0).sqrt();
        cuts.extend([-t, t]);
    }
    cuts.push(bound);
    let mut best = (f64::INFINITY, x, y);
    for w in cuts.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        if f(lo).signum() == f(hi).signum() && f(lo) != 0.0 && f(hi) != 0.0 {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f(hi) > 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        let b = 0.5 - a * a / 2.0;
        let d = (a - x).powi(2) + (b - y).powi(2);
        if d < best.0 {
            best = (d, a, b);
        }
    }
    (best.1, best.2)
}

/// `prox_{c‖·‖∞}(z)` by bisection on the clipping level.
fn prox_linf(z: &[f64], c: f64) -> Vec<f64> {
    if norm1(z) <= c {
        return vec![0.0; z.len()];
    }
    let (mut lo, mut hi) = (0.0, z.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for _ in 0..200 {
        let t = 0.5 * (lo + hi);
        let excess: f64 = z.iter().map(|v| (v.abs() - t).max(0.0)).sum();
        if excess > c {
            lo = t;
        } else {
            hi = t;
        }
    }
    let t = 0.5 * (lo + hi);
    z.iter().map(|v| v.clamp(-t, t)).collect()
}

fn moreau_pairs() -> Outcome {
    let m = 8;
    let alpha_lop = 1.3;
    let alpha_tgv = 0.3;
    let lop = make_lop_seed(m, alpha_lop, NeighborGraph::chain(m)).unwrap();
    let tgv = make_tgv_seed(m, alpha_tgv).unwrap();
    let part = GroupPartition::contiguous(m, 3).unwrap();
    let plain = make_plain_seed(m, part.clone()).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    let mut check = |op: &dyn Fn(f64, &[f64]) -> Vec<f64>, lib_conj: &dyn Fn(f64, &[f64]) -> Vec<f64>, conj: &dyn Fn(f64, &[f64]) -> Vec<f64>, dim: usize, r: &mut ChaCha8Rng| {
        for _ in 0..500 {
            let gamma = 10f64.powf(r.random_range(-1.5..1.5));
            let x: Vec<f64> = randn_vec(r, dim).iter().map(|v| 3.0 * v).collect();
            let p = op(gamma, &x);
            let scaled: Vec<f64> = x.iter().map(|v| v / gamma).collect();
            let c = conj(1.0 / gamma, &scaled);
            let lc = lib_conj(1.0 / gamma, &scaled);
            for i in 0..dim {
                let s = 1.0 + x[i].abs();
                worst = worst.max((p[i] + gamma * c[i] - x[i]).abs() / s).max(gamma * (c[i] - lc[i]).abs() / s);
            }
        }
    };
    // f of the LOP seed: conjugate is the indicator of a parabolic region per pair
    let lf = lop.f_operator();
    check(
        &|g, x| lf.prox(g, x).unwrap(),
        &|g, x| prox_conjugate(&lf, g, x).unwrap(),
        &|_, x| {
            let mut out = x.to_vec();
            for i in 0..m {
                let (a, b) = project_parabola(x[i], x[m + i]);
                out[i] = a;
                out[m + i] = b;
            }
            out
        },
        2 * m,
        &mut r,
    );
    // g of the LOP seed: the conjugate of the ball indicator is α‖·‖∞
    let lg = lop.g_operator();
    let p = lop.p();
    check(&|g, x| lg.prox(g, x).unwrap(), &|g, x| prox_conjugate(&lg, g, x).unwrap(), &|g, x| prox_linf(x, g * alpha_lop), p, &mut r);
    // f of the TGV seed: conjugate is the indicator of {(t, −t) : |t| ≤ α}
    let tf = tgv.f_operator();
    check(
        &|g, x| tf.prox(g, x).unwrap(),
        &|g, x| prox_conjugate(&tf, g, x).unwrap(),
        &|_, x| {
            let mut out = x.to_vec();
            for i in 0..m {
                let t = ((x[i] - x[m + i]) / 2.0).clamp(-alpha_tgv, alpha_tgv);
                out[i] = t;
                out[m + i] = -t;
            }
            out
        },
        2 * m,
        &mut r,
    );
    // g of the TGV seed: conjugate is the indicator of the ∞-ball of radius 1 − α
    let tg = tgv.g_operator();
    check(
        &|g, x| tg.prox(g, x).unwrap(),
        &|g, x| prox_conjugate(&tg, g, x).unwrap(),
        &|_, x| x.iter().map(|v| v.clamp(-(1.0 - alpha_tgv), 1.0 - alpha_tgv)).collect(),
        tgv.p(),
        &mut r,
    );
    // f of a plain group seed: conjugate is the indicator of per-group balls
    let pf = plain.f_operator();
    check(
        &|g, x| pf.prox(g, x).unwrap(),
        &|g, x| prox_conjugate(&pf, g, x).unwrap(),
        &|_, x| {
            let mut out = x.to_vec();
            for (grp, w) in part.groups().iter().zip(part.weights()) {
                let nrm = grp.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                if nrm > *w {
                    for &i in grp {
                        out[i] *= w / nrm;
                    }
                }
            }
            out
        },
        m,
        &mut r,
    );
    outcome(worst < 1e-10, format!("5 pairs x 500 inputs, max relative defect {worst:.1e} (< 1e-10)"))
}

fn random_lop_or_tgv(r: &mut ChaCha8Rng, differences: bool, n: usize) -> (SeedFunction, DenseMatrix) {
    if differences {
        (make_tgv_seed(n - 1, r.random_range(0.1..0.9)).unwrap(), difference_matrix_1d(n).unwrap())
    } else {
        (make_lop_seed(n, r.random_range(0.1..3.0), NeighborGraph::chain(n)).unwrap(), DenseMatrix::identity(n))
    }
}

fn construction() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(104);
    let (mut q_min, mut margin_min, mut p_min, mut indep_min) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut errors = 0;
    for k in 0..50 {
        let n = r.random_range(4..=14);
        let d = r.random_range(2..=n);
        let a = randn_matrix(&mut r, d, n);
        let lambda = 10f64.powf(r.random_range(-1.0..1.0));
        let theta = if k == 0 { 0.0 } else if k == 1 { 1.0 } else { r.random_range(0.0..=1.0) };
        for differences in [false, true] {
            let (seed, l) = random_lop_or_tgv(&mut r, differences, n);
            let btb = if differences {
                design_btb_difference_l(&a, lambda, theta).unwrap()
            } else {
                design_b_identity_l(&a, lambda, theta).unwrap().gram()
            };
            let q = a.gram().sub(&l.transpose().matmul(&btb).unwrap().matmul(&l).unwrap().scaled(lambda)).unwrap();
            q_min = q_min.min(jacobi_min_eig(&q));
            let md = seed.m_dense();
            let params = match select_step_params(&a, &l, &md, &btb, lambda, 2.0, 1e-2) {
                Ok(p) => p,
                Err(_) => {
                    errors += 1;
                    continue;
                }
            };
            let margins = step_margins(&a, &l, &md, &btb, lambda, &params).unwrap();
            margin_min = margin_min.min(margins.0.iter().copied().fold(f64::INFINITY, f64::min));
            // the four conditions, re-derived here
            let (kappa, g1, g2, g3, g4) = (params.kappa, params.gamma1, params.gamma2, params.gamma3, params.gamma4);
            let c1 = DenseMatrix::identity(n).scaled(1.0 / g1).sub(&a.gram().scaled(kappa / 2.0)).unwrap().sub(&l.gram().scaled(lambda)).unwrap();
            let c2 = DenseMatrix::identity(md.cols()).scaled(1.0 / g2 - 1.0).sub(&md.gram()).unwrap();
            let b_norm = jacobi_min_eig(&btb.scaled(-1.0)).abs();
            let c3 = 1.0 / g3 - (kappa / 2.0 + 2.0 / kappa) * b_norm;
            let c4 = DenseMatrix::identity(md.rows()).scaled(1.0 / g4).sub(&md.transpose().gram().scaled(g3)).unwrap();
            indep_min = indep_min.min(jacobi_min_eig(&c1)).min(jacobi_min_eig(&c2)).min(c3).min(jacobi_min_eig(&c4));
            let spec = ProblemSpec::new(a.clone(), vec![0.0; d], l, lambda, seed, btb, Constraint::WholeSpace).unwrap();
            p_min = p_min.min(jacobi_min_eig(&spec.p_metric(params).unwrap().to_dense()));
        }
    }
    outcome(
        q_min >= -1e-8 && margin_min > 0.0 && indep_min > 0.0 && p_min > 0.0 && errors == 0,
        format!(
            "100 designs: min eig Q {q_min:.1e} (>= -1e-8), min step margin {margin_min:.1e} (independent {indep_min:.1e}), min eig P {p_min:.1e}, selection errors {errors}"
        ),
    )
}

fn random_instance(r: &mut ChaCha8Rng, k: usize) -> ProblemSpec {
    let n = r.random_range(5..=12);
    let d = r.random_range(3..=n);
    let a = randn_matrix(r, d, n);
    let y = randn_vec(r, d);
    let lambda = 10f64.powf(r.random_range(-1.0..0.5));
    let theta = r.random_range(0.0..=1.0);
    let (seed, l, btb) = match k % 3 {
        0 => {
            let (s, l) = random_lop_or_tgv(r, false, n);
            (s, l, design_b_identity_l(&a, lambda, theta).unwrap().gram())
        }
        1 => {
            let (s, l) = random_lop_or_tgv(r, true, n);
            (s, l, design_btb_difference_l(&a, lambda, theta).unwrap())
        }
        _ => (
            make_plain_seed(n, GroupPartition::contiguous(n, 2).unwrap()).unwrap(),
            DenseMatrix::identity(n),
            design_b_identity_l(&a, lambda, theta).unwrap().gram(),
        ),
    };
    let c = if k % 2 == 0 { Constraint::WholeSpace } else { Constraint::Box { lo: -1.0, hi: 1.0 } };
    ProblemSpec::new(a, y, l, lambda, seed, btb, c).unwrap()
}

fn averagedness() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(105);
    let (mut nonexp_worst, mut avg_worst) = (f64::INFINITY, f64::INFINITY);
    let mut library_failures = 0;
    for k in 0..20 {
        let spec = random_instance(&mut r, k);
        let params = spec.select_steps(2.0, 1e-2).unwrap();
        let p = spec.p_metric(params).unwrap().to_dense();
        let alpha = params.averaging_constant();
        let dims = spec.state_dims();
        let total: usize = dims.iter().sum();
        let quad = |v: &[f64]| -> f64 { v.iter().zip(p.matvec(v)).map(|(a, b)| a * b).sum() };
        for _ in 0..100 {
            let z1 = SolverState::from_flat(dims, &randn_vec(&mut r, total));
            let z2 = SolverState::from_flat(dims, &randn_vec(&mut r, total));
            let t1 = apply_t(&z1, &spec, &params).unwrap();
            let t2 = apply_t(&z2, &spec, &params).unwrap();
            let d = z1.sub(&z2).to_flat();
            let dt = t1.sub(&t2).to_flat();
            let dr = z1.sub(&t1).sub(&z2.sub(&t2)).to_flat();
            let base = quad(&d);
            nonexp_worst = nonexp_worst.min((base - quad(&dt)) / base);
            avg_worst = avg_worst.min((base - quad(&dt) - (1.0 - alpha) / alpha * quad(&dr)) / base);
        }
        if !averagedness_check(&spec, &params, 100, k as u64).unwrap().passed() {
            library_failures += 1;
        }
    }
    // negative control: an oversized third step on a normalized LOP instance
    let (n, d, lambda) = (12, 9, 0.4);
    let a = randn_matrix(&mut r, d, n).scaled(1.0 / (d as f64).sqrt());
    let y = randn_vec(&mut r, d);
    let btb = design_b_identity_l(&a, lambda, 0.8).unwrap().gram();
    let seed = make_lop_seed(n, 0.5, NeighborGraph::chain(n)).unwrap();
    let spec = ProblemSpec::new(a, y, DenseMatrix::identity(n), lambda, seed, btb, Constraint::WholeSpace).unwrap();
    let mut bad = spec.select_steps(2.0, 1e-2).unwrap();
    bad.gamma3 *= 100.0;
    let report = averagedness_check(&spec, &bad, 100, 99).unwrap();
    let control = report.nonexpansive_failures + report.averaged_failures;
    outcome(
        nonexp_worst >= -1e-9 && avg_worst >= -1e-8 && library_failures == 0 && control > 0,
        format!(
            "2000 pairs: worst nonexpansive margin {nonexp_worst:.1e} (>= -1e-9), worst averaged margin {avg_worst:.1e} (>= -1e-8); negative control reported {control} failures"
        ),
    )
}

fn rho(gamma: f64, b: f64, t: f64) -> f64 {
    if t <= gamma * b.sqrt() {
        b.sqrt() * t - t * t / (2.0 * gamma)
    } else {
        gamma * b / 2.0
    }
}

fn closed_forms() -> Outcome {
    let m = 6;
    let lop = make_lop_seed(m, 0.0, NeighborGraph::chain(m)).unwrap();
    let l1 = make_plain_seed(m, GroupPartition::singletons(m)).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(106);
    let (mut worst_lop, mut worst_l1): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let gamma = r.random_range(0.3..3.0);
        let scale = 10f64.powf(r.random_range(-1.0..1.0));
        let u: Vec<f64> = randn_vec(&mut r, m).iter().map(|v| scale * v).collect();
        let btb = DenseMatrix::identity(m).scaled(1.0 / gamma);
        let got = eval_gme_mi_penalty(&lop, &btb, &u, 1e-10).unwrap();
        worst_lop = worst_lop.max((got - rho(gamma, m as f64, norm(&u))).abs());
        let got = eval_gme_mi_penalty(&l1, &btb, &u, 1e-10).unwrap();
        let want: f64 = u.iter().map(|v| rho(gamma, 1.0, v.abs())).sum();
        worst_l1 = worst_l1.max((got - want).abs());
    }
    outcome(
        worst_lop < 1e-4 && worst_l1 < 1e-4,
        format!("50 points each: LOP at alpha = 0 off by {worst_lop:.1e}, l1 off by {worst_l1:.1e} (< 1e-4)"),
    )
}

const CRIT7_N: usize = 20;
const CRIT7_D: usize = 15;

fn crit7_problem(kind: ModelKind) -> (ProblemSpec, ModelParams) {
    let scenario = if kind.uses_differences() { Scenario::PiecewiseLinear } else { Scenario::BlockSparse };
    let mut rng = trial_rng(7, scenario, CRIT7_N, CRIT7_D, 30.0, 0);
    let (_, a, y) = trial_data(scenario, CRIT7_N, CRIT7_D, 30.0, &mut rng).unwrap();
    let mut params = default_params(kind);
    match kind {
        // keep the chain constraint active at this size
        ModelKind::GmeLop | ModelKind::Lop => params.alpha = 1.0,
        ModelKind::GmeTgv | ModelKind::Tgv | ModelKind::GmeTv | ModelKind::Tv => params.lambda /= 4.0,
        _ => {}
    }
    let spec = build_problem(kind, a, y, &params, ConstraintKind::default_for(scenario).to_constraint()).unwrap();
    (spec, params)
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projected subgradient on `½‖y − Ax‖² + λ·pen(x)` with steps
/// `min(1, 10/√(k+1))/‖A‖²`; returns the best iterate.
fn projected_subgradient(
    spec: &ProblemSpec,
    iters: usize,
    mut value_and_subgradient: impl FnMut(&[f64], &[f64]) -> (f64, Vec<f64>, Vec<f64>),
    latent_dim: usize,
) -> Vec<f64> {
    let (a, y, lambda) = (spec.a(), spec.y(), spec.lambda());
    let lip = operator_norm(a, 1e-12).powi(2);
    let n = spec.n();
    let (mut x, mut s) = (vec![0.0; n], vec![0.0; latent_dim]);
    let (mut best, mut best_x) = (f64::INFINITY, x.clone());
    for k in 0..iters {
        let resid: Vec<f64> = a.matvec(&x).iter().zip(y).map(|(p, q)| p - q).collect();
        let (pen, gx, gs) = value_and_subgradient(&x, &s);
        let j = 0.5 * norm(&resid).powi(2) + lambda * pen;
        if j < best {
            best = j;
            best_x = x.clone();
        }
        let step = (10.0 / ((k + 1) as f64).sqrt()).min(1.0) / lip;
        let grad: Vec<f64> = a.matvec_t(&resid).iter().zip(&gx).map(|(p, q)| p + lambda * q).collect();
        let next: Vec<f64> = x.iter().zip(&grad).map(|(p, q)| p - step * q).collect();
        x = spec.constraint().project(&next).unwrap();
        for (si, gi) in s.iter_mut().zip(&gs) {
            *si -= step * lambda * gi;
        }
    }
    best_x
}

fn subgradient_oracle(kind: ModelKind, spec: &ProblemSpec, params: &ModelParams) -> Vec<f64> {
    const ITERS: usize = 100_000;
    let l = spec.l().clone();
    match kind {
        ModelKind::L1 | ModelKind::Tv => projected_subgradient(
            spec,
            ITERS,
            |x, _| {
                let u = l.matvec(x);
                let sg: Vec<f64> = u.iter().map(|v| sgn(*v)).collect();
                (norm1(&u), l.matvec_t(&sg), vec![])
            },
            0,
        ),
        ModelKind::L21 => {
            let part = GroupPartition::contiguous(l.rows(), params.alpha as usize).unwrap();
            projected_subgradient(
                spec,
                ITERS,
                |x, _| {
                    let mut g = vec![0.0; x.len()];
                    let mut pen = 0.0;
                    for (grp, w) in part.groups().iter().zip(part.weights()) {
                        let nrm = grp.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                        pen += w * nrm;
                        if nrm > 0.0 {
                            for &i in grp {
                                g[i] = w * x[i] / nrm;
                            }
                        }
                    }
                    (pen, g, vec![])
                },
                0,
            )
        }
        ModelKind::Tgv => {
            // jointly over (x, σ): α‖Dx − σ‖₁ + (1 − α)‖Mσ‖₁
            let alpha = params.alpha;
            let md = spec.seed().m_dense();
            projected_subgradient(
                spec,
                ITERS,
                |x, s| {
                    let w: Vec<f64> = l.matvec(x).iter().zip(s).map(|(a, b)| a - b).collect();
                    let ms = md.matvec(s);
                    let sw: Vec<f64> = w.iter().map(|v| sgn(*v)).collect();
                    let sm: Vec<f64> = ms.iter().map(|v| sgn(*v)).collect();
                    let gx: Vec<f64> = l.matvec_t(&sw).iter().map(|v| alpha * v).collect();
                    let gs: Vec<f64> = sw.iter().zip(md.matvec_t(&sm)).map(|(a, b)| -alpha * a + (1.0 - alpha) * b).collect();
                    (alpha * norm1(&w) + (1.0 - alpha) * norm1(&ms), gx, gs)
                },
                md.cols(),
            )
        }
        ModelKind::Lop => {
            // each step needs an inner solve that slows down as x settles
            const LOP_ITERS: usize = 2_000;
            let seed = spec.seed().clone();
            let opts = InnerOptions { tol: 1e-6, max_iters: 1_000_000 };
            let mut warm: Option<MiEvaluation> = None;
            projected_subgradient(
                spec,
                LOP_ITERS,
                |x, _| {
                    let e = eval_mi_penalty_detailed(&seed, x, &opts, warm.as_ref()).unwrap();
                    let out = (e.value, e.subgradient.clone(), vec![]);
                    warm = Some(e);
                    out
                },
                0,
            )
        }
        _ => unreachable!("oracle only for baselines"),
    }
}

fn global_optimality(certified: &mut Certified) -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(107);
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in ROSTER {
        let start = Instant::now();
        let (spec, params) = crit7_problem(kind);
        let steps = spec.select_steps(2.0, 1e-2).unwrap();
        let opts = SolveOptions { threshold: 1e-10, max_iters: 3_000_000, ..Default::default() };
        let sol = solve(&spec, &steps, &opts).unwrap();
        certified.add(format!("{kind} n={CRIT7_N}"), &spec, &sol, 1e-9);
        let mut fine = ObjectiveEvaluator::new(&spec, InnerOptions { tol: 1e-9, max_iters: 200_000 });
        let mut coarse = ObjectiveEvaluator::new(&spec, InnerOptions { tol: 1e-8, max_iters: 2_000_000 });
        // the inner solver can stall just above 1e-9 at some points
        let mut eval = |x: &[f64]| fine.eval(x).or_else(|_| coarse.eval(x)).unwrap();
        let j_star = eval(&sol.x_star);
        let mut worst = f64::INFINITY;
        let n = spec.n();
        let boxed = matches!(spec.constraint(), Constraint::Box { .. });
        let spread = norm(&sol.x_star) / (n as f64).sqrt() + 0.1;
        for _ in 0..200 {
            let x: Vec<f64> = if boxed {
                (0..n).map(|_| r.random_range(-1.0..=1.0)).collect()
            } else {
                randn_vec(&mut r, n).iter().map(|v| 2.0 * spread * v).collect()
            };
            worst = worst.min(eval(&x) - j_star);
        }
        for _ in 0..100 {
            let dir = randn_vec(&mut r, n);
            let dn = norm(&dir);
            let x: Vec<f64> = sol.x_star.iter().zip(&dir).map(|(a, b)| a + 1e-2 * b / dn).collect();
            let x = spec.constraint().project(&x).unwrap();
            worst = worst.min(eval(&x) - j_star);
        }
        let mut line = format!("{kind}: {} its, min J(x) - J(x*) {worst:.1e}", sol.iterations);
        let mut ok = sol.converged && worst >= -1e-6;
        if !kind.is_enhanced() {
            let xo = subgradient_oracle(kind, &spec, &params);
            let e = nmse(&sol.x_star, &xo).unwrap();
            line.push_str(&format!(", oracle NMSE {e:.1e}"));
            ok &= e < 1e-3;
        }
        eprintln!("  {line} [{:.1}s]", start.elapsed().as_secs_f64());
        pass &= ok;
        lines.push(line);
    }
    outcome(pass, format!("n={CRIT7_N}, d={CRIT7_D}; {}", lines.join("; ")))
}

fn desk_scale(certified: &mut Certified) -> Outcome {
    let (n, d, snr) = (256, 220, 40.0);
    let mut rng = trial_rng(1, Scenario::BlockSparse, n, d, snr, 0);
    let (x, a, y) = trial_data(Scenario::BlockSparse, n, d, snr, &mut rng).unwrap();
    let start = Instant::now();
    let spec = build_problem(ModelKind::GmeLop, a, y, &default_params(ModelKind::GmeLop), Constraint::WholeSpace).unwrap();
    let steps = spec.select_steps(2.0, 1e-2).unwrap();
    let sol = solve(&spec, &steps, &SolveOptions { threshold: 1e-4, max_iters: 10_000, ..Default::default() }).unwrap();
    let secs = start.elapsed().as_secs_f64();
    certified.add("gme-lop n=256".into(), &spec, &sol, 1e-4);
    outcome(
        sol.converged && secs < 60.0,
        format!(
            "gme-lop n={n} d={d} {snr} dB: residual {:.1e} after {} iterations (limit 10000), {secs:.1}s (< 60s), NMSE {:.1e}",
            sol.final_residual,
            sol.iterations,
            nmse(&x, &sol.x_star).unwrap()
        ),
    )
}

fn curve() -> Outcome {
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
    let rows = penalty_curve(0.2, 1.0, &grid, 0.1, 1e-9).unwrap();
    let tgv: Vec<f64> = rows.iter().map(|r| r.tgv.unwrap_or(f64::NAN)).collect();
    let gme: Vec<f64> = rows.iter().map(|r| r.gme_tgv.unwrap_or(f64::NAN)).collect();
    let increasing = tgv.windows(2).all(|w| w[1] > w[0]);
    // first grid index from which the enhanced curve stays within 1%
    let flat_from = (0..gme.len() - 3).find(|&k| {
        let tail = &gme[k..];
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        lo > 0.0 && hi <= 1.01 * lo
    });
    outcome(
        increasing && flat_from.is_some(),
        format!(
            "TGV strictly increasing: {increasing} ({:.3} to {:.3}); GME-TGV rises from {:.4} and is flat within 1% from r* = {}",
            tgv[0],
            tgv[tgv.len() - 1],
            gme[0],
            flat_from.map_or("none".into(), |k| format!("{} (value {:.4})", grid[k], gme[k]))
        ),
    )
}

fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn orderings(certified: &mut Certified) -> Outcome {
    const TRIALS: usize = 20;
    const RNG_SEED: u64 = 2024;
    let pairs = [
        (ModelKind::GmeLop, ModelKind::Lop, Scenario::BlockSparse, 256, 220, 40.0),
        (ModelKind::GmeTgv, ModelKind::Tgv, Scenario::PiecewiseLinear, 128, 100, 30.0),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (enhanced, base, scenario, n, d, snr) in pairs {
        let mut errs = [Vec::new(), Vec::new()];
        let mut unconverged = 0;
        for t in 0..TRIALS {
            let mut rng = trial_rng(RNG_SEED, scenario, n, d, snr, t);
            let (x, a, y) = trial_data(scenario, n, d, snr, &mut rng).unwrap();
            for (slot, kind) in [enhanced, base].into_iter().enumerate() {
                let c = ConstraintKind::default_for(scenario).to_constraint();
                let spec = build_problem(kind, a.clone(), y.clone(), &default_params(kind), c).unwrap();
                let steps = spec.select_steps(2.0, 1e-2).unwrap();
                let opts = SolveOptions { threshold: 1e-4, max_iters: 40_000, ..Default::default() };
                let sol = solve(&spec, &steps, &opts).unwrap();
                if !sol.converged {
                    unconverged += 1;
                }
                certified.add(format!("{kind} trial {t}"), &spec, &sol, 1e-4);
                errs[slot].push(nmse(&x, &sol.x_star).unwrap());
            }
        }
        let (me, se) = mean_sem(&errs[0]);
        let (mb, sb) = mean_sem(&errs[1]);
        let diffs: Vec<f64> = errs[1].iter().zip(&errs[0]).map(|(b, e)| b - e).collect();
        let (_, sd) = mean_sem(&diffs);
        let ok = me < mb && mb - me > se.max(sb);
        pass &= ok;
        lines.push(format!(
            "{enhanced} {me:.3e} (sem {se:.1e}) vs {base} {mb:.3e} (sem {sb:.1e}) at d={d}/{snr} dB, gap {:.1e}, paired sem {sd:.1e}, unconverged {unconverged}",
            mb - me
        ));
    }
    outcome(pass, format!("{TRIALS} trials; {}", lines.join("; ")))
}

fn certificate(certified: &Certified) -> Outcome {
    let violations: Vec<String> = certified
        .entries
        .iter()
        .filter(|(_, gap, tol)| !(*gap <= 10.0 * tol))
        .map(|(label, gap, tol)| format!("{label} gap {gap:.1e} at tol {tol:.0e}"))
        .collect();
    let worst = certified.entries.iter().max_by(|a, b| (a.1 / a.2).total_cmp(&(b.1 / b.2)));
    let (worst_label, worst_ratio) = worst.map_or(("none", 0.0), |(l, g, t)| (l.as_str(), g / t));
    outcome(
        !certified.entries.is_empty() && violations.is_empty(),
        format!(
            "{} converged latent-seed solutions, worst gap/tol {worst_ratio:.2} (<= 10) at {worst_label}{}",
            certified.entries.len(),
            if violations.is_empty() { String::new() } else { format!("; violations: {}", violations.join(", ")) }
        ),
    )
}
