//! Trial sweeps over models, measurement counts and noise levels.

use std::io::Write;
use std::time::Instant;

use gmemi_core::solver::{solve, SolveOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConstraintKind, Scenario, TrialConfig};
use crate::error::{BenchError, Result};
use crate::measurements::{gen_measurements, nmse};
use crate::models::{build_problem, ModelKind, ModelParams};
use crate::signals::{gen_block_sparse, gen_piecewise_linear, Profile};

/// Blocks and nonzeros of the block-sparse signal at `n = 256`; other
/// lengths scale the nonzero count.
pub const BLOCKS: usize = 4;
pub const NONZEROS_AT_256: usize = 80;

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub models: Vec<(ModelKind, ModelParams)>,
    pub n: usize,
    pub ds: Vec<usize>,
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub rng_seed: u64,
    pub threshold: f64,
    pub max_iters: usize,
    pub constraint: ConstraintKind,
    /// Record wall-clock time; off gives byte-reproducible CSV.
    pub timing: bool,
}

impl SweepSpec {
    pub fn from_config(cfg: &TrialConfig) -> Self {
        SweepSpec {
            scenario: cfg.scenario,
            models: vec![(cfg.model, cfg.params)],
            n: cfg.n,
            ds: vec![cfg.d],
            snrs_db: vec![cfg.snr_db],
            trials: cfg.trials,
            rng_seed: cfg.rng_seed,
            threshold: cfg.threshold,
            max_iters: cfg.max_iters,
            constraint: cfg.constraint,
            timing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub model: String,
    pub n: usize,
    pub d: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub nmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub final_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRecord {
    pub scenario: String,
    pub model: String,
    pub n: usize,
    pub d: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub mean_nmse: f64,
    pub mean_iterations: f64,
}

fn mix(mut h: u64, v: u64) -> u64 {
    // splitmix64 finalizer over the running hash
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Random stream for one trial. It depends on the data cell and trial index
/// but not on the model, so every model sees the same data.
pub fn trial_rng(rng_seed: u64, scenario: Scenario, n: usize, d: usize, snr_db: f64, trial: usize) -> ChaCha8Rng {
    let mut h = mix(rng_seed, scenario as u64);
    h = mix(h, n as u64);
    h = mix(h, d as u64);
    h = mix(h, snr_db.to_bits());
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    rng.set_stream(trial as u64);
    rng
}

/// Ground truth and measurements for one trial.
pub fn trial_data(
    scenario: Scenario,
    n: usize,
    d: usize,
    snr_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, gmemi_core::DenseMatrix, Vec<f64>)> {
    let x = match scenario {
        Scenario::BlockSparse => {
            let nz = ((NONZEROS_AT_256 * n) as f64 / 256.0).round().max(BLOCKS as f64) as usize;
            gen_block_sparse(n, BLOCKS, nz.min(n), rng)?
        }
        Scenario::PiecewiseLinear => gen_piecewise_linear(n, Profile::Default)?,
        Scenario::PenaltyCurve => {
            return Err(BenchError::Config("the penalty-curve scenario has no trials; use `curve tgv`".into()))
        }
    };
    let (a, y) = gen_measurements(&x, d, snr_db, rng)?;
    Ok((x, a, y))
}

/// Solves one trial. Solver failures are recorded as non-converged trials
/// with the all-zero estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    spec: &SweepSpec,
    model: ModelKind,
    params: &ModelParams,
    d: usize,
    snr_db: f64,
    trial: usize,
) -> Result<TrialRecord> {
    let mut rng = trial_rng(spec.rng_seed, spec.scenario, spec.n, d, snr_db, trial);
    let (x_org, a, y) = trial_data(spec.scenario, spec.n, d, snr_db, &mut rng)?;
    let start = Instant::now();
    let problem = build_problem(model, a, y, params, spec.constraint.to_constraint())?;
    let opts = SolveOptions { threshold: spec.threshold, max_iters: spec.max_iters, ..Default::default() };
    let outcome = problem.select_steps(2.0, 1e-2).and_then(|p| solve(&problem, &p, &opts));
    let wall = if spec.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let (x_hat, iterations, converged, final_residual) = match outcome {
        Ok(sol) if sol.x_star.iter().all(|v| v.is_finite()) => {
            (sol.x_star, sol.iterations, sol.converged, sol.final_residual)
        }
        Ok(sol) => (vec![0.0; spec.n], sol.iterations, false, f64::INFINITY),
        Err(_) => (vec![0.0; spec.n], 0, false, f64::INFINITY),
    };
    Ok(TrialRecord {
        scenario: spec.scenario.name().into(),
        model: model.name().into(),
        n: spec.n,
        d,
        snr_db,
        trial,
        nmse: nmse(&x_org, &x_hat)?,
        iterations,
        converged,
        wall_time_s: wall,
        final_residual,
    })
}

/// All (model, d, snr, trial) combinations in a fixed order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<TrialRecord>> {
    for (kind, params) in &spec.models {
        params.validate(*kind)?;
    }
    let mut out = Vec::new();
    for (kind, params) in &spec.models {
        for &d in &spec.ds {
            for &snr in &spec.snrs_db {
                for t in 0..spec.trials {
                    out.push(run_trial(spec, *kind, params, d, snr, t)?);
                }
            }
        }
    }
    Ok(out)
}

/// Mean NMSE and iteration count per (scenario, model, n, d, snr) cell, in
/// first-seen order.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRecord> {
    let mut out: Vec<(AggregateRecord, f64, f64)> = Vec::new();
    for r in records {
        let key = |a: &AggregateRecord| {
            a.scenario == r.scenario && a.model == r.model && a.n == r.n && a.d == r.d && a.snr_db.to_bits() == r.snr_db.to_bits()
        };
        match out.iter_mut().find(|(a, _, _)| key(a)) {
            Some((a, s, it)) => {
                a.trials += 1;
                *s += r.nmse;
                *it += r.iterations as f64;
            }
            None => out.push((
                AggregateRecord {
                    scenario: r.scenario.clone(),
                    model: r.model.clone(),
                    n: r.n,
                    d: r.d,
                    snr_db: r.snr_db,
                    trials: 1,
                    mean_nmse: 0.0,
                    mean_iterations: 0.0,
                },
                r.nmse,
                r.iterations as f64,
            )),
        }
    }
    out.into_iter()
        .map(|(mut a, s, it)| {
            a.mean_nmse = s / a.trials as f64;
            a.mean_iterations = it / a.trials as f64;
            a
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Coarse oracle tuning: for each model, tries `λ` on a log grid around the
/// given value (and `θ ∈ {0.5, 0.8, 0.95}` for enhanced models) and keeps the
/// setting with the lowest mean NMSE over the sweep's cells and trials.
pub fn tune_grid(spec: &SweepSpec) -> Result<Vec<(ModelKind, ModelParams)>> {
    let mut tuned = Vec::new();
    for (kind, base) in &spec.models {
        let thetas: Vec<f64> = if kind.is_enhanced() { vec![0.5, 0.8, 0.95] } else { vec![base.theta] };
        let mut best: Option<(f64, ModelParams)> = None;
        for scale in [0.25, 0.5, 1.0, 2.0, 4.0] {
            for &theta in &thetas {
                let params = ModelParams { lambda: base.lambda * scale, theta, ..*base };
                let single = SweepSpec { models: vec![(*kind, params)], timing: false, ..spec.clone() };
                let rows = run_sweep(&single)?;
                let mean = rows.iter().map(|r| r.nmse).sum::<f64>() / rows.len() as f64;
                if best.as_ref().is_none_or(|(b, _)| mean < *b) {
                    best = Some((mean, params));
                }
            }
        }
        tuned.push((*kind, best.expect("non-empty grid").1));
    }
    Ok(tuned)
}
