use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmemi_bench::config::{ConstraintKind, Scenario, TrialConfig};
use gmemi_bench::curve::penalty_curve;
use gmemi_bench::error::BenchError;
use gmemi_bench::models::{build_problem, default_params, ModelKind, ModelParams};
use gmemi_bench::sweep::{aggregate, run_sweep, trial_data, trial_rng, tune_grid, write_csv, SweepSpec, TrialRecord};
use gmemi_core::linalg::min_eigenvalue_symmetric;

const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_UNCONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "gmemi", version, about = "Sparse and piecewise-smooth recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials described by a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Write detail.csv and aggregate.csv here instead of stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Sweep models over measurement counts and noise levels.
    #[command(subcommand)]
    Bench(BenchScenario),
    /// Penalty values along the two-piece test signal.
    #[command(subcommand)]
    Curve(CurveKind),
    /// Verify convexity, step conditions and the metric for a config.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchScenario {
    BlockSparse(SweepArgs),
    PiecewiseLinear(SweepArgs),
}

#[derive(Subcommand)]
enum CurveKind {
    Tgv {
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        s: f64,
        /// `BᵀB = b_scale · I`
        #[arg(long, default_value_t = 1.0)]
        b_scale: f64,
        #[arg(long, default_value_t = 0.0)]
        r_start: f64,
        #[arg(long, default_value_t = 5.0)]
        r_stop: f64,
        #[arg(long, default_value_t = 0.25)]
        r_step: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated model names; defaults to the scenario's roster.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    snr_db: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    rng_seed: u64,
    /// Overrides for every selected model.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Tune λ (and θ) per model on a coarse grid before the sweep.
    #[arg(long, conflicts_with = "fixed")]
    grid: bool,
    /// Use the given or default parameters as-is (the default).
    #[arg(long)]
    fixed: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    no_timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                BenchError::Config(_) => EXIT_CONFIG,
                _ => 1,
            })
        }
    }
}

fn run(cli: Cli) -> Result<u8, BenchError> {
    match cli.command {
        Command::Solve { config, out_dir, no_timing } => {
            let cfg = TrialConfig::load(&config).map_err(as_config)?;
            let spec = SweepSpec { timing: !no_timing, ..SweepSpec::from_config(&cfg) };
            let records = run_sweep(&spec)?;
            match out_dir {
                Some(dir) => write_outputs(&dir, "", &records)?,
                None => {
                    write_csv(io::stdout().lock(), &records)?;
                    println!();
                    write_csv(io::stdout().lock(), &aggregate(&records))?;
                }
            }
            Ok(exit_for(&records))
        }
        Command::Bench(BenchScenario::BlockSparse(args)) => bench(Scenario::BlockSparse, args),
        Command::Bench(BenchScenario::PiecewiseLinear(args)) => bench(Scenario::PiecewiseLinear, args),
        Command::Curve(CurveKind::Tgv { alpha, s, b_scale, r_start, r_stop, r_step, tol, out }) => {
            if !(r_step > 0.0) || r_stop < r_start {
                return Err(BenchError::Config("need r_step > 0 and r_stop >= r_start".into()));
            }
            let count = ((r_stop - r_start) / r_step + 1e-9).floor() as usize + 1;
            let grid: Vec<f64> = (0..count).map(|i| r_start + i as f64 * r_step).collect();
            let rows = penalty_curve(alpha, b_scale, &grid, s, tol).map_err(as_config)?;
            match out {
                Some(p) => write_csv(File::create(p)?, &rows)?,
                None => write_csv(io::stdout().lock(), &rows)?,
            }
            Ok(0)
        }
        Command::Check { config } => check(&TrialConfig::load(&config).map_err(as_config)?),
    }
}

fn as_config(e: BenchError) -> BenchError {
    match e {
        BenchError::Core(c) => BenchError::Config(c.to_string()),
        other => other,
    }
}

fn exit_for(records: &[TrialRecord]) -> u8 {
    if records.iter().all(|r| r.converged) {
        0
    } else {
        EXIT_UNCONVERGED
    }
}

fn write_outputs(dir: &Path, prefix: &str, records: &[TrialRecord]) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    write_csv(File::create(dir.join(format!("{prefix}detail.csv")))?, records)?;
    write_csv(File::create(dir.join(format!("{prefix}aggregate.csv")))?, &aggregate(records))?;
    Ok(())
}

fn bench(scenario: Scenario, args: SweepArgs) -> Result<u8, BenchError> {
    let piecewise = scenario == Scenario::PiecewiseLinear;
    let names: Vec<String> = if args.models.is_empty() {
        let list: &[&str] = if piecewise {
            &["gme-tgv", "tgv", "gme-tv", "tv"]
        } else {
            &["gme-lop", "lop", "gme-l21", "l21", "gme-l1", "l1"]
        };
        list.iter().map(|s| s.to_string()).collect()
    } else {
        args.models.clone()
    };
    let mut models = Vec::new();
    for name in &names {
        let kind: ModelKind = name.parse()?;
        let base = default_params(kind);
        let params = ModelParams {
            lambda: args.lambda.unwrap_or(base.lambda),
            alpha: args.alpha.unwrap_or(base.alpha),
            theta: args.theta.unwrap_or(base.theta),
        };
        params.validate(kind)?;
        models.push((kind, params));
    }
    let (n, d, snr) = if piecewise { (128, 100, 30.0) } else { (256, 220, 40.0) };
    let mut spec = SweepSpec {
        scenario,
        models,
        n: args.n.unwrap_or(n),
        ds: if args.d.is_empty() { vec![d] } else { args.d },
        snrs_db: if args.snr_db.is_empty() { vec![snr] } else { args.snr_db },
        trials: args.trials,
        rng_seed: args.rng_seed,
        threshold: args.threshold,
        max_iters: args.max_iters,
        constraint: ConstraintKind::default_for(scenario),
        timing: !args.no_timing,
    };
    if spec.trials == 0 {
        return Err(BenchError::Config("trials must be at least 1".into()));
    }
    if args.grid {
        spec.models = tune_grid(&spec)?;
        for (kind, p) in &spec.models {
            eprintln!("tuned {kind}: lambda={} alpha={} theta={}", p.lambda, p.alpha, p.theta);
        }
    }
    let records = run_sweep(&spec)?;
    write_outputs(&args.out_dir, &format!("{}_", scenario.name()), &records)?;
    Ok(exit_for(&records))
}

/// Builds the first trial's problem and reports every verification margin.
fn check(cfg: &TrialConfig) -> Result<u8, BenchError> {
    let mut rng = trial_rng(cfg.rng_seed, cfg.scenario, cfg.n, cfg.d, cfg.snr_db, 0);
    let (_, a, y) = trial_data(cfg.scenario, cfg.n, cfg.d, cfg.snr_db, &mut rng).map_err(as_config)?;
    let mut out = io::stdout().lock();
    let problem = match build_problem(cfg.model, a, y, &cfg.params, cfg.constraint.to_constraint()) {
        Ok(p) => p,
        Err(BenchError::Core(gmemi_core::Error::NotConvex(e))) => {
            writeln!(out, "overall convexity: FAIL (min eigenvalue of Q = {e:.3e})")?;
            return Ok(EXIT_VERIFY);
        }
        Err(e) => return Err(as_config(e)),
    };
    let mut ok = true;
    writeln!(out, "overall convexity: ok (min eigenvalue of Q = {:.3e})", problem.min_eigenvalue_q())?;
    let params = match problem.select_steps(2.0, 1e-2) {
        Ok(p) => p,
        Err(e) => {
            writeln!(out, "step selection: FAIL ({e})")?;
            return Ok(EXIT_VERIFY);
        }
    };
    writeln!(
        out,
        "steps: kappa={} gamma1={:.6e} gamma2={:.6e} gamma3={:.6e} gamma4={:.6e}",
        params.kappa, params.gamma1, params.gamma2, params.gamma3, params.gamma4
    )?;
    let margins = gmemi_core::design::step_margins(
        problem.a(),
        problem.l(),
        &problem.seed().m_dense(),
        problem.btb(),
        problem.lambda(),
        &params,
    )?;
    for (i, m) in margins.0.iter().enumerate() {
        writeln!(out, "step condition {}: margin {m:.3e}", i + 1)?;
    }
    ok &= margins.all_hold();
    let metric = problem.p_metric(params)?;
    let p_min = min_eigenvalue_symmetric(&metric.to_dense(), 1e-10)?;
    writeln!(out, "metric P: min eigenvalue {p_min:.3e}")?;
    ok &= p_min > 0.0;
    writeln!(out, "{}", if ok { "all checks passed" } else { "verification FAILED" })?;
    Ok(if ok { 0 } else { EXIT_VERIFY })
}
