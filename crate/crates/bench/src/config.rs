//! Trial configuration files.

use std::path::Path;

use gmemi_core::Constraint;
use serde::Deserialize;

use crate::error::{BenchError, Result};
use crate::models::{ModelKind, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    BlockSparse,
    PiecewiseLinear,
    PenaltyCurve,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::BlockSparse => "block-sparse",
            Scenario::PiecewiseLinear => "piecewise-linear",
            Scenario::PenaltyCurve => "penalty-curve",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "block-sparse" => Ok(Scenario::BlockSparse),
            "piecewise-linear" => Ok(Scenario::PiecewiseLinear),
            "penalty-curve" => Ok(Scenario::PenaltyCurve),
            _ => Err(BenchError::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintKind {
    WholeSpace,
    Box,
}

impl ConstraintKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "whole-space" => Ok(ConstraintKind::WholeSpace),
            "box" => Ok(ConstraintKind::Box),
            _ => Err(BenchError::Config(format!("unknown constraint {s:?} (expected whole-space or box)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::WholeSpace => "whole-space",
            ConstraintKind::Box => "box",
        }
    }

    /// The box is `[−1, 1]ⁿ`.
    pub fn to_constraint(self) -> Constraint {
        match self {
            ConstraintKind::WholeSpace => Constraint::WholeSpace,
            ConstraintKind::Box => Constraint::Box { lo: -1.0, hi: 1.0 },
        }
    }

    pub fn default_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::PiecewiseLinear => ConstraintKind::Box,
            _ => ConstraintKind::WholeSpace,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    model: String,
    n: usize,
    d: usize,
    snr_db: f64,
    trials: usize,
    rng_seed: u64,
    lambda: f64,
    alpha: f64,
    theta: f64,
    threshold: Option<f64>,
    max_iters: Option<usize>,
    constraint: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub n: usize,
    pub d: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub rng_seed: u64,
    pub params: ModelParams,
    pub threshold: f64,
    pub max_iters: usize,
    pub constraint: ConstraintKind,
}

impl TrialConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        let scenario = Scenario::parse(&raw.scenario)?;
        let model: ModelKind = raw.model.parse()?;
        let params = ModelParams { lambda: raw.lambda, alpha: raw.alpha, theta: raw.theta };
        params.validate(model)?;
        let constraint = match raw.constraint.as_deref() {
            Some(c) => ConstraintKind::parse(c)?,
            None => ConstraintKind::default_for(scenario),
        };
        let cfg = TrialConfig {
            scenario,
            model,
            n: raw.n,
            d: raw.d,
            snr_db: raw.snr_db,
            trials: raw.trials,
            rng_seed: raw.rng_seed,
            params,
            threshold: raw.threshold.unwrap_or(1e-4),
            max_iters: raw.max_iters.unwrap_or(10_000),
            constraint,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(BenchError::Config("d must be at least 1".into()));
        }
        if self.trials < 1 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if self.n < 4 {
            return Err(BenchError::Config(format!("n must be at least 4, got {}", self.n)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(BenchError::Config(format!("invalid snr_db {}", self.snr_db)));
        }
        if !(self.threshold > 0.0) {
            return Err(BenchError::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.max_iters == 0 {
            return Err(BenchError::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}
