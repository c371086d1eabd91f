//! The regularization models compared in the experiments.

use std::fmt;
use std::str::FromStr;

use gmemi_core::design::{design_b_identity_l, design_btb_difference_l};
use gmemi_core::linalg::DenseMatrix;
use gmemi_core::prox::GroupPartition;
use gmemi_core::seeds::{difference_matrix_1d, make_lop_seed, make_plain_seed, make_tgv_seed, NeighborGraph};
use gmemi_core::{Constraint, ProblemSpec, SeedFunction};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    GmeLop,
    Lop,
    GmeL21,
    L21,
    GmeL1,
    L1,
    GmeTgv,
    Tgv,
    GmeTv,
    Tv,
}

pub const ROSTER: [ModelKind; 10] = [
    ModelKind::GmeLop,
    ModelKind::Lop,
    ModelKind::GmeL21,
    ModelKind::L21,
    ModelKind::GmeL1,
    ModelKind::L1,
    ModelKind::GmeTgv,
    ModelKind::Tgv,
    ModelKind::GmeTv,
    ModelKind::Tv,
];

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GmeLop => "gme-lop",
            ModelKind::Lop => "lop",
            ModelKind::GmeL21 => "gme-l21",
            ModelKind::L21 => "l21",
            ModelKind::GmeL1 => "gme-l1",
            ModelKind::L1 => "l1",
            ModelKind::GmeTgv => "gme-tgv",
            ModelKind::Tgv => "tgv",
            ModelKind::GmeTv => "gme-tv",
            ModelKind::Tv => "tv",
        }
    }

    pub fn is_enhanced(self) -> bool {
        matches!(self, ModelKind::GmeLop | ModelKind::GmeL21 | ModelKind::GmeL1 | ModelKind::GmeTgv | ModelKind::GmeTv)
    }

    /// Models built on first differences (`L = D`) rather than `L = I`.
    pub fn uses_differences(self) -> bool {
        matches!(self, ModelKind::GmeTgv | ModelKind::Tgv | ModelKind::GmeTv | ModelKind::Tv)
    }

    /// The convex counterpart of an enhanced model (itself for baselines).
    pub fn baseline(self) -> ModelKind {
        match self {
            ModelKind::GmeLop => ModelKind::Lop,
            ModelKind::GmeL21 => ModelKind::L21,
            ModelKind::GmeL1 => ModelKind::L1,
            ModelKind::GmeTgv => ModelKind::Tgv,
            ModelKind::GmeTv => ModelKind::Tv,
            other => other,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        ROSTER
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| BenchError::Config(format!("unknown model {s:?}")))
    }
}

/// `λ`, `α` and `θ`. For the `l21` pair `alpha` is the block size; `θ` is
/// ignored by baselines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub lambda: f64,
    pub alpha: f64,
    pub theta: f64,
}

impl ModelParams {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(BenchError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if kind.is_enhanced() && !(0.0..=1.0).contains(&self.theta) {
            return Err(BenchError::Config(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        match kind {
            ModelKind::GmeLop | ModelKind::Lop if !(self.alpha >= 0.0 && self.alpha.is_finite()) => {
                Err(BenchError::Config(format!("LOP alpha must be nonnegative, got {}", self.alpha)))
            }
            ModelKind::GmeTgv | ModelKind::Tgv if !(self.alpha > 0.0 && self.alpha < 1.0) => {
                Err(BenchError::Config(format!("TGV alpha must lie in (0, 1), got {}", self.alpha)))
            }
            ModelKind::GmeL21 | ModelKind::L21 if !(self.alpha >= 1.0 && self.alpha.fract() == 0.0) => {
                Err(BenchError::Config(format!("block size must be a positive integer, got {}", self.alpha)))
            }
            _ => Ok(()),
        }
    }

    fn effective_theta(&self, kind: ModelKind) -> f64 {
        if kind.is_enhanced() {
            self.theta
        } else {
            0.0
        }
    }
}

/// Parameters tuned on a few trials of each model's home scenario
/// (block-sparse at d = 220 and 40 dB, piecewise-linear at d = 100 and 30 dB).
pub fn default_params(kind: ModelKind) -> ModelParams {
    let (lambda, alpha, theta) = match kind {
        ModelKind::GmeLop => (2.0, 8.0, 0.8),
        ModelKind::Lop => (0.5, 15.0, 0.0),
        ModelKind::GmeL21 => (2.0, 4.0, 0.8),
        ModelKind::L21 => (0.5, 4.0, 0.0),
        ModelKind::GmeL1 => (2.0, 0.0, 0.8),
        ModelKind::L1 => (0.5, 0.0, 0.0),
        ModelKind::GmeTgv => (32.0, 0.2, 0.3),
        ModelKind::Tgv => (32.0, 0.2, 0.0),
        ModelKind::GmeTv => (8.0, 0.0, 0.3),
        ModelKind::Tv => (4.0, 0.0, 0.0),
    };
    ModelParams { lambda, alpha, theta }
}

fn seed_for(kind: ModelKind, m: usize, params: &ModelParams) -> Result<SeedFunction> {
    Ok(match kind {
        ModelKind::GmeLop | ModelKind::Lop => make_lop_seed(m, params.alpha, NeighborGraph::chain(m))?,
        ModelKind::GmeL21 | ModelKind::L21 => {
            make_plain_seed(m, GroupPartition::contiguous(m, params.alpha as usize)?)?
        }
        ModelKind::GmeL1 | ModelKind::L1 | ModelKind::GmeTv | ModelKind::Tv => {
            make_plain_seed(m, GroupPartition::singletons(m))?
        }
        ModelKind::GmeTgv | ModelKind::Tgv => make_tgv_seed(m, params.alpha)?,
    })
}

/// Assembles the problem: seed, `L`, and `BᵀB` from the matching design.
pub fn build_problem(
    kind: ModelKind,
    a: DenseMatrix,
    y: Vec<f64>,
    params: &ModelParams,
    constraint: Constraint,
) -> Result<ProblemSpec> {
    params.validate(kind)?;
    let n = a.cols();
    let theta = params.effective_theta(kind);
    let (l, btb) = if kind.uses_differences() {
        (difference_matrix_1d(n)?, design_btb_difference_l(&a, params.lambda, theta)?)
    } else {
        (DenseMatrix::identity(n), design_b_identity_l(&a, params.lambda, theta)?.gram())
    };
    let seed = seed_for(kind, l.rows(), params)?;
    Ok(ProblemSpec::new(a, y, l, params.lambda, seed, btb, constraint)?)
}
