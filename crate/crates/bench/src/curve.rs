//! Penalty values along the two-piece test signal family.

use gmemi_core::linalg::DenseMatrix;
use gmemi_core::seeds::{difference_matrix_1d, eval_gme_mi_penalty, eval_mi_penalty, make_tgv_seed};
use serde::Serialize;

use crate::error::Result;
use crate::signals::{gen_piecewise_linear, Profile};

pub const CURVE_N: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub r: f64,
    pub s: f64,
    pub alpha: f64,
    /// Empty when the inner evaluation failed.
    pub tgv: Option<f64>,
    pub gme_tgv: Option<f64>,
}

/// TGV and GME-TGV of `Dx` for each `r`, with `BᵀB = b_scale · I`.
pub fn penalty_curve(alpha: f64, b_scale: f64, r_grid: &[f64], s: f64, tol: f64) -> Result<Vec<CurveRow>> {
    let d = difference_matrix_1d(CURVE_N)?;
    let seed = make_tgv_seed(CURVE_N - 1, alpha)?;
    let btb = DenseMatrix::identity(CURVE_N - 1).scaled(b_scale);
    r_grid
        .iter()
        .map(|&r| {
            let x = gen_piecewise_linear(CURVE_N, Profile::JumpRamp { s, r })?;
            let u = d.matvec(&x);
            Ok(CurveRow {
                r,
                s,
                alpha,
                tgv: eval_mi_penalty(&seed, &u, tol).ok(),
                gme_tgv: eval_gme_mi_penalty(&seed, &btb, &u, tol).ok(),
            })
        })
        .collect()
}
