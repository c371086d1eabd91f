//! Dense linear algebra substrate.
//!
//! Every matrix in this crate is small enough (a few hundred rows) that dense
//! row-major storage is the right call. Vectors are plain `Vec<f64>` and the
//! free functions below operate on slices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

/// Row-major dense matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        out
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut out = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            out.data[i * n + i] = *d;
        }
        out
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `out = self * x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vector {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = selfᵀ * x`
    pub fn matvec_t_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                axpy(*xi, self.row(i), out);
            }
        }
    }

    pub fn matvec_t(&self, x: &[f64]) -> Vector {
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(x, &mut out);
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * self`
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for k in 0..self.rows {
            let row = self.row(k);
            for i in 0..n {
                if row[i] != 0.0 {
                    axpy(row[i], row, &mut out.data[i * n..(i + 1) * n]);
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> DenseMatrix {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// Adds `c` to every diagonal entry of a square matrix.
    pub fn shift_diagonal(&self, c: f64) -> DenseMatrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out.data[i * self.cols + i] += c;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Writes `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(c: f64, a: &[f64]) -> Vector {
    a.iter().map(|v| c * v).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const POWER_MAX_ITERS: usize = 200_000;
const RESTART_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Spectral norm `max ‖Mx‖ / ‖x‖` by power iteration on `MᵀM`.
///
/// Starts from the normalized all-ones vector and repeats from a fixed
/// pseudo-random start; the larger estimate wins. This covers inputs whose
/// kernel (or a lower singular subspace) contains the all-ones vector, e.g.
/// difference operators.
pub fn operator_norm(m: &DenseMatrix, tol: f64) -> f64 {
    assert!(tol > 0.0, "operator_norm needs a positive tolerance");
    if m.rows() == 0 || m.cols() == 0 || m.max_abs() == 0.0 {
        return 0.0;
    }
    let n = m.cols();
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let random: Vector = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    power_sigma_max(m, ones, tol).max(power_sigma_max(m, random, tol))
}

fn power_sigma_max(m: &DenseMatrix, mut x: Vector, tol: f64) -> f64 {
    let nx = norm(&x);
    if nx == 0.0 {
        return 0.0;
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut mx = vec![0.0; m.rows()];
    let mut w = vec![0.0; m.cols()];
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        m.matvec_into(&x, &mut mx);
        let est = norm(&mx);
        m.matvec_t_into(&mx, &mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            return est;
        }
        if (est - prev).abs() <= tol * est {
            return est;
        }
        prev = est;
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi = wi / nw;
        }
    }
    prev
}

/// Smallest eigenvalue of a symmetric matrix. Empty input yields `+∞`
/// (vacuous positivity).
pub fn min_eigenvalue_symmetric(s: &DenseMatrix, tol: f64) -> Result<f64> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    if !s.is_square() {
        return Err(Error::NotSymmetric(f64::INFINITY));
    }
    let asym = s.asymmetry();
    if asym > 1e-12 * s.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    if s.rows() == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = nalgebra::SymmetricEigen::new(s.to_nalgebra());
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_and_diagonal_norms() {
        assert_abs_diff_eq!(operator_norm(&DenseMatrix::identity(3), 1e-12), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            operator_norm(&DenseMatrix::from_diag(&[3.0, 1.0]), 1e-12),
            3.0,
            epsilon = 1e-10
        );
        assert_eq!(operator_norm(&DenseMatrix::zeros(4, 2), 1e-8), 0.0);
    }

    #[test]
    fn difference_operator_kills_ones_start() {
        // rows (-1, 1): the all-ones start lies in the kernel
        let d = DenseMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(operator_norm(&d, 1e-13), 3f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn min_eig_examples() {
        let d = DenseMatrix::from_diag(&[2.0, 5.0]);
        assert_abs_diff_eq!(min_eigenvalue_symmetric(&d, 1e-12).unwrap(), 2.0, epsilon = 1e-12);
        let z = DenseMatrix::zeros(4, 4);
        assert_abs_diff_eq!(min_eigenvalue_symmetric(&z, 1e-12).unwrap(), 0.0, epsilon = 1e-14);
        let empty = DenseMatrix::zeros(0, 0);
        assert_eq!(min_eigenvalue_symmetric(&empty, 1e-12).unwrap(), f64::INFINITY);
    }

    #[test]
    fn min_eig_rejects_asymmetric() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(min_eigenvalue_symmetric(&m, 1e-12), Err(Error::NotSymmetric(_))));
        assert!(matches!(
            min_eigenvalue_symmetric(&DenseMatrix::zeros(2, 3), 1e-12),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn new_validates() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(DenseMatrix::new(1, 1, vec![f64::NAN]), Err(Error::NonFinite));
    }

    #[test]
    fn products_agree() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0);
        let x = [1.0, -2.0, 0.5, 3.0];
        let ax = a.matvec(&x);
        let at = a.transpose();
        let y = [0.3, -1.0, 2.0];
        assert_abs_diff_eq!(dot(&ax, &y), dot(&x, &at.matvec(&y)), epsilon = 1e-12);
        assert_eq!(a.matvec_t(&y), at.matvec(&y));
        let g = a.gram();
        let g2 = at.matmul(&a).unwrap();
        assert_eq!(g, g2);
        assert!(a.matmul(&a).is_err());
    }
}
