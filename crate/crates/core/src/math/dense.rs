//! Small dense real matrices.
//!
//! Everything here is meant for desk-scale sizes (n ≤ 64): the production
//! paths of the metric never build an n×n matrix, these routines back the
//! oracles that check them.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

const SINGULAR_PIVOT: f64 = 1e-14;
const JACOBI_SWEEPS: usize = 50;
const EXP_TAYLOR_DEGREE: usize = 12;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::BadDimensions(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
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

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// `a bᵀ`
    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn require_square(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::BadDimensions(format!("{what} needs a square matrix, got {}x{}", m.rows, m.cols)))
    }
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn dense_inverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(m, "inverse")?;
    let n = m.rows;
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty pivot range");
        if pivot.abs() < SINGULAR_PIVOT {
            return Err(Error::SingularMatrix { pivot: pivot.abs() });
        }
        if pivot_row != col {
            swap_rows(&mut a, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= factor * a[(col, j)];
                inv[(r, j)] -= factor * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    for j in 0..m.cols {
        m.data.swap(a * m.cols + j, b * m.cols + j);
    }
}

/// Determinant by LU elimination with partial pivoting. Singular input gives 0.
pub fn dense_det(m: &DenseMatrix) -> Result<f64> {
    require_square(m, "determinant")?;
    let n = m.rows;
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty pivot range");
        if pivot == 0.0 {
            return Ok(0.0);
        }
        if pivot_row != col {
            swap_rows(&mut a, pivot_row, col);
            det = -det;
        }
        det *= pivot;
        for r in col + 1..n {
            let factor = a[(r, col)] / pivot;
            for j in col..n {
                a[(r, j)] -= factor * a[(col, j)];
            }
        }
    }
    Ok(det)
}

/// Solves `M x = b` through the explicit inverse. Oracle use only.
pub fn dense_solve(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(dense_inverse(m)?.matvec(b))
}

/// Singular value decomposition `M = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.s.len();
        let us = DenseMatrix::from_fn(self.u.rows(), n, |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose())
    }
}

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Singular values come back non-negative and sorted in descending order.
/// Columns of `U` belonging to zero singular values are completed to an
/// orthonormal basis.
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    require_square(m, "svd")?;
    let n = m.rows;
    if n > 64 {
        return Err(Error::BadDimensions(format!("svd is limited to n <= 64, got {n}")));
    }
    // Work on columns: w = M V, orthogonalize pairs of columns of w.
    let mut w = m.transpose(); // row k of `w` holds column k of M V
    let mut v = DenseMatrix::identity(n); // row k holds column k of V
    let tol = 1e-15;
    let mut converged = n < 2;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (alpha, beta, gamma) = {
                    let wi = w.row(i);
                    let wj = w.row(j);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (x, y) in wi.iter().zip(wj) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, i, j, c, s);
                rotate_rows(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: JACOBI_SWEEPS });
    }

    let norms: Vec<f64> = (0..n).map(|k| w.row(k).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let s_max = norms[order[0]];
    let zero_tol = 1e-13 * s_max.max(f64::MIN_POSITIVE);

    let mut u = DenseMatrix::zeros(n, n);
    let mut vout = DenseMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut filled = Vec::new();
    for (slot, &k) in order.iter().enumerate() {
        vout.set_column(slot, v.row(k));
        let sigma = norms[k];
        if sigma > zero_tol {
            let col: Vec<f64> = w.row(k).iter().map(|x| x / sigma).collect();
            u.set_column(slot, &col);
            filled.push(slot);
            s.push(sigma);
        } else {
            s.push(0.0);
        }
    }
    complete_orthonormal_columns(&mut u, &filled);
    Ok(Svd { u, s, v: vout })
}

fn rotate_rows(m: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64) {
    let cols = m.cols;
    for k in 0..cols {
        let a = m.data[i * cols + k];
        let b = m.data[j * cols + k];
        m.data[i * cols + k] = c * a - s * b;
        m.data[j * cols + k] = s * a + c * b;
    }
}

/// Fills columns not listed in `filled` with an orthonormal completion
/// (Gram–Schmidt over the standard basis, twice for stability).
fn complete_orthonormal_columns(u: &mut DenseMatrix, filled: &[usize]) {
    let n = u.rows();
    let mut basis: Vec<Vec<f64>> = filled.iter().map(|&j| u.column(j)).collect();
    let missing: Vec<usize> = (0..u.cols()).filter(|j| !filled.contains(j)).collect();
    let mut candidate = 0;
    for slot in missing {
        loop {
            assert!(candidate < n, "ran out of completion candidates");
            let mut x = vec![0.0; n];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for b in &basis {
                    let proj: f64 = b.iter().zip(&x).map(|(p, q)| p * q).sum();
                    for (xi, bi) in x.iter_mut().zip(b) {
                        *xi -= proj * bi;
                    }
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-8 {
                x.iter_mut().for_each(|v| *v /= norm);
                u.set_column(slot, &x);
                basis.push(x);
                break;
            }
        }
    }
}

/// Matrix exponential by scaling and squaring with a degree-12 Taylor series.
pub fn matrix_exp(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "matrix_exp")?;
    let n = a.rows;
    let norm = a.inf_norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings));
    // Horner: I + A(I + A/2(I + A/3(...)))
    let id = DenseMatrix::identity(n);
    let mut acc = id.clone();
    for k in (1..=EXP_TAYLOR_DEGREE).rev() {
        acc = id.add(&scaled.matmul(&acc).scale(1.0 / k as f64));
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    Ok(acc)
}
