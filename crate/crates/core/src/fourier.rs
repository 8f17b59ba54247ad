//! Truncated Fourier bases and the low-frequency scaling/rotation maps that
//! build `u(θ) = S·R·θ`.
//!
//! `R` is applied matrix-free in `O(n·m̃)`:
//! `R x = x + Ω((cos σ̃ − 1) ∘ c) − Φ(sin σ̃ ∘ c)` with `c = Ωᵀx`.
//! Components of `x` orthogonal to the columns of `Ω` pass through untouched.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{dense::Svd, matrix_exp, svd, DenseMatrix, Eval, Recorder};

/// Cosine basis `Ω` and sine basis `Φ`, both `n × m̃`, frequencies `1..=m̃`.
#[derive(Debug, Clone)]
pub struct FourierPair {
    n: usize,
    m_tilde: usize,
    /// `omega[i][j] = √(2/n)·cos(2π(i+1)j/n)`; one inner vector per column.
    omega: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    gram_error: f64,
}

/// Low-frequency amplitudes `ω̃` and phases `σ̃` produced by the metric network.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams {
    pub omega_tilde: Vec<f64>,
    pub sigma_tilde: Vec<f64>,
}

impl TransformParams {
    pub fn zeros(m_tilde: usize) -> Self {
        Self { omega_tilde: vec![0.0; m_tilde], sigma_tilde: vec![0.0; m_tilde] }
    }
}

fn basis_column(n: usize, freq: usize, f: fn(f64) -> f64) -> Vec<f64> {
    let amp = (2.0 / n as f64).sqrt();
    (0..n)
        .map(|j| amp * f(2.0 * PI * freq as f64 * j as f64 / n as f64))
        .collect()
}

fn gram_error(cols: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in cols.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            let g: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

impl FourierPair {
    pub fn new(n: usize, m_tilde: usize) -> Result<Self> {
        if m_tilde == 0 || m_tilde >= n {
            return Err(Error::BadDimensions(format!("need 1 <= m_tilde < n, got m_tilde={m_tilde}, n={n}")));
        }
        let omega: Vec<Vec<f64>> = (1..=m_tilde).map(|i| basis_column(n, i, f64::cos)).collect();
        let phi: Vec<Vec<f64>> = (1..=m_tilde).map(|i| basis_column(n, i, f64::sin)).collect();
        let gram = gram_error(&omega).max(gram_error(&phi));
        Ok(Self { n, m_tilde, omega, phi, gram_error: gram })
    }

    /// Every non-degenerate frequency `1..n/2` of an even-length signal. The
    /// cosine and sine columns are then exactly orthonormal, which makes the
    /// phase-shift behaviour of `rotate` exactly testable.
    pub fn full_frame(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::BadDimensions(format!("full frame needs even n >= 4, got {n}")));
        }
        Self::new(n, n / 2 - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_tilde(&self) -> usize {
        self.m_tilde
    }

    pub fn gram_error(&self) -> f64 {
        self.gram_error
    }

    pub fn omega_column(&self, i: usize) -> &[f64] {
        &self.omega[i]
    }

    pub fn phi_column(&self, i: usize) -> &[f64] {
        &self.phi[i]
    }

    pub fn omega_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.m_tilde, |j, i| self.omega[i][j])
    }

    pub fn phi_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.m_tilde, |j, i| self.phi[i][j])
    }

    fn check_dims(&self, m: usize, x: Option<usize>) {
        assert_eq!(m, self.m_tilde, "expected {} low-frequency coefficients", self.m_tilde);
        if let Some(len) = x {
            assert_eq!(len, self.n, "expected an {}-vector", self.n);
        }
    }
}

/// `ω = Ω·ω̃`, recorded.
pub fn scaling_vector_with<R: Recorder>(r: &mut R, fp: &FourierPair, omega_tilde: &[R::V]) -> Vec<R::V> {
    fp.check_dims(omega_tilde.len(), None);
    (0..fp.n)
        .map(|j| {
            let coeffs: Vec<f64> = fp.omega.iter().map(|col| col[j]).collect();
            r.dot_const(omega_tilde, &coeffs)
        })
        .collect()
}

/// `R·x` without materializing `R`, recorded.
pub fn rotate_with<R: Recorder>(r: &mut R, fp: &FourierPair, sigma_tilde: &[R::V], x: &[R::V]) -> Vec<R::V> {
    fp.check_dims(sigma_tilde.len(), Some(x.len()));
    let mut cos_part = Vec::with_capacity(fp.m_tilde);
    let mut sin_part = Vec::with_capacity(fp.m_tilde);
    for (i, &s) in sigma_tilde.iter().enumerate() {
        let c = r.dot_const(x, &fp.omega[i]);
        let cs = r.cos(s);
        let cs = r.offset(cs, -1.0);
        let sn = r.sin(s);
        cos_part.push(r.mul(cs, c));
        sin_part.push(r.mul(sn, c));
    }
    (0..fp.n)
        .map(|j| {
            let mut acc = x[j];
            for i in 0..fp.m_tilde {
                acc = r.fma_const(acc, cos_part[i], fp.omega[i][j]);
                acc = r.fma_const(acc, sin_part[i], -fp.phi[i][j]);
            }
            acc
        })
        .collect()
}

/// `u = ω ∘ (R·θ)`, i.e. `S·R·θ` with `S = Diag(Ω·ω̃)`, recorded.
pub fn build_u_with<R: Recorder>(
    r: &mut R,
    fp: &FourierPair,
    omega_tilde: &[R::V],
    sigma_tilde: &[R::V],
    theta: &[R::V],
) -> Vec<R::V> {
    let omega = scaling_vector_with(r, fp, omega_tilde);
    let rotated = rotate_with(r, fp, sigma_tilde, theta);
    omega.iter().zip(&rotated).map(|(&w, &x)| r.mul(w, x)).collect()
}

pub fn scaling_vector(fp: &FourierPair, omega_tilde: &[f64]) -> Vec<f64> {
    scaling_vector_with(&mut Eval, fp, omega_tilde)
}

pub fn rotate(fp: &FourierPair, sigma_tilde: &[f64], x: &[f64]) -> Vec<f64> {
    rotate_with(&mut Eval, fp, sigma_tilde, x)
}

pub fn build_u(fp: &FourierPair, tp: &TransformParams, theta: &[f64]) -> Vec<f64> {
    build_u_with(&mut Eval, fp, &tp.omega_tilde, &tp.sigma_tilde, theta)
}

/// Dense `R = Ω Σ̃c Ωᵀ − Φ Σ̃s Ωᵀ + I − ΩΩᵀ`. Oracle use only.
pub fn rotation_matrix_dense(fp: &FourierPair, sigma_tilde: &[f64]) -> DenseMatrix {
    fp.check_dims(sigma_tilde.len(), None);
    let om = fp.omega_matrix();
    let ph = fp.phi_matrix();
    let cos: Vec<f64> = sigma_tilde.iter().map(|s| s.cos()).collect();
    let sin: Vec<f64> = sigma_tilde.iter().map(|s| s.sin()).collect();
    let omt = om.transpose();
    let rc = om.matmul(&DenseMatrix::diag(&cos)).matmul(&omt);
    let rs = ph.matmul(&DenseMatrix::diag(&sin)).matmul(&omt);
    rc.sub(&rs).add(&DenseMatrix::identity(fp.n)).sub(&om.matmul(&omt))
}

/// Minimum separation required between distinct singular-value clusters.
pub const SPECTRAL_GAP: f64 = 1e-6;

/// Checks `exp(A) = U·Σc·Uᵀ − V·Σs·Uᵀ` for antisymmetric `A`, with
/// `(U, σ, V)` the SVD of `A`. Returns the largest entrywise deviation.
///
/// Singular values of a real antisymmetric matrix always come in equal
/// pairs (plus a zero for odd order), so equality within a pair is expected.
/// Distinct clusters closer than [`SPECTRAL_GAP`] make the numerical SVD
/// ill-determined and are rejected as degenerate.
pub fn check_exp_decomposition(a: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::BadDimensions("antisymmetric input must be square".into()));
    }
    let n = a.rows();
    if n > 16 {
        return Err(Error::BadDimensions(format!("n <= 16 required, got {n}")));
    }
    let skew = a.add(&a.transpose()).max_abs();
    if skew > 1e-12 * a.max_abs().max(1.0) {
        return Err(Error::BadDimensions(format!("matrix is not antisymmetric (|A + Aᵀ| = {skew:e})")));
    }
    let Svd { u, s, v } = svd(a)?;
    let gap = min_cluster_gap(&s);
    if gap < SPECTRAL_GAP {
        return Err(Error::DegenerateSpectrum { gap });
    }
    let cos: Vec<f64> = s.iter().map(|x| x.cos()).collect();
    let sin: Vec<f64> = s.iter().map(|x| x.sin()).collect();
    let ut = u.transpose();
    let lhs = u
        .matmul(&DenseMatrix::diag(&cos))
        .matmul(&ut)
        .sub(&v.matmul(&DenseMatrix::diag(&sin)).matmul(&ut));
    Ok(lhs.max_abs_diff(&matrix_exp(a)?))
}

/// Smallest gap between adjacent clusters of (descending) singular values,
/// where values within `1e-9·max(1, s_max)` of each other form one cluster.
/// Returns infinity when there is a single cluster.
fn min_cluster_gap(s: &[f64]) -> f64 {
    let tie = 1e-9 * s.first().copied().unwrap_or(0.0).max(1.0);
    let mut reps: Vec<f64> = Vec::new();
    for &x in s {
        match reps.last() {
            Some(&last) if (last - x).abs() <= tie => {}
            _ => reps.push(x),
        }
    }
    reps.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
}
