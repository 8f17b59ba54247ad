//! The rank-one metric `G = I + u·uᵀ`.
//!
//! All production operations use the rank-one structure and cost `O(n)`:
//! `det G = 1 + uᵀu` and `G⁻¹x = x − u·(uᵀx)/(1 + uᵀu)`. Since
//! `1 + uᵀu ≥ 1`, none of them need damping.

use crate::math::{dot, DenseMatrix, Recorder};

/// The metric at one point, represented by its rank-one vector `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    u: Vec<f64>,
    g_det: f64,
}

impl MetricPoint {
    pub fn new(u: Vec<f64>) -> Self {
        let g_det = 1.0 + dot(&u, &u);
        Self { u, g_det }
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `det G = 1 + uᵀu`, by the matrix determinant lemma.
    pub fn det(&self) -> f64 {
        self.g_det
    }

    /// Dense `I + uuᵀ`. Oracle use only.
    pub fn matrix(&self) -> DenseMatrix {
        DenseMatrix::identity(self.dim()).add(&DenseMatrix::outer(&self.u, &self.u))
    }

    /// `G⁻¹x` by Sherman–Morrison.
    pub fn inverse_apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "dimension mismatch");
        let coeff = dot(&self.u, x) / self.g_det;
        x.iter().zip(&self.u).map(|(xi, ui)| xi - coeff * ui).collect()
    }

    /// `J = G⁻¹∇f`.
    pub fn regularized_gradient(&self, grad: &[f64]) -> Vec<f64> {
        self.inverse_apply(grad)
    }

    /// `xᵀGy = xᵀy + (uᵀx)(uᵀy)`.
    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, y) + dot(&self.u, x) * dot(&self.u, y)
    }

    /// `Gx = x + u(uᵀx)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let c = dot(&self.u, x);
        x.iter().zip(&self.u).map(|(xi, ui)| xi + c * ui).collect()
    }
}

/// `J = ∇f − u·(uᵀ∇f)/(1 + uᵀu)` with `u` recorded and `∇f` constant.
pub fn regularized_gradient_with<R: Recorder>(r: &mut R, u: &[R::V], grad: &[f64]) -> Vec<R::V> {
    let ug = r.dot_const(u, grad);
    let uu = r.dot(u, u);
    let denom = r.offset(uu, 1.0);
    let coeff = r.div(ug, denom);
    u.iter()
        .zip(grad)
        .map(|(&ui, &gi)| {
            let corr = r.mul(coeff, ui);
            let neg = r.neg(corr);
            r.offset(neg, gi)
        })
        .collect()
}
