//! Divergence of the regularized gradient field `J = G⁻¹∇f` under the metric
//! `G = I + uuᵀ`, exact and stochastic, plus the brute-force oracles it is
//! checked against.
//!
//! For the rank-one metric the coordinate divergence
//! `(1/√g)·Σ_μ ∂_μ(√g·J^μ)` collapses to
//!
//! ```text
//! Div J = Σ_μ ∂J^μ/∂θ^μ + (1/(1+uᵀu))·Σ_μ J^μ Σ_ν u^ν ∂u^ν/∂θ^μ
//! ```
//!
//! The second sum is `uᵀ(D_J u)`, one directional derivative along `J`, which
//! is what lets the estimator work at any dimension. All θ-derivatives are
//! central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::christoffel_fd;
use crate::math::{
    all_finite, axpy, dense_det, dense_inverse, dot, norm_inf, rademacher_probe, sub, RngStream,
};
use crate::metric::MetricPoint;

/// Floor applied to the Hessian trace in [`divergence_ratio`].
pub const RATIO_FLOOR: f64 = 1e-12;

/// Relative finite-difference step used when none is configured.
pub fn default_fd_step(theta: &[f64]) -> f64 {
    1e-4 * (1.0 + norm_inf(theta))
}

/// The vector field `J(θ) = G(θ)⁻¹∇f(θ)` given by its two ingredients.
pub struct FieldEvaluator<G, U> {
    n: usize,
    grad_fn: G,
    u_fn: U,
}

impl<G, U> FieldEvaluator<G, U>
where
    G: Fn(&[f64]) -> Vec<f64>,
    U: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(n: usize, grad_fn: G, u_fn: U) -> Self {
        Self { n, grad_fn, u_fn }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        checked((self.grad_fn)(theta), self.n)
    }

    pub fn u(&self, theta: &[f64]) -> Result<Vec<f64>> {
        checked((self.u_fn)(theta), self.n)
    }

    pub fn metric(&self, theta: &[f64]) -> Result<MetricPoint> {
        Ok(MetricPoint::new(self.u(theta)?))
    }

    /// `(u(θ), J(θ))`.
    pub fn field(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.u(theta)?;
        let j = MetricPoint::new(u.clone()).regularized_gradient(&self.grad(theta)?);
        Ok((u, j))
    }
}

fn checked(v: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if v.len() != n {
        return Err(Error::BadDimensions(format!("field returned {} values, expected {n}", v.len())));
    }
    if !all_finite(&v) {
        return Err(Error::NonFiniteField);
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub probe_count: usize,
    /// Finite-difference step; `None` means `1e-4·(1 + ‖θ‖∞)`.
    pub fd_step: Option<f64>,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { probe_count: 64, fd_step: None, seed: 0 }
    }
}

impl ProbeConfig {
    pub fn new(probe_count: usize, seed: u64) -> Self {
        Self { probe_count, fd_step: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probe_count == 0 {
            return Err(Error::InvalidConfig("probe_count must be >= 1".into()));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig("fd_step must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn step_for(&self, theta: &[f64]) -> f64 {
        self.fd_step.unwrap_or_else(|| default_fd_step(theta))
    }

    /// The probe vectors for this configuration; same seed, same probes.
    pub fn probes(&self, n: usize) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(self.seed);
        (0..self.probe_count).map(|_| rademacher_probe(&mut rng, n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceMethod {
    Exact,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub div: f64,
    pub hessian_trace: f64,
    pub ratio: f64,
    pub method: DivergenceMethod,
    pub probe_count: usize,
    pub probe_seed: u64,
}

impl DivergenceReport {
    pub fn new(div: f64, hessian_trace: f64, method: DivergenceMethod, pc: &ProbeConfig) -> Self {
        Self {
            div,
            hessian_trace,
            ratio: divergence_ratio(div, hessian_trace),
            method,
            probe_count: pc.probe_count,
            probe_seed: pc.seed,
        }
    }
}

/// `|div| / max(|trace|, 1e-12)`.
pub fn divergence_ratio(div: f64, trace: f64) -> f64 {
    div.abs() / trace.abs().max(RATIO_FLOOR)
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Divergence from the closed form with every coordinate partial taken by
/// central differences (2n field evaluations).
pub fn divergence_exact<G, U>(fe: &FieldEvaluator<G, U>, theta: &[f64], fd_step: f64) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
    U: Fn(&[f64]) -> Vec<f64>,
{
    let n = fe.dim();
    let (u0, j0) = fe.field(theta)?;
    let g_det = 1.0 + dot(&u0, &u0);
    let mut trace = 0.0;
    let mut correction = 0.0;
    for mu in 0..n {
        let e = unit(n, mu);
        let (up, jp) = fe.field(&axpy(theta, fd_step, &e))?;
        let (um, jm) = fe.field(&axpy(theta, -fd_step, &e))?;
        trace += (jp[mu] - jm[mu]) / (2.0 * fd_step);
        let du: Vec<f64> = sub(&up, &um).iter().map(|d| d / (2.0 * fd_step)).collect();
        correction += j0[mu] * dot(&u0, &du);
    }
    Ok(trace + correction / g_det)
}

/// Step along `J` used for the directional derivative `D_J u`, scaled by the
/// Euclidean gradient. `‖J‖ ≤ ‖∇f‖` because `G⁻¹` only contracts, so the
/// displacement stays at finite-difference size, and the step does not
/// depend on the metric (it is a constant when differentiating over `φ`).
pub fn directional_step(fd_step: f64, grad: &[f64]) -> f64 {
    fd_step / norm_inf(grad).max(1.0)
}

/// Stochastic divergence: Hutchinson probes for the Jacobian trace, and one
/// directional derivative along `J` for the metric correction.
pub fn divergence_estimate<G, U>(fe: &FieldEvaluator<G, U>, theta: &[f64], pc: &ProbeConfig) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
    U: Fn(&[f64]) -> Vec<f64>,
{
    pc.validate()?;
    divergence_with_probes(fe, theta, &pc.probes(fe.dim()), pc.step_for(theta))
}

/// [`divergence_estimate`] with explicitly supplied probe vectors.
pub fn divergence_with_probes<G, U>(
    fe: &FieldEvaluator<G, U>,
    theta: &[f64],
    probes: &[Vec<f64>],
    fd_step: f64,
) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
    U: Fn(&[f64]) -> Vec<f64>,
{
    if probes.is_empty() {
        return Err(Error::InvalidConfig("at least one probe is required".into()));
    }
    let (u0, j0) = fe.field(theta)?;
    let mut trace = 0.0;
    for v in probes {
        let (_, jp) = fe.field(&axpy(theta, fd_step, v))?;
        let (_, jm) = fe.field(&axpy(theta, -fd_step, v))?;
        trace += (dot(v, &jp) - dot(v, &jm)) / (2.0 * fd_step);
    }
    trace /= probes.len() as f64;
    let h = directional_step(fd_step, &fe.grad(theta)?);
    let up = fe.u(&axpy(theta, h, &j0))?;
    let um = fe.u(&axpy(theta, -h, &j0))?;
    let dju = (dot(&u0, &up) - dot(&u0, &um)) / (2.0 * h);
    Ok(trace + dju / (1.0 + dot(&u0, &u0)))
}

/// Hutchinson estimate of `tr ∇²f` from gradient differences.
pub fn hessian_trace_hutchinson<G>(grad_fn: G, theta: &[f64], pc: &ProbeConfig) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    pc.validate()?;
    hessian_trace_with_probes(grad_fn, theta, &pc.probes(theta.len()), pc.step_for(theta))
}

pub fn hessian_trace_with_probes<G>(grad_fn: G, theta: &[f64], probes: &[Vec<f64>], fd_step: f64) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if probes.is_empty() {
        return Err(Error::InvalidConfig("at least one probe is required".into()));
    }
    let n = theta.len();
    let mut acc = 0.0;
    for v in probes {
        let gp = checked(grad_fn(&axpy(theta, fd_step, v)), n)?;
        let gm = checked(grad_fn(&axpy(theta, -fd_step, v)), n)?;
        acc += (dot(v, &gp) - dot(v, &gm)) / (2.0 * fd_step);
    }
    Ok(acc / probes.len() as f64)
}

const ORACLE_OUTER_STEP: f64 = 1e-3;
const ORACLE_INNER_STEP: f64 = 1e-4;

fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64], h: f64) -> Vec<f64> {
    let n = theta.len();
    (0..n)
        .map(|i| {
            let e = unit(n, i);
            (f(&axpy(theta, h, &e)) - f(&axpy(theta, -h, &e))) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = theta.len();
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let ei = unit(n, i);
            let ej = unit(n, j);
            let at = |si: f64, sj: f64| f(&axpy(&axpy(theta, si * h, &ei), sj * h, &ej));
            let v = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// `(1/√g)·Σ_μ ∂_μ(√g·J^μ)` from the scalar objective, with the dense metric,
/// its dense inverse and determinant, and nested central differences.
pub fn laplace_beltrami_oracle<F, U>(f: F, u_fn: U, theta: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    U: Fn(&[f64]) -> Vec<f64>,
{
    let n = theta.len();
    let weighted_field = |x: &[f64]| -> Result<Vec<f64>> {
        let g = MetricPoint::new(checked(u_fn(x), n)?).matrix();
        let sqrt_det = dense_det(&g)?.sqrt();
        let j = dense_inverse(&g)?.matvec(&fd_gradient(&f, x, ORACLE_INNER_STEP));
        Ok(j.into_iter().map(|v| sqrt_det * v).collect())
    };
    let h = ORACLE_OUTER_STEP;
    let mut acc = 0.0;
    for mu in 0..n {
        let e = unit(n, mu);
        let p = weighted_field(&axpy(theta, h, &e))?;
        let m = weighted_field(&axpy(theta, -h, &e))?;
        acc += (p[mu] - m[mu]) / (2.0 * h);
    }
    let sqrt_det = dense_det(&MetricPoint::new(checked(u_fn(theta), n)?).matrix())?.sqrt();
    Ok(acc / sqrt_det)
}

/// `Σ_{μν} g^{μν}(∂_μ∂_ν f − Σ_λ Γ^λ_{μν} ∂_λ f)`, the metric trace of the
/// covariant Hessian.
pub fn covariant_laplacian_oracle<F, U>(f: F, u_fn: U, theta: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    U: Fn(&[f64]) -> Vec<f64>,
{
    let n = theta.len();
    let g_inv = dense_inverse(&MetricPoint::new(checked(u_fn(theta), n)?).matrix())?;
    let grad = fd_gradient(&f, theta, ORACLE_INNER_STEP);
    let hess = fd_hessian(&f, theta, ORACLE_OUTER_STEP);
    let gamma = christoffel_fd(&u_fn, theta, ORACLE_OUTER_STEP)?;
    let mut acc = 0.0;
    for mu in 0..n {
        for nu in 0..n {
            let conn: f64 = (0..n).map(|l| gamma.get(l, mu, nu) * grad[l]).sum();
            acc += g_inv[(mu, nu)] * (hess[mu][nu] - conn);
        }
    }
    Ok(acc)
}
