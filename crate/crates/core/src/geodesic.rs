//! Geodesic-regularized gradient `T = J + κ·G⁻¹∇_θ(JᵀG(θ)J)` with `J`
//! frozen, its component form, and the Christoffel / geodesic-ODE oracles.

use serde::{Deserialize, Serialize};

use crate::divergence::default_fd_step;
use crate::error::{Error, Result};
use crate::math::{all_finite, axpy, dense_inverse, dot, DenseMatrix};
use crate::metric::MetricPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    pub kappa: f64,
    /// `None` means `1e-4·(1 + ‖θ‖∞)`.
    pub fd_step: Option<f64>,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self { kappa: 0.1, fd_step: None }
    }
}

impl GeodesicConfig {
    pub fn with_kappa(kappa: f64) -> Self {
        Self { kappa, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidConfig(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig("fd_step must be positive".into()));
            }
        }
        Ok(())
    }

    fn step_for(&self, theta: &[f64]) -> f64 {
        self.fd_step.unwrap_or_else(|| default_fd_step(theta))
    }
}

/// `Γ^δ_{μν}` stored densely, index order `(δ, μ, ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTensor {
    n: usize,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, delta: usize, mu: usize, nu: usize) -> f64 {
        self.data[(delta * self.n + mu) * self.n + nu]
    }

    fn set(&mut self, delta: usize, mu: usize, nu: usize, v: f64) {
        let n = self.n;
        self.data[(delta * n + mu) * n + nu] = v;
    }

    /// `Γ(v, w)^δ = Σ_{μν} Γ^δ_{μν} v^μ w^ν`.
    pub fn contract(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|d| {
                let mut acc = 0.0;
                for mu in 0..n {
                    for nu in 0..n {
                        acc += self.get(d, mu, nu) * v[mu] * w[nu];
                    }
                }
                acc
            })
            .collect()
    }

    /// Largest `|Γ^δ_{μν} − Γ^δ_{νμ}|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for d in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    worst = worst.max((self.get(d, mu, nu) - self.get(d, nu, mu)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn checked_u<U: Fn(&[f64]) -> Vec<f64>>(u_fn: &U, theta: &[f64]) -> Result<Vec<f64>> {
    let u = u_fn(theta);
    if u.len() != theta.len() {
        return Err(Error::BadDimensions(format!("u has {} entries, expected {}", u.len(), theta.len())));
    }
    if !all_finite(&u) {
        return Err(Error::NonFiniteField);
    }
    Ok(u)
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// `∂G/∂θ_ρ` for every `ρ`, by central differences of the dense metric.
fn metric_partials<U: Fn(&[f64]) -> Vec<f64>>(u_fn: &U, theta: &[f64], h: f64) -> Result<Vec<DenseMatrix>> {
    let n = theta.len();
    (0..n)
        .map(|rho| {
            let e = unit(n, rho);
            let gp = MetricPoint::new(checked_u(u_fn, &axpy(theta, h, &e))?).matrix();
            let gm = MetricPoint::new(checked_u(u_fn, &axpy(theta, -h, &e))?).matrix();
            Ok(gp.sub(&gm).scale(1.0 / (2.0 * h)))
        })
        .collect()
}

fn check_inputs(theta: &[f64], j: &[f64], cfg: &GeodesicConfig) -> Result<()> {
    cfg.validate()?;
    if j.len() != theta.len() {
        return Err(Error::BadDimensions(format!("J has {} entries, expected {}", j.len(), theta.len())));
    }
    if !all_finite(j) || !all_finite(theta) {
        return Err(Error::NonFiniteField);
    }
    Ok(())
}

/// Matrix form: `J + κ·G⁻¹∇_θ q` with `q(θ) = JᵀG(θ)J`, `J` held fixed and
/// `∇_θ q` by central differences (2n evaluations of `u`).
pub fn geodesic_gradient<U>(u_fn: U, theta: &[f64], j: &[f64], cfg: &GeodesicConfig) -> Result<Vec<f64>>
where
    U: Fn(&[f64]) -> Vec<f64>,
{
    check_inputs(theta, j, cfg)?;
    if cfg.kappa == 0.0 {
        return Ok(j.to_vec());
    }
    let n = theta.len();
    let h = cfg.step_for(theta);
    let q = |x: &[f64]| -> Result<f64> { Ok(MetricPoint::new(checked_u(&u_fn, x)?).bilinear_form(j, j)) };
    let mut grad_q = Vec::with_capacity(n);
    for rho in 0..n {
        let e = unit(n, rho);
        grad_q.push((q(&axpy(theta, h, &e))? - q(&axpy(theta, -h, &e))?) / (2.0 * h));
    }
    let correction = MetricPoint::new(checked_u(&u_fn, theta)?).inverse_apply(&grad_q);
    let t = axpy(j, cfg.kappa, &correction);
    if !all_finite(&t) {
        return Err(Error::NonFiniteField);
    }
    Ok(t)
}

/// Component form: `T^δ = J^δ + κ·Σ_ρ g^{δρ} Σ_{μν} ∂_ρ g_{μν} J^μ J^ν`,
/// assembling every metric partial densely.
pub fn geodesic_gradient_component<U>(u_fn: U, theta: &[f64], j: &[f64], cfg: &GeodesicConfig) -> Result<Vec<f64>>
where
    U: Fn(&[f64]) -> Vec<f64>,
{
    check_inputs(theta, j, cfg)?;
    let n = theta.len();
    let partials = metric_partials(&u_fn, theta, cfg.step_for(theta))?;
    let mut inner = vec![0.0; n];
    for (rho, dg) in partials.iter().enumerate() {
        let mut acc = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                acc += dg[(mu, nu)] * j[mu] * j[nu];
            }
        }
        inner[rho] = acc;
    }
    let correction = MetricPoint::new(checked_u(&u_fn, theta)?).inverse_apply(&inner);
    let t = axpy(j, cfg.kappa, &correction);
    if !all_finite(&t) {
        return Err(Error::NonFiniteField);
    }
    Ok(t)
}

/// `Γ^δ_{μν} = ½ Σ_ρ g^{δρ}(∂_μ g_{νρ} + ∂_ν g_{μρ} − ∂_ρ g_{μν})` from the
/// dense metric and its dense inverse.
pub fn christoffel_fd<U>(u_fn: U, theta: &[f64], fd_step: f64) -> Result<ChristoffelTensor>
where
    U: Fn(&[f64]) -> Vec<f64>,
{
    let n = theta.len();
    let g_inv = dense_inverse(&MetricPoint::new(checked_u(&u_fn, theta)?).matrix())?;
    let dg = metric_partials(&u_fn, theta, fd_step)?;
    let mut gamma = ChristoffelTensor::zeros(n);
    for d in 0..n {
        for mu in 0..n {
            for nu in 0..n {
                let mut acc = 0.0;
                for rho in 0..n {
                    acc += g_inv[(d, rho)] * (dg[mu][(nu, rho)] + dg[nu][(mu, rho)] - dg[rho][(mu, nu)]);
                }
                gamma.set(d, mu, nu, 0.5 * acc);
            }
        }
    }
    Ok(gamma)
}

/// Largest `|∂_λ g_{μν} − Γ^ρ_{λμ} g_{ρν} − Γ^ρ_{λν} g_{μρ}|`; zero for a
/// connection compatible with the metric.
pub fn metric_compatibility_residual<U>(u_fn: U, theta: &[f64], fd_step: f64) -> Result<f64>
where
    U: Fn(&[f64]) -> Vec<f64>,
{
    let n = theta.len();
    let g = MetricPoint::new(checked_u(&u_fn, theta)?).matrix();
    let dg = metric_partials(&u_fn, theta, fd_step)?;
    let gamma = christoffel_fd(&u_fn, theta, fd_step)?;
    let mut worst: f64 = 0.0;
    for l in 0..n {
        for mu in 0..n {
            for nu in 0..n {
                let mut r = dg[l][(mu, nu)];
                for rho in 0..n {
                    r -= gamma.get(rho, l, mu) * g[(rho, nu)] + gamma.get(rho, l, nu) * g[(mu, rho)];
                }
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}

/// Tangent after one midpoint step of `θ'' = −Γ(θ', θ')` from `(θ, J)`.
pub fn geodesic_ode_direction<U>(u_fn: U, theta: &[f64], j: &[f64], dt: f64) -> Result<Vec<f64>>
where
    U: Fn(&[f64]) -> Vec<f64>,
{
    if dt == 0.0 {
        return Ok(j.to_vec());
    }
    let h = default_fd_step(theta);
    let accel = |x: &[f64], v: &[f64]| -> Result<Vec<f64>> {
        let gamma = christoffel_fd(&u_fn, x, h)?;
        Ok(gamma.contract(v, v).into_iter().map(|a| -a).collect())
    };
    let a0 = accel(theta, j)?;
    let mid_theta = axpy(theta, 0.5 * dt, j);
    let mid_v = axpy(j, 0.5 * dt, &a0);
    let a_mid = accel(&mid_theta, &mid_v)?;
    Ok(axpy(j, dt, &a_mid))
}

/// Angle in radians between two non-zero vectors.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    c.clamp(-1.0, 1.0).acos()
}
