//! The metric-tensor network `θ ↦ (ω̃, σ̃)` and its inner training loop.
//!
//! Every tensor of the policy (weight matrix or bias vector) passes through
//! its own path: two single-channel convolutions with softplus, flatten,
//! average pooling, a dense projection and softplus. The per-tensor features
//! are concatenated into a shared trunk, and two linear heads produce `ω̃`
//! and `σ̃`. Heads start at zero, so the initial metric is Euclidean.
//!
//! The trunk and convolutions are tagged `Shared` and each head is exclusive
//! to its output. How the two parameter groups overlap is a modelling guess.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::divergence::{directional_step, ProbeConfig};
use crate::error::{Error, Result};
use crate::fourier::{build_u_with, FourierPair};
use crate::math::{all_finite, axpy, rademacher_probe, DiffGraph, Eval, Recorder, RngStream};
use crate::metric::regularized_gradient_with;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorShape {
    Matrix { rows: usize, cols: usize },
    Vector { len: usize },
}

impl TensorShape {
    pub fn size(&self) -> usize {
        match *self {
            TensorShape::Matrix { rows, cols } => rows * cols,
            TensorShape::Vector { len } => len,
        }
    }

    fn grid(&self) -> (usize, usize) {
        match *self {
            TensorShape::Matrix { rows, cols } => (rows, cols),
            TensorShape::Vector { len } => (1, len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTensor {
    pub name: String,
    pub shape: TensorShape,
    /// `false` skips average pooling for this tensor.
    pub pooled: bool,
}

/// How a flat parameter vector splits into weight matrices and bias vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    tensors: Vec<LayerTensor>,
}

impl LayerLayout {
    pub fn new(tensors: Vec<LayerTensor>) -> Result<Self> {
        if tensors.is_empty() {
            return Err(Error::LayoutMismatch("layout has no tensors".into()));
        }
        if let Some(t) = tensors.iter().find(|t| t.shape.size() == 0) {
            return Err(Error::LayoutMismatch(format!("tensor {} is empty", t.name)));
        }
        Ok(Self { tensors })
    }

    /// A single unstructured vector.
    pub fn flat(n: usize) -> Result<Self> {
        Self::new(vec![LayerTensor { name: "theta".into(), shape: TensorShape::Vector { len: n }, pooled: true }])
    }

    /// `[W₁, b₁, …, W_L, b_L]` for layer sizes `[in, h₁, …, out]`, plus an
    /// optional trailing `log_std` vector. The output bias and `log_std`
    /// skip pooling.
    pub fn mlp(sizes: &[usize], log_std: Option<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::LayoutMismatch("an MLP needs at least input and output sizes".into()));
        }
        let last = sizes.len() - 2;
        let mut tensors = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            tensors.push(LayerTensor {
                name: format!("w{}", i + 1),
                shape: TensorShape::Matrix { rows: w[1], cols: w[0] },
                pooled: true,
            });
            tensors.push(LayerTensor {
                name: format!("b{}", i + 1),
                shape: TensorShape::Vector { len: w[1] },
                pooled: i != last,
            });
        }
        if let Some(len) = log_std {
            tensors.push(LayerTensor { name: "log_std".into(), shape: TensorShape::Vector { len }, pooled: false });
        }
        Self::new(tensors)
    }

    pub fn tensors(&self) -> &[LayerTensor] {
        &self.tensors
    }

    pub fn dim(&self) -> usize {
        self.tensors.iter().map(|t| t.shape.size()).sum()
    }

    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.tensors
            .iter()
            .map(|t| {
                let r = start..start + t.shape.size();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn unflatten<'a, T>(&self, flat: &'a [T]) -> Result<Vec<&'a [T]>> {
        self.check_len(flat.len())?;
        Ok(self.ranges().into_iter().map(|r| &flat[r]).collect())
    }

    pub fn flatten(&self, parts: &[Vec<f64>]) -> Result<Vec<f64>> {
        if parts.len() != self.tensors.len() {
            return Err(Error::LayoutMismatch(format!("{} parts for {} tensors", parts.len(), self.tensors.len())));
        }
        for (p, t) in parts.iter().zip(&self.tensors) {
            if p.len() != t.shape.size() {
                return Err(Error::LayoutMismatch(format!("tensor {} has {} values, expected {}", t.name, p.len(), t.shape.size())));
            }
        }
        Ok(parts.concat())
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::LayoutMismatch(format!("got {len} parameters, layout expects {}", self.dim())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricNetConfig {
    /// Number of low-frequency components; `None` picks `n/2 − 1`, clamped to `[1, 16]`.
    pub m_tilde: Option<usize>,
    pub pool_size: usize,
    pub kernel_size: usize,
    pub layer_width: usize,
    pub trunk_width: usize,
    pub init_scale: f64,
}

impl Default for MetricNetConfig {
    fn default() -> Self {
        Self { m_tilde: None, pool_size: 5, kernel_size: 3, layer_width: 4, trunk_width: 16, init_scale: 5.0 }
    }
}

impl MetricNetConfig {
    pub fn resolved_m_tilde(&self, n: usize) -> usize {
        self.m_tilde.unwrap_or_else(|| (n / 2).saturating_sub(1).clamp(1, 16))
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.layer_width == 0 || self.trunk_width == 0 {
            return Err(Error::InvalidConfig("pool_size and widths must be >= 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidConfig("kernel_size must be odd".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidConfig("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Shared,
    Omega,
    Sigma,
}

#[derive(Debug, Clone)]
struct TensorBlock {
    grid: (usize, usize),
    kernel: (usize, usize),
    pooled_len: usize,
    pooled: bool,
    conv1: Range<usize>,
    conv1_bias: usize,
    conv2: Range<usize>,
    conv2_bias: usize,
    dense_w: Range<usize>,
    dense_b: Range<usize>,
}

#[derive(Debug, Clone)]
struct Dense {
    w: Range<usize>,
    b: Range<usize>,
    fan_in: usize,
}

/// Architecture of the network for one policy layout.
#[derive(Debug, Clone)]
pub struct MetricNet {
    layout: LayerLayout,
    config: MetricNetConfig,
    fourier: FourierPair,
    blocks: Vec<TensorBlock>,
    trunk: Dense,
    omega_head: Dense,
    sigma_head: Dense,
    param_count: usize,
}

/// Trainable network parameters `φ`, flat, with a group tag per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricNetParams {
    pub values: Vec<f64>,
    pub tags: Vec<Partition>,
}

impl MetricNetParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.values)
    }
}

impl MetricNet {
    pub fn new(layout: LayerLayout, config: MetricNetConfig) -> Result<Self> {
        config.validate()?;
        let n = layout.dim();
        let m_tilde = config.resolved_m_tilde(n);
        let fourier = FourierPair::new(n, m_tilde)?;
        let k = config.kernel_size;
        let mut next = 0usize;
        let mut take = |len: usize| {
            let r = next..next + len;
            next += len;
            r
        };
        let mut blocks = Vec::new();
        for t in layout.tensors() {
            let grid = t.shape.grid();
            let kernel = match t.shape {
                TensorShape::Matrix { .. } => (k, k),
                TensorShape::Vector { .. } => (1, k),
            };
            let size = t.shape.size();
            let pooled_len = if t.pooled { size.div_ceil(config.pool_size) } else { size };
            let conv1 = take(kernel.0 * kernel.1);
            let conv1_bias = take(1).start;
            let conv2 = take(kernel.0 * kernel.1);
            let conv2_bias = take(1).start;
            let dense_w = take(config.layer_width * pooled_len);
            let dense_b = take(config.layer_width);
            blocks.push(TensorBlock {
                grid,
                kernel,
                pooled_len,
                pooled: t.pooled,
                conv1,
                conv1_bias,
                conv2,
                conv2_bias,
                dense_w,
                dense_b,
            });
        }
        let concat = blocks.len() * config.layer_width;
        let trunk = Dense { w: take(config.trunk_width * concat), b: take(config.trunk_width), fan_in: concat };
        let omega_head = Dense { w: take(m_tilde * config.trunk_width), b: take(m_tilde), fan_in: config.trunk_width };
        let sigma_head = Dense { w: take(m_tilde * config.trunk_width), b: take(m_tilde), fan_in: config.trunk_width };
        Ok(Self { layout, config, fourier, blocks, trunk, omega_head, sigma_head, param_count: next })
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn config(&self) -> &MetricNetConfig {
        &self.config
    }

    pub fn fourier(&self) -> &FourierPair {
        &self.fourier
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn m_tilde(&self) -> usize {
        self.fourier.m_tilde()
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn tags(&self) -> Vec<Partition> {
        let mut tags = vec![Partition::Shared; self.param_count];
        for i in self.omega_head.w.clone().chain(self.omega_head.b.clone()) {
            tags[i] = Partition::Omega;
        }
        for i in self.sigma_head.w.clone().chain(self.sigma_head.b.clone()) {
            tags[i] = Partition::Sigma;
        }
        tags
    }

    /// Scaled-uniform convolutions, projections and trunk; zero heads.
    pub fn init_params(&self, rng: &mut RngStream) -> MetricNetParams {
        let mut values = vec![0.0; self.param_count];
        let s = self.config.init_scale;
        let mut fill = |range: Range<usize>, fan_in: usize, rng: &mut RngStream| {
            let bound = s / (fan_in as f64).sqrt();
            for v in &mut values[range] {
                *v = rng.uniform(-bound, bound);
            }
        };
        for b in &self.blocks {
            let fan = b.kernel.0 * b.kernel.1;
            fill(b.conv1.clone(), fan, rng);
            fill(b.conv2.clone(), fan, rng);
            fill(b.dense_w.clone(), b.pooled_len, rng);
        }
        fill(self.trunk.w.clone(), self.trunk.fan_in, rng);
        MetricNetParams { values, tags: self.tags() }
    }

    pub fn check_params(&self, phi: &MetricNetParams) -> Result<()> {
        if phi.values.len() != self.param_count || phi.tags.len() != self.param_count {
            return Err(Error::LayoutMismatch(format!(
                "network expects {} parameters, got {}",
                self.param_count,
                phi.values.len()
            )));
        }
        Ok(())
    }

    pub fn heads_are_zero(&self, phi: &MetricNetParams) -> bool {
        [&self.omega_head, &self.sigma_head]
            .iter()
            .all(|h| phi.values[h.w.clone()].iter().chain(&phi.values[h.b.clone()]).all(|&v| v == 0.0))
    }

    /// Small seeded perturbation of the `ω̃` head weights. With both heads at
    /// zero, `u = 0` is a stationary point of the divergence loss and no
    /// gradient step can leave it.
    pub fn jitter_omega_head(&self, phi: &mut MetricNetParams, scale: f64, rng: &mut RngStream) {
        for v in &mut phi.values[self.omega_head.w.clone()] {
            *v = scale * rng.normal();
        }
    }

    /// `(ω̃, σ̃)` for parameters `phi` and policy point `theta`, recorded.
    pub fn forward_with<R: Recorder>(&self, r: &mut R, phi: &[R::V], theta: &[R::V]) -> (Vec<R::V>, Vec<R::V>) {
        assert_eq!(phi.len(), self.param_count, "parameter count mismatch");
        assert_eq!(theta.len(), self.dim(), "layout mismatch");
        let mut features = Vec::with_capacity(self.blocks.len() * self.config.layer_width);
        for (block, range) in self.blocks.iter().zip(self.layout.ranges()) {
            let x = &theta[range];
            let h = conv_softplus(r, x, block.grid, block.kernel, &phi[block.conv1.clone()], phi[block.conv1_bias]);
            let h = conv_softplus(r, &h, block.grid, block.kernel, &phi[block.conv2.clone()], phi[block.conv2_bias]);
            let pooled = if block.pooled { avg_pool(r, &h, self.config.pool_size) } else { h };
            let dense = dense_layer(r, &phi[block.dense_w.clone()], &phi[block.dense_b.clone()], &pooled);
            features.extend(dense.into_iter().map(|v| r.softplus(v)));
        }
        let trunk = dense_layer(r, &phi[self.trunk.w.clone()], &phi[self.trunk.b.clone()], &features);
        let trunk: Vec<R::V> = trunk.into_iter().map(|v| r.softplus(v)).collect();
        let omega = dense_layer(r, &phi[self.omega_head.w.clone()], &phi[self.omega_head.b.clone()], &trunk);
        let sigma = dense_layer(r, &phi[self.sigma_head.w.clone()], &phi[self.sigma_head.b.clone()], &trunk);
        (omega, sigma)
    }

    /// `u(θ, φ)`, recorded.
    pub fn u_with<R: Recorder>(&self, r: &mut R, phi: &[R::V], theta: &[R::V]) -> Vec<R::V> {
        let (omega, sigma) = self.forward_with(r, phi, theta);
        build_u_with(r, &self.fourier, &omega, &sigma, theta)
    }

    pub fn forward(&self, phi: &MetricNetParams, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_params(phi)?;
        self.layout.check_len(theta.len())?;
        Ok(self.forward_with(&mut Eval, &phi.values, theta))
    }

    /// Forward pass recorded on a fresh graph with `φ` as leaves.
    pub fn forward_graph(&self, phi: &MetricNetParams, theta: &[f64]) -> Result<(Vec<crate::math::Var>, Vec<crate::math::Var>, DiffGraph)> {
        self.check_params(phi)?;
        self.layout.check_len(theta.len())?;
        let mut g = DiffGraph::new();
        let leaves = g.params(&phi.values);
        let x = g.constants(theta);
        let (omega, sigma) = self.forward_with(&mut g, &leaves, &x);
        Ok((omega, sigma, g))
    }

    pub fn u(&self, phi: &MetricNetParams, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_params(phi)?;
        self.layout.check_len(theta.len())?;
        Ok(self.u_with(&mut Eval, &phi.values, theta))
    }

    /// `θ ↦ u(θ, φ)` as a plain map, for the divergence and geodesic modules.
    pub fn u_fn<'a>(&'a self, phi: &'a MetricNetParams) -> impl Fn(&[f64]) -> Vec<f64> + 'a {
        move |theta: &[f64]| self.u_with(&mut Eval, &phi.values, theta)
    }
}

fn conv_softplus<R: Recorder>(
    r: &mut R,
    x: &[R::V],
    (rows, cols): (usize, usize),
    (kr, kc): (usize, usize),
    kernel: &[R::V],
    bias: R::V,
) -> Vec<R::V> {
    let (cr, cc) = (kr / 2, kc / 2);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = bias;
            for di in 0..kr {
                let Some(ii) = (i + di).checked_sub(cr).filter(|&ii| ii < rows) else { continue };
                for dj in 0..kc {
                    let Some(jj) = (j + dj).checked_sub(cc).filter(|&jj| jj < cols) else { continue };
                    let p = r.mul(kernel[di * kc + dj], x[ii * cols + jj]);
                    acc = r.add(acc, p);
                }
            }
            out.push(r.softplus(acc));
        }
    }
    out
}

fn avg_pool<R: Recorder>(r: &mut R, x: &[R::V], size: usize) -> Vec<R::V> {
    x.chunks(size)
        .map(|w| {
            let s = r.sum(w);
            r.scale(s, 1.0 / w.len() as f64)
        })
        .collect()
}

fn dense_layer<R: Recorder>(r: &mut R, w: &[R::V], b: &[R::V], x: &[R::V]) -> Vec<R::V> {
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * x.len()..(o + 1) * x.len()];
            let mut acc = bias;
            for (&wi, &xi) in row.iter().zip(x) {
                let p = r.mul(wi, xi);
                acc = r.add(acc, p);
            }
            acc
        })
        .collect()
}

/// Frozen inputs of one divergence-loss evaluation: probe vectors and the
/// gradients at `θ` and `θ ± εv`, none of which depend on `φ`.
#[derive(Debug, Clone)]
pub struct ProbeBatch {
    pub theta: Vec<f64>,
    pub grad: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    pub grad_plus: Vec<Vec<f64>>,
    pub grad_minus: Vec<Vec<f64>>,
    pub fd_step: f64,
}

impl ProbeBatch {
    pub fn sample<G>(theta: &[f64], grad_fn: &G, probes: Vec<Vec<f64>>, fd_step: f64) -> Result<Self>
    where
        G: Fn(&[f64]) -> Vec<f64>,
    {
        let eval = |x: &[f64]| -> Result<Vec<f64>> {
            let g = grad_fn(x);
            if g.len() != theta.len() {
                return Err(Error::BadDimensions(format!("gradient has {} entries, expected {}", g.len(), theta.len())));
            }
            if !all_finite(&g) {
                return Err(Error::NonFiniteField);
            }
            Ok(g)
        };
        let mut grad_plus = Vec::with_capacity(probes.len());
        let mut grad_minus = Vec::with_capacity(probes.len());
        for v in &probes {
            grad_plus.push(eval(&axpy(theta, fd_step, v))?);
            grad_minus.push(eval(&axpy(theta, -fd_step, v))?);
        }
        Ok(Self { theta: theta.to_vec(), grad: eval(theta)?, probes, grad_plus, grad_minus, fd_step })
    }
}

impl ProbeBatch {
    /// Hutchinson Hessian trace from the stored gradient differences.
    pub fn hessian_trace(&self) -> f64 {
        let mut acc = 0.0;
        for ((v, gp), gm) in self.probes.iter().zip(&self.grad_plus).zip(&self.grad_minus) {
            let a: f64 = v.iter().zip(gp).map(|(x, y)| x * y).sum();
            let b: f64 = v.iter().zip(gm).map(|(x, y)| x * y).sum();
            acc += (a - b) / (2.0 * self.fd_step);
        }
        acc / self.probes.len() as f64
    }

    /// Divergence estimate under the metric of `phi`.
    pub fn divergence(&self, net: &MetricNet, phi: &MetricNetParams) -> f64 {
        divergence_with(net, &mut Eval, &phi.values, self)
    }
}

/// Stochastic divergence of `J = G⁻¹∇f` on a frozen batch, as a function of
/// `φ`. The inputs at `θ ± h·J` are themselves recorded, since `J` depends
/// on `φ`.
pub fn divergence_with<R: Recorder>(net: &MetricNet, r: &mut R, phi: &[R::V], batch: &ProbeBatch) -> R::V {
    let eps = batch.fd_step;
    let mut trace = r.constant(0.0);
    for ((v, gp), gm) in batch.probes.iter().zip(&batch.grad_plus).zip(&batch.grad_minus) {
        let xp = r.constants(&axpy(&batch.theta, eps, v));
        let up = net.u_with(r, phi, &xp);
        let jp = regularized_gradient_with(r, &up, gp);
        let xm = r.constants(&axpy(&batch.theta, -eps, v));
        let um = net.u_with(r, phi, &xm);
        let jm = regularized_gradient_with(r, &um, gm);
        let a = r.dot_const(&jp, v);
        let b = r.dot_const(&jm, v);
        let d = r.sub(a, b);
        trace = r.fma_const(trace, d, 1.0 / (2.0 * eps));
    }
    let trace = r.scale(trace, 1.0 / batch.probes.len() as f64);

    let x0 = r.constants(&batch.theta);
    let u0 = net.u_with(r, phi, &x0);
    let j0 = regularized_gradient_with(r, &u0, &batch.grad);
    let h = directional_step(eps, &batch.grad);
    let shifted = |r: &mut R, sign: f64| -> Vec<R::V> {
        batch.theta.iter().zip(&j0).map(|(&t, &j)| {
            let s = r.scale(j, sign * h);
            r.offset(s, t)
        }).collect()
    };
    let xp = shifted(r, 1.0);
    let up = net.u_with(r, phi, &xp);
    let xm = shifted(r, -1.0);
    let um = net.u_with(r, phi, &xm);
    let a = r.dot(&u0, &up);
    let b = r.dot(&u0, &um);
    let d = r.sub(a, b);
    let dju = r.scale(d, 1.0 / (2.0 * h));
    let uu = r.dot(&u0, &u0);
    let denom = r.offset(uu, 1.0);
    let corr = r.div(dju, denom);
    r.add(trace, corr)
}

/// `(Div, Div², ∂Div²/∂φ)` on a frozen batch.
pub fn divergence_loss_and_grad(net: &MetricNet, phi: &MetricNetParams, batch: &ProbeBatch) -> Result<(f64, f64, Vec<f64>)> {
    net.check_params(phi)?;
    net.layout.check_len(batch.theta.len())?;
    let mut g = DiffGraph::new();
    let leaves = g.params(&phi.values);
    let div = divergence_with(net, &mut g, &leaves, batch);
    let loss = g.square(div);
    Ok((g.value(div), g.value(loss), g.backprop(loss)))
}

pub fn divergence_loss(net: &MetricNet, phi: &MetricNetParams, batch: &ProbeBatch) -> f64 {
    let d = divergence_with(net, &mut Eval, &phi.values, batch);
    d * d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self { cfg, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One descent step on `x` along `grad`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        let c = self.cfg;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            x[i] -= c.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricTrainConfig {
    pub max_iters: usize,
    pub adam: AdamConfig,
    /// Standard deviation of the `ω̃`-head perturbation applied when both heads are zero.
    pub jitter: f64,
}

impl Default for MetricTrainConfig {
    fn default() -> Self {
        Self { max_iters: 20, adam: AdamConfig::default(), jitter: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub div: f64,
    pub loss: f64,
    /// Lowest loss seen up to and including this iteration.
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct MetricTrainOutcome {
    pub params: MetricNetParams,
    pub history: Vec<HistoryEntry>,
    /// Loss of the input parameters on the first batch.
    pub initial_loss: f64,
    /// Set when a non-finite loss stopped training early.
    pub aborted: Option<Error>,
}

impl MetricTrainOutcome {
    pub fn best_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.best_loss)
    }
}

/// Minimizes `Div²` over `φ` with Adam. Iteration `i` draws fresh probes from
/// substream `i` of `pc.seed`, evaluates the loss at the current `φ`, then
/// steps. The returned parameters are the best evaluated ones; the input
/// parameters are kept unless some later iterate does strictly better.
pub fn train_metric_net<G>(
    net: &MetricNet,
    phi: &MetricNetParams,
    theta: &[f64],
    grad_fn: G,
    pc: &ProbeConfig,
    cfg: &MetricTrainConfig,
) -> Result<MetricTrainOutcome>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    net.check_params(phi)?;
    net.layout.check_len(theta.len())?;
    pc.validate()?;
    if cfg.max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
    }
    let base = RngStream::new(pc.seed);
    let eps = pc.step_for(theta);
    let n = theta.len();

    let mut best = phi.clone();
    let mut best_loss = f64::INFINITY;
    let mut initial_loss = f64::NAN;
    let mut current = phi.clone();
    if net.heads_are_zero(&current) && cfg.jitter > 0.0 {
        net.jitter_omega_head(&mut current, cfg.jitter, &mut base.substream(u64::MAX));
    }
    let mut adam = Adam::new(cfg.adam, current.len());
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    for iter in 0..=cfg.max_iters {
        let mut rng = base.substream(iter as u64);
        let probes = (0..pc.probe_count).map(|_| rademacher_probe(&mut rng, n)).collect();
        let batch = ProbeBatch::sample(theta, &grad_fn, probes, eps)?;
        // The input φ is scored on the first batch too, so a perturbed start
        // can never be returned in its place unless it is strictly better.
        if iter == 0 {
            let d = divergence_with(net, &mut Eval, &phi.values, &batch);
            initial_loss = d * d;
            if initial_loss.is_finite() {
                best_loss = initial_loss;
            }
        }
        let (div, loss, grad) = divergence_loss_and_grad(net, &current, &batch)?;
        if !loss.is_finite() || !all_finite(&grad) {
            return Ok(MetricTrainOutcome { params: best, history, initial_loss, aborted: Some(Error::NonFiniteLoss { iter }) });
        }
        if loss < best_loss {
            best_loss = loss;
            best = current.clone();
        }
        history.push(HistoryEntry { iter, div, loss, best_loss });
        if iter < cfg.max_iters {
            adam.step(&mut current.values, &grad);
        }
    }
    Ok(MetricTrainOutcome { params: best, history, initial_loss, aborted: None })
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RPGP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    layout: LayerLayout,
    config: MetricNetConfig,
    tags: Vec<Partition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointJson {
    pub version: u32,
    pub layout: LayerLayout,
    pub config: MetricNetConfig,
    pub tags: Vec<Partition>,
    pub values: Vec<f64>,
}

/// Binary checkpoint: magic, version, header length, JSON header with the
/// architecture, then the raw little-endian parameter values.
pub fn checkpoint_to_bytes(net: &MetricNet, phi: &MetricNetParams) -> Result<Vec<u8>> {
    net.check_params(phi)?;
    let header = CheckpointHeader { layout: net.layout.clone(), config: net.config, tags: phi.tags.clone() };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + header.len() + 8 * phi.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in &phi.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(MetricNet, MetricNetParams)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a metric-network checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let net = MetricNet::new(header.layout, header.config)?;
    let raw = &bytes[12 + header_len..];
    if raw.len() != 8 * net.param_count() || header.tags.len() != net.param_count() {
        return Err(bad("parameter block does not match the architecture"));
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((net, MetricNetParams { values, tags: header.tags }))
}

pub fn checkpoint_to_json(net: &MetricNet, phi: &MetricNetParams) -> CheckpointJson {
    CheckpointJson {
        version: CHECKPOINT_VERSION,
        layout: net.layout.clone(),
        config: net.config,
        tags: phi.tags.clone(),
        values: phi.values.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{divergence_with_probes, hessian_trace_with_probes, FieldEvaluator};

    fn small_net() -> MetricNet {
        MetricNet::new(LayerLayout::mlp(&[2, 3, 2], Some(2)).unwrap(), MetricNetConfig::default()).unwrap()
    }

    fn quad_grad(theta: &[f64]) -> Vec<f64> {
        theta.iter().enumerate().map(|(i, t)| -(i as f64 + 1.0) * t).collect()
    }

    fn theta_for(net: &MetricNet, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        (0..net.dim()).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    fn nonzero_phi(net: &MetricNet, seed: u64) -> MetricNetParams {
        let mut rng = RngStream::new(seed);
        let mut phi = net.init_params(&mut rng);
        for v in &mut phi.values {
            if *v == 0.0 {
                *v = 0.3 * rng.normal();
            }
        }
        phi
    }

    #[test]
    fn layout_round_trip() {
        let layout = LayerLayout::mlp(&[3, 4, 2], Some(2)).unwrap();
        assert_eq!(layout.dim(), 12 + 4 + 8 + 2 + 2);
        let flat: Vec<f64> = (0..layout.dim()).map(|i| i as f64).collect();
        let parts: Vec<Vec<f64>> = layout.unflatten(&flat).unwrap().iter().map(|p| p.to_vec()).collect();
        assert_eq!(layout.flatten(&parts).unwrap(), flat);
        assert!(!layout.tensors()[3].pooled);
        assert!(layout.tensors()[1].pooled);
        assert!(matches!(layout.unflatten(&flat[1..]), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn zero_heads_give_zero_outputs() {
        let net = small_net();
        for seed in [1, 2] {
            let phi = net.init_params(&mut RngStream::new(seed));
            let (w, s) = net.forward(&phi, &theta_for(&net, 5)).unwrap();
            assert!(w.iter().chain(&s).all(|&v| v == 0.0));
            assert!(net.u(&phi, &theta_for(&net, 5)).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn seeds_give_different_trunks() {
        let net = small_net();
        let a = net.init_params(&mut RngStream::new(1));
        let b = net.init_params(&mut RngStream::new(2));
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn tags_cover_heads() {
        let net = small_net();
        let tags = net.tags();
        let m = net.m_tilde();
        let count = |p| tags.iter().filter(|&&t| t == p).count();
        assert_eq!(count(Partition::Omega), m * 17);
        assert_eq!(count(Partition::Sigma), m * 17);
    }

    #[test]
    fn forward_is_deterministic_and_checks_layout() {
        let net = small_net();
        let phi = nonzero_phi(&net, 3);
        let theta = theta_for(&net, 4);
        assert_eq!(net.forward(&phi, &theta).unwrap(), net.forward(&phi, &theta).unwrap());
        assert!(matches!(net.forward(&phi, &theta[1..]), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn trunk_perturbation_matches_backprop() {
        let net = small_net();
        let phi = nonzero_phi(&net, 6);
        let theta = theta_for(&net, 7);
        let (omega, _, g) = net.forward_graph(&phi, &theta).unwrap();
        let grad = g.backprop(omega[0]);
        let idx = net.trunk.w.start + 2;
        let h = 1e-5;
        let mut p = phi.clone();
        p.values[idx] += h;
        let mut m = phi.clone();
        m.values[idx] -= h;
        let fd = (net.forward(&p, &theta).unwrap().0[0] - net.forward(&m, &theta).unwrap().0[0]) / (2.0 * h);
        assert!((fd - grad[idx]).abs() <= 1e-3 * fd.abs().max(1e-8), "fd {fd} backprop {}", grad[idx]);
    }

    #[test]
    fn euclidean_start_has_unit_ratio() {
        let net = MetricNet::new(LayerLayout::flat(6).unwrap(), MetricNetConfig::default()).unwrap();
        let phi = net.init_params(&mut RngStream::new(0));
        let theta = theta_for(&net, 8);
        let pc = ProbeConfig::new(8, 3);
        let probes = pc.probes(6);
        let eps = pc.step_for(&theta);
        let fe = FieldEvaluator::new(6, quad_grad, net.u_fn(&phi));
        let div = divergence_with_probes(&fe, &theta, &probes, eps).unwrap();
        let trace = hessian_trace_with_probes(quad_grad, &theta, &probes, eps).unwrap();
        assert!((div / trace - 1.0).abs() < 1e-12);
        let batch = ProbeBatch::sample(&theta, &quad_grad, probes, eps).unwrap();
        let recorded = divergence_with(&net, &mut Eval, &phi.values, &batch);
        assert!((recorded - div).abs() < 1e-12);
    }

    #[test]
    fn recorded_divergence_matches_plain_estimate() {
        let net = MetricNet::new(LayerLayout::flat(6).unwrap(), MetricNetConfig::default()).unwrap();
        let phi = nonzero_phi(&net, 9);
        let theta = theta_for(&net, 10);
        let pc = ProbeConfig::new(4, 11);
        let probes = pc.probes(6);
        let eps = pc.step_for(&theta);
        let fe = FieldEvaluator::new(6, quad_grad, net.u_fn(&phi));
        let plain = divergence_with_probes(&fe, &theta, &probes, eps).unwrap();
        let batch = ProbeBatch::sample(&theta, &quad_grad, probes, eps).unwrap();
        let recorded = divergence_with(&net, &mut Eval, &phi.values, &batch);
        assert!((plain - recorded).abs() <= 1e-9 * plain.abs().max(1.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = MetricNet::new(LayerLayout::flat(6).unwrap(), MetricNetConfig::default()).unwrap();
        let phi = nonzero_phi(&net, 12);
        let theta = theta_for(&net, 13);
        let pc = ProbeConfig::new(4, 14);
        let batch = ProbeBatch::sample(&theta, &quad_grad, pc.probes(6), pc.step_for(&theta)).unwrap();
        let (_, _, grad) = divergence_loss_and_grad(&net, &phi, &batch).unwrap();
        let mut rng = RngStream::new(15);
        for _ in 0..5 {
            let idx = rng.below(phi.len());
            let h = 1e-6;
            let mut p = phi.clone();
            p.values[idx] += h;
            let mut m = phi.clone();
            m.values[idx] -= h;
            let fd = (divergence_loss(&net, &p, &batch) - divergence_loss(&net, &m, &batch)) / (2.0 * h);
            assert!((fd - grad[idx]).abs() <= 1e-3 * fd.abs().max(1e-6), "coord {idx}: fd {fd} ad {}", grad[idx]);
        }
    }

    #[test]
    fn zero_field_leaves_phi_unchanged() {
        let net = MetricNet::new(LayerLayout::flat(4).unwrap(), MetricNetConfig::default()).unwrap();
        let phi = net.init_params(&mut RngStream::new(1));
        let out = train_metric_net(&net, &phi, &[0.1, 0.2, 0.3, 0.4], |_: &[f64]| vec![0.0; 4], &ProbeConfig::new(4, 2), &MetricTrainConfig::default()).unwrap();
        assert!(out.history.iter().all(|h| h.loss == 0.0));
        assert_eq!(out.params, phi);
    }

    #[test]
    fn best_loss_never_increases() {
        let net = MetricNet::new(LayerLayout::flat(8).unwrap(), MetricNetConfig::default()).unwrap();
        let phi = net.init_params(&mut RngStream::new(4));
        let theta = theta_for(&net, 5);
        let out = train_metric_net(&net, &phi, &theta, quad_grad, &ProbeConfig::new(8, 6), &MetricTrainConfig::default()).unwrap();
        assert_eq!(out.history.len(), 21);
        for w in out.history.windows(2) {
            assert!(w[1].best_loss <= w[0].best_loss);
        }
        assert!(out.best_loss() <= out.initial_loss);
    }

    #[test]
    fn forward_cost_is_linear_in_dimension() {
        let count = |n: usize| {
            let net = MetricNet::new(LayerLayout::flat(n).unwrap(), MetricNetConfig::default()).unwrap();
            let phi = net.init_params(&mut RngStream::new(0));
            let mut g = DiffGraph::new();
            let leaves = g.params(&phi.values);
            let x = g.constants(&vec![0.5; n]);
            net.forward_with(&mut g, &leaves, &x);
            g.len() - leaves.len() - n
        };
        for n in [100, 400, 1600] {
            let ratio = count(2 * n) as f64 / count(n) as f64;
            assert!(ratio <= 2.0, "n={n}: ratio {ratio}");
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let net = small_net();
        let phi = nonzero_phi(&net, 20);
        let bytes = checkpoint_to_bytes(&net, &phi).unwrap();
        let (net2, phi2) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(phi2, phi);
        assert_eq!(net2.layout(), net.layout());
        let mut broken = bytes.clone();
        broken[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&broken), Err(Error::Checkpoint(_))));
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let json = checkpoint_to_json(&net, &phi);
        assert_eq!(json.values, phi.values);
    }
}
