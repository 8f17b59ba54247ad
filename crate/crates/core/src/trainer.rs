//! The outer training loop: collect experience, estimate the policy
//! gradient, regularize it through the learned metric, and step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::divergence::{divergence_ratio, DivergenceMethod, DivergenceReport, ProbeConfig};
use crate::error::{Error, Result};
use crate::geodesic::{geodesic_gradient, GeodesicConfig};
use crate::math::{all_finite, dot, norm, rademacher_probe, RngStream};
use crate::metric::MetricPoint;
use crate::metric_net::{train_metric_net, LayerLayout, MetricNet, MetricNetConfig, MetricNetParams, MetricTrainConfig, ProbeBatch};
use crate::rl::buffer::{ReplayBuffer, Transition};
use crate::rl::env::{make_env, EnvSpec, Environment};
use crate::rl::lqr::{lqr_analytic_gradient, lqr_expected_cost, riccati_optimal_cost};
use crate::rl::policy::{PolicyHead, PolicyMLP};
use crate::rl::reinforce::{evaluate_policy, policy_gradient_reinforce};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Plain policy gradient.
    Baseline,
    /// `J = G⁻¹∇f`.
    #[serde(alias = "J")]
    J,
    /// Geodesic direction `T`.
    #[serde(alias = "T")]
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exact gradient: analytic landscape gradient or LQR moment propagation.
    Analytic,
    Reinforce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub variant: Variant,
    /// Defaults to `analytic` for LQR and landscapes, `reinforce` otherwise.
    pub backend: Option<Backend>,
    /// Hidden widths of the policy MLP; defaults to none (linear) for LQR, 16×16 otherwise.
    pub hidden: Option<Vec<usize>>,
    /// Defaults to deterministic for the analytic backend, Gaussian for REINFORCE.
    pub head: Option<PolicyHead>,
    pub total_steps: usize,
    pub update_interval: usize,
    pub lr: f64,
    pub gamma: f64,
    /// Rescale every update direction to at most this norm.
    pub max_step_norm: Option<f64>,
    pub episodes_per_update: usize,
    pub eval_episodes: usize,
    pub probe_count: usize,
    pub fd_step: Option<f64>,
    pub kappa: f64,
    /// Cap on `‖T − J‖ / ‖J‖`; the geodesic correction is a first-order
    /// expansion and is rescaled when it outgrows the step it corrects.
    pub max_correction: f64,
    /// Fall back to the plain gradient when the divergence ratio is ≥ 1.
    /// Defaults to on for variant T only.
    pub gate: Option<bool>,
    /// Keep the metric network at its initial parameters.
    pub freeze_metric: bool,
    pub metric: MetricNetConfig,
    pub metric_train: MetricTrainConfig,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::lqr_1d(),
            variant: Variant::Baseline,
            backend: None,
            hidden: None,
            head: None,
            total_steps: 3000,
            update_interval: 50,
            lr: 0.05,
            gamma: 0.99,
            max_step_norm: None,
            episodes_per_update: 10,
            eval_episodes: 10,
            probe_count: 64,
            fd_step: None,
            kappa: 0.1,
            max_correction: 0.5,
            gate: None,
            freeze_metric: false,
            metric: MetricNetConfig::default(),
            metric_train: MetricTrainConfig::default(),
            buffer_capacity: 10_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn backend(&self) -> Backend {
        self.backend.unwrap_or(match self.env {
            EnvSpec::Pointmass { .. } => Backend::Reinforce,
            _ => Backend::Analytic,
        })
    }

    pub fn gate_enabled(&self) -> bool {
        self.gate.unwrap_or(self.variant == Variant::T)
    }

    pub fn updates(&self) -> usize {
        self.total_steps / self.update_interval.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.update_interval == 0 || self.total_steps < self.update_interval {
            return bad("total_steps must be >= update_interval >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if let Some(c) = self.max_step_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad("max_step_norm must be positive");
            }
        }
        if self.episodes_per_update == 0 || self.eval_episodes == 0 {
            return bad("episodes_per_update and eval_episodes must be >= 1");
        }
        if !(self.max_correction >= 0.0 && self.max_correction.is_finite()) {
            return bad("max_correction must be finite and >= 0");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be >= 1");
        }
        ProbeConfig { probe_count: self.probe_count, fd_step: self.fd_step, seed: 0 }.validate()?;
        GeodesicConfig { kappa: self.kappa, fd_step: self.fd_step }.validate()?;
        self.metric.validate()?;
        if self.metric_train.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        make_env(&self.env)?;
        if self.backend() == Backend::Analytic && matches!(self.env, EnvSpec::Pointmass { .. }) {
            return bad("backend \"analytic\" supports LQR and landscape environments only");
        }
        Ok(())
    }
}

/// What the regularizer needs besides the current point.
#[derive(Debug, Clone)]
pub struct RegularizerSettings {
    pub variant: Variant,
    pub probe_count: usize,
    pub fd_step: Option<f64>,
    pub kappa: f64,
    pub max_correction: f64,
    pub max_step_norm: Option<f64>,
    pub gate: bool,
    pub freeze_metric: bool,
    pub metric_train: MetricTrainConfig,
}

impl RegularizerSettings {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            variant: cfg.variant,
            probe_count: cfg.probe_count,
            fd_step: cfg.fd_step,
            kappa: cfg.kappa,
            max_correction: cfg.max_correction,
            max_step_norm: cfg.max_step_norm,
            gate: cfg.gate_enabled(),
            freeze_metric: cfg.freeze_metric,
            metric_train: cfg.metric_train,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub direction: Vec<f64>,
    pub report: DivergenceReport,
    /// Divergence ratio under the metric before the inner training.
    pub ratio_before: f64,
    /// The plain gradient was used because of the gate.
    pub gated: bool,
    /// The plain gradient was used because regularization failed.
    pub fallback: Option<Error>,
}

/// One regularized step: train the metric, form `J` (and `T`), measure the
/// divergence ratio, and apply the gate. `grad` is the gradient to be
/// regularized; `grad_fn` is the deterministic gradient field the metric is
/// fitted to.
pub fn regularize_step<G>(
    net: &MetricNet,
    phi: &mut MetricNetParams,
    theta: &[f64],
    grad: &[f64],
    grad_fn: G,
    settings: &RegularizerSettings,
    rng: &RngStream,
) -> Result<StepOutcome>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !all_finite(grad) {
        return Err(Error::NonFiniteField);
    }
    let n = theta.len();
    let report_pc = ProbeConfig { probe_count: settings.probe_count, fd_step: settings.fd_step, seed: rng.substream(1).next_u64() };
    let eps = report_pc.step_for(theta);
    let mut probe_rng = RngStream::new(report_pc.seed);
    let probes = (0..report_pc.probe_count).map(|_| rademacher_probe(&mut probe_rng, n)).collect();
    let batch = ProbeBatch::sample(theta, &grad_fn, probes, eps)?;
    let trace = batch.hessian_trace();

    if settings.variant == Variant::Baseline {
        return Ok(StepOutcome {
            direction: grad.to_vec(),
            report: DivergenceReport::new(trace, trace, DivergenceMethod::Estimated, &report_pc),
            ratio_before: divergence_ratio(trace, trace),
            gated: false,
            fallback: None,
        });
    }

    let ratio_before = divergence_ratio(batch.divergence(net, phi), trace);
    let mut fallback = None;
    if !settings.freeze_metric {
        let train_pc = ProbeConfig { probe_count: settings.probe_count, fd_step: settings.fd_step, seed: rng.substream(2).next_u64() };
        match train_metric_net(net, phi, theta, &grad_fn, &train_pc, &settings.metric_train) {
            Ok(out) => {
                fallback = out.aborted;
                *phi = out.params;
            }
            Err(e) => fallback = Some(e),
        }
    }
    let div = batch.divergence(net, phi);
    let report = DivergenceReport::new(div, trace, DivergenceMethod::Estimated, &report_pc);

    let u = net.u(phi, theta)?;
    let mut j = MetricPoint::new(u).regularized_gradient(grad);
    // The correction is quadratic in J, so it is formed for the step actually taken.
    clip(&mut j, settings.max_step_norm);
    let direction = match settings.variant {
        Variant::T => geodesic_gradient(net.u_fn(phi), theta, &j, &GeodesicConfig { kappa: settings.kappa, fd_step: settings.fd_step })
            .map(|t| cap_correction(&j, t, settings.max_correction)),
        _ => Ok(j),
    };
    let (direction, fallback) = match direction {
        Ok(d) if all_finite(&d) && report.div.is_finite() => (d, fallback),
        Ok(_) => (grad.to_vec(), Some(Error::NonFiniteField)),
        Err(e) => (grad.to_vec(), Some(e)),
    };
    if settings.gate && !(report.ratio < 1.0) {
        return Ok(StepOutcome { direction: grad.to_vec(), report, ratio_before, gated: true, fallback });
    }
    Ok(StepOutcome { direction, report, ratio_before, gated: false, fallback })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Environment steps taken so far.
    pub step: usize,
    pub update: usize,
    pub eval_return: f64,
    pub div: f64,
    pub hessian_trace: f64,
    pub ratio: f64,
    pub ratio_before: f64,
    /// The plain gradient replaced the regularized direction.
    pub gated: bool,
    pub fallback: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_return: f64,
    pub best_return: f64,
    /// Fraction of updates whose divergence ratio was below one.
    pub ratio_below_one: f64,
    /// Expected discounted cost of the final policy and the Riccati optimum (LQR, linear policy).
    pub final_cost: Option<f64>,
    pub optimal_cost: Option<f64>,
    pub final_theta: Vec<f64>,
    pub aborted: Option<String>,
    pub records: Vec<StepRecord>,
    pub config: TrainConfig,
}

pub struct TrainRun {
    pub summary: RunSummary,
    pub net: MetricNet,
    pub phi: MetricNetParams,
}

const TAG_INIT_POLICY: u64 = 1;
const TAG_INIT_METRIC: u64 = 2;
const TAG_COLLECT: u64 = 3;
const TAG_UPDATE: u64 = 4;

struct Problem {
    env: Environment,
    policy: Option<PolicyMLP>,
    layout: LayerLayout,
}

impl Problem {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        let env = make_env(&cfg.env)?;
        if let Environment::Landscape(l) = &env {
            return Ok(Self { layout: LayerLayout::flat(l.dim)?, env, policy: None });
        }
        let backend = cfg.backend();
        let hidden = cfg.hidden.clone().unwrap_or_else(|| match env {
            Environment::Lqr(_) => Vec::new(),
            _ => vec![16, 16],
        });
        let head = cfg.head.unwrap_or(match backend {
            Backend::Analytic => PolicyHead::Deterministic,
            Backend::Reinforce => PolicyHead::Gaussian,
        });
        let policy = PolicyMLP::new(env.state_dim(), &hidden, env.action_dim(), head)?;
        if backend == Backend::Analytic && !policy.is_linear() {
            return Err(Error::InvalidConfig("the analytic LQR backend needs a linear policy (hidden = [])".into()));
        }
        Ok(Self { layout: policy.layout().clone(), env, policy: Some(policy) })
    }

    fn init_theta(&self, rng: &mut RngStream) -> Vec<f64> {
        match &self.policy {
            Some(p) => p.init(rng),
            None => (0..self.layout.dim()).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        }
    }

    /// Deterministic gradient field; REINFORCE draws are frozen by `seed`.
    fn gradient(&self, cfg: &TrainConfig, theta: &[f64], seed: u64) -> Vec<f64> {
        let result = match (&self.env, &self.policy) {
            (Environment::Landscape(l), _) => Ok(l.gradient(theta)),
            (Environment::Lqr(e), Some(p)) if cfg.backend() == Backend::Analytic => lqr_analytic_gradient(e, p, theta, cfg.gamma),
            (env, Some(p)) => policy_gradient_reinforce(env, p, theta, cfg.episodes_per_update, cfg.gamma, &mut RngStream::new(seed)),
            _ => unreachable!("non-landscape problems always have a policy"),
        };
        result.unwrap_or_else(|_| vec![f64::NAN; theta.len()])
    }

    fn action(&self, theta: &[f64], state: &[f64], rng: &mut RngStream) -> Vec<f64> {
        match &self.policy {
            Some(p) => p.act(theta, state, rng),
            None => theta.to_vec(),
        }
    }

    fn evaluate(&self, theta: &[f64], episodes: usize, rng: &mut RngStream) -> f64 {
        match &self.policy {
            Some(p) => evaluate_policy(&self.env, p, theta, episodes, rng),
            None => match &self.env {
                Environment::Landscape(l) => l.value(theta),
                _ => unreachable!(),
            },
        }
    }

    fn lqr_costs(&self, theta: &[f64], gamma: f64) -> (Option<f64>, Option<f64>) {
        match (&self.env, &self.policy) {
            (Environment::Lqr(e), Some(p)) if p.is_linear() => {
                (lqr_expected_cost(e, p, theta, gamma).ok(), riccati_optimal_cost(e, gamma).ok())
            }
            _ => (None, None),
        }
    }
}

/// Rescales `t − j` to norm at most `limit·‖j‖`.
fn cap_correction(j: &[f64], mut t: Vec<f64>, limit: f64) -> Vec<f64> {
    let bound = limit * norm(j);
    let c: Vec<f64> = t.iter().zip(j).map(|(a, b)| a - b).collect();
    let size = norm(&c);
    if size > bound {
        let s = bound / size;
        for ((ti, ji), ci) in t.iter_mut().zip(j).zip(&c) {
            *ti = ji + s * ci;
        }
    }
    t
}

fn clip(v: &mut [f64], max_norm: Option<f64>) {
    if let Some(c) = max_norm {
        let n = norm(v);
        if n > c {
            v.iter_mut().for_each(|x| *x *= c / n);
        }
    }
}

/// Runs the full training loop. Every random draw comes from a substream of
/// `cfg.seed` keyed by purpose and update index, so runs are reproducible
/// and variants that take identical steps see identical randomness.
pub fn run_training(cfg: &TrainConfig) -> Result<TrainRun> {
    run_training_with(cfg, |_| {})
}

/// [`run_training`] with a callback invoked after every update.
pub fn run_training_with<F: FnMut(&StepRecord)>(cfg: &TrainConfig, mut on_record: F) -> Result<TrainRun> {
    cfg.validate()?;
    let problem = Problem::new(cfg)?;
    let root = RngStream::new(cfg.seed);
    let mut theta = problem.init_theta(&mut root.substream(TAG_INIT_POLICY));
    let net = MetricNet::new(problem.layout.clone(), cfg.metric)?;
    let mut phi = net.init_params(&mut root.substream(TAG_INIT_METRIC));
    let settings = RegularizerSettings::from_config(cfg);

    let mut collect_rng = root.substream(TAG_COLLECT);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut episode: Option<(Vec<f64>, usize)> = None;
    let mut records = Vec::with_capacity(cfg.updates());
    let mut aborted = None;
    let mut steps = 0;

    for update in 0..cfg.updates() {
        let started = Instant::now();
        for _ in 0..cfg.update_interval {
            let (state, t) = episode.take().unwrap_or_else(|| (problem.env.reset(&mut collect_rng), 0));
            let action = problem.action(&theta, &state, &mut collect_rng);
            let step = problem.env.step(&state, &action, t, &mut collect_rng);
            if !step.done {
                episode = Some((step.next.clone(), t + 1));
            }
            buffer.push(Transition { state, action, reward: step.reward, next_state: step.next, done: step.done });
        }
        steps += cfg.update_interval;

        let update_rng = root.substream(TAG_UPDATE).substream(update as u64);
        let grad_seed = update_rng.substream(0).next_u64();
        let grad_fn = |x: &[f64]| problem.gradient(cfg, x, grad_seed);
        let grad = grad_fn(&theta);

        let mut outcome = match regularize_step(&net, &mut phi, &theta, &grad, grad_fn, &settings, &update_rng) {
            Ok(o) => o,
            Err(e) => {
                aborted = Some(format!("update {update}: {e}"));
                break;
            }
        };
        clip(&mut outcome.direction, cfg.max_step_norm);
        for (t, d) in theta.iter_mut().zip(&outcome.direction) {
            *t += cfg.lr * d;
        }
        if !all_finite(&theta) {
            aborted = Some(format!("update {update}: parameters became non-finite"));
            break;
        }
        let eval_return = problem.evaluate(&theta, cfg.eval_episodes, &mut update_rng.substream(3));
        let record = StepRecord {
            step: steps,
            update,
            eval_return,
            div: outcome.report.div,
            hessian_trace: outcome.report.hessian_trace,
            ratio: outcome.report.ratio,
            ratio_before: outcome.ratio_before,
            gated: outcome.gated,
            fallback: outcome.fallback.is_some(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        on_record(&record);
        records.push(record);
    }

    let (final_cost, optimal_cost) = problem.lqr_costs(&theta, cfg.gamma);
    let finite_ratios: Vec<f64> = records.iter().map(|r| r.ratio).filter(|r| r.is_finite()).collect();
    let ratio_below_one = if finite_ratios.is_empty() {
        0.0
    } else {
        finite_ratios.iter().filter(|&&r| r < 1.0).count() as f64 / finite_ratios.len() as f64
    };
    let summary = RunSummary {
        final_return: records.last().map_or(f64::NAN, |r| r.eval_return),
        best_return: records.iter().map(|r| r.eval_return).fold(f64::NEG_INFINITY, f64::max),
        ratio_below_one,
        final_cost,
        optimal_cost,
        final_theta: theta,
        aborted,
        records,
        config: cfg.clone(),
    };
    Ok(TrainRun { summary, net, phi })
}

/// `directionᵀ·grad`; positive whenever the step ascends.
pub fn ascent_alignment(direction: &[f64], grad: &[f64]) -> f64 {
    dot(direction, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(variant: Variant, updates: usize) -> TrainConfig {
        TrainConfig {
            env: EnvSpec::quadratic_bowl(4),
            variant,
            total_steps: 50 * updates,
            probe_count: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn baseline_passes_gradient_through() {
        let net = MetricNet::new(LayerLayout::flat(3).unwrap(), MetricNetConfig::default()).unwrap();
        let mut phi = net.init_params(&mut RngStream::new(0));
        let before = phi.clone();
        let settings = RegularizerSettings::from_config(&TrainConfig { variant: Variant::Baseline, probe_count: 4, ..TrainConfig::default() });
        let grad_fn = |x: &[f64]| x.iter().map(|v| -v).collect::<Vec<_>>();
        let theta = [0.3, -0.2, 0.1];
        let out = regularize_step(&net, &mut phi, &theta, &grad_fn(&theta), grad_fn, &settings, &RngStream::new(1)).unwrap();
        assert_eq!(out.direction, grad_fn(&theta));
        assert_eq!(phi, before);
        assert_eq!(out.report.ratio, 1.0);
    }

    #[test]
    fn zero_heads_reduce_to_gradient_and_gate() {
        let net = MetricNet::new(LayerLayout::flat(3).unwrap(), MetricNetConfig::default()).unwrap();
        let mut phi = net.init_params(&mut RngStream::new(0));
        let cfg = TrainConfig { variant: Variant::J, gate: Some(true), freeze_metric: true, probe_count: 4, ..TrainConfig::default() };
        let grad_fn = |x: &[f64]| x.iter().enumerate().map(|(i, v)| -(i as f64 + 1.0) * v).collect::<Vec<_>>();
        let theta = [0.3, -0.2, 0.1];
        let g = grad_fn(&theta);
        let out = regularize_step(&net, &mut phi, &theta, &g, grad_fn, &RegularizerSettings::from_config(&cfg), &RngStream::new(1)).unwrap();
        assert_eq!(out.direction, g);
        assert!((out.report.ratio - 1.0).abs() < 1e-12);
        assert!(out.gated);
    }

    #[test]
    fn bowl_converges_for_all_variants() {
        for variant in [Variant::Baseline, Variant::J, Variant::T] {
            let run = run_training(&bowl(variant, 500)).unwrap();
            assert!(run.summary.aborted.is_none());
            assert!(norm(&run.summary.final_theta) <= 1e-2, "{variant:?}: {:?}", run.summary.final_theta);
        }
    }

    #[test]
    fn j_direction_ascends() {
        let net = MetricNet::new(LayerLayout::flat(5).unwrap(), MetricNetConfig::default()).unwrap();
        let settings = RegularizerSettings::from_config(&TrainConfig { variant: Variant::J, probe_count: 4, ..TrainConfig::default() });
        let grad_fn = |x: &[f64]| x.iter().enumerate().map(|(i, v)| -(i as f64 + 1.0) * v).collect::<Vec<_>>();
        for seed in 0..10 {
            let mut rng = RngStream::new(seed);
            let mut phi = net.init_params(&mut rng);
            let theta: Vec<f64> = (0..5).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let g = grad_fn(&theta);
            let out = regularize_step(&net, &mut phi, &theta, &g, grad_fn, &settings, &rng.substream(1)).unwrap();
            assert!(ascent_alignment(&out.direction, &g) > 0.0);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = bowl(Variant::T, 10);
        let a = run_training(&cfg).unwrap().summary;
        let b = run_training(&cfg).unwrap().summary;
        let strip = |s: &RunSummary| s.records.iter().map(|r| StepRecord { wall_ms: 0.0, ..r.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.final_theta, b.final_theta);
    }

    #[test]
    fn frozen_zero_metric_matches_baseline_exactly() {
        let base = run_training(&TrainConfig { total_steps: 1000, ..TrainConfig::default() }).unwrap().summary;
        let j = run_training(&TrainConfig { total_steps: 1000, variant: Variant::J, freeze_metric: true, ..TrainConfig::default() })
            .unwrap()
            .summary;
        assert_eq!(base.final_theta, j.final_theta);
        let returns = |s: &RunSummary| s.records.iter().map(|r| r.eval_return.to_bits()).collect::<Vec<_>>();
        assert_eq!(returns(&base), returns(&j));
    }

    #[test]
    fn gate_bookkeeping() {
        let run = run_training(&bowl(Variant::T, 20)).unwrap();
        for r in &run.summary.records {
            if r.ratio >= 1.0 {
                assert!(r.gated);
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TrainConfig { gamma: 1.5, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { total_steps: 10, ..TrainConfig::default() },
            TrainConfig { kappa: -1.0, ..TrainConfig::default() },
            TrainConfig { probe_count: 0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(run_training(&cfg), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }
}
