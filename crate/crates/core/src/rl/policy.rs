//! Small tanh MLP policies over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Eval, Recorder, RngStream};
use crate::metric_net::LayerLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyHead {
    /// Mean from the network, state-independent learnable log-std appended to θ.
    Gaussian,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMLP {
    sizes: Vec<usize>,
    head: PolicyHead,
    layout: LayerLayout,
}

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

impl PolicyMLP {
    /// Empty `hidden` gives a linear policy `a = W·s + b`.
    pub fn new(state_dim: usize, hidden: &[usize], action_dim: usize, head: PolicyHead) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || hidden.contains(&0) {
            return Err(Error::BadDimensions("policy layer sizes must be >= 1".into()));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let log_std = (head == PolicyHead::Gaussian).then_some(action_dim);
        let layout = LayerLayout::mlp(&sizes, log_std)?;
        Ok(Self { sizes, head, layout })
    }

    pub fn layout(&self) -> &LayerLayout {
        &self.layout
    }

    pub fn head(&self) -> PolicyHead {
        self.head
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn state_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn action_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn is_linear(&self) -> bool {
        self.sizes.len() == 2
    }

    /// Hidden weights uniform in `±1/√fan_in`, output weights ten times
    /// smaller, zero biases, log-std at −0.5.
    pub fn init(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dim());
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let scale = if l + 1 == layers { 0.1 } else { 1.0 };
            let bound = scale / (w[0] as f64).sqrt();
            theta.extend((0..w[0] * w[1]).map(|_| rng.uniform(-bound, bound)));
            theta.extend(std::iter::repeat_n(0.0, w[1]));
        }
        if self.head == PolicyHead::Gaussian {
            theta.extend(std::iter::repeat_n(-0.5, self.action_dim()));
        }
        theta
    }

    pub fn check(&self, theta_len: usize) -> Result<()> {
        self.layout.check_len(theta_len)
    }

    /// Network output for `state`, recorded.
    pub fn mean_with<R: Recorder>(&self, r: &mut R, theta: &[R::V], state: &[f64]) -> Vec<R::V> {
        assert_eq!(state.len(), self.state_dim(), "state dimension mismatch");
        let mut x = r.constants(state);
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, out) = (w[0], w[1]);
            let weights = &theta[off..off + fan_in * out];
            let bias = &theta[off + fan_in * out..off + fan_in * out + out];
            off += fan_in * out + out;
            let y: Vec<R::V> = (0..out)
                .map(|o| {
                    let mut acc = bias[o];
                    for (&wi, &xi) in weights[o * fan_in..(o + 1) * fan_in].iter().zip(&x) {
                        let p = r.mul(wi, xi);
                        acc = r.add(acc, p);
                    }
                    if l + 1 < layers {
                        r.tanh(acc)
                    } else {
                        acc
                    }
                })
                .collect();
            x = y;
        }
        x
    }

    pub fn mean(&self, theta: &[f64], state: &[f64]) -> Vec<f64> {
        self.mean_with(&mut Eval, theta, state)
    }

    pub fn log_std<'a, T>(&self, theta: &'a [T]) -> Option<&'a [T]> {
        (self.head == PolicyHead::Gaussian).then(|| &theta[theta.len() - self.action_dim()..])
    }

    /// Sampled action for a Gaussian head, the mean otherwise.
    pub fn act(&self, theta: &[f64], state: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let mean = self.mean(theta, state);
        match self.log_std(theta) {
            Some(ls) => mean.iter().zip(ls).map(|(m, l)| m + l.exp() * rng.normal()).collect(),
            None => mean,
        }
    }

    /// `log π(action | state)` for the Gaussian head, recorded.
    pub fn log_prob_with<R: Recorder>(&self, r: &mut R, theta: &[R::V], state: &[f64], action: &[f64]) -> R::V {
        let mean = self.mean_with(r, theta, state);
        let log_std = self.log_std(theta).expect("log-probabilities need a Gaussian head");
        let mut acc = r.constant(-0.5 * LOG_2PI * action.len() as f64);
        for ((&m, &ls), &a) in mean.iter().zip(log_std).zip(action) {
            let z = r.offset(m, -a);
            let z2 = r.square(z);
            let neg2 = r.scale(ls, -2.0);
            let inv_var = r.exp(neg2);
            let q = r.mul(z2, inv_var);
            acc = r.fma_const(acc, q, -0.5);
            acc = r.sub(acc, ls);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::DiffGraph;

    #[test]
    fn layout_sizes_and_round_trip() {
        let p = PolicyMLP::new(4, &[16, 16], 2, PolicyHead::Gaussian).unwrap();
        assert_eq!(p.dim(), 4 * 16 + 16 + 16 * 16 + 16 + 16 * 2 + 2 + 2);
        let theta = p.init(&mut RngStream::new(1));
        let parts: Vec<Vec<f64>> = p.layout().unflatten(&theta).unwrap().iter().map(|s| s.to_vec()).collect();
        assert_eq!(p.layout().flatten(&parts).unwrap(), theta);
        let lin = PolicyMLP::new(1, &[], 1, PolicyHead::Deterministic).unwrap();
        assert_eq!(lin.dim(), 2);
        assert!(lin.is_linear());
    }

    #[test]
    fn linear_policy_is_affine() {
        let p = PolicyMLP::new(2, &[], 1, PolicyHead::Deterministic).unwrap();
        assert_eq!(p.mean(&[0.5, -1.0, 0.25], &[2.0, 3.0]), vec![1.0 - 3.0 + 0.25]);
    }

    #[test]
    fn actions_are_finite() {
        let p = PolicyMLP::new(3, &[8, 8], 2, PolicyHead::Gaussian).unwrap();
        let theta = p.init(&mut RngStream::new(2));
        let a = p.act(&theta, &[1e3, -1e3, 0.5], &mut RngStream::new(3));
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gaussian_log_prob_closed_form() {
        let p = PolicyMLP::new(1, &[], 1, PolicyHead::Gaussian).unwrap();
        let theta = [2.0, 0.5, 0.3];
        let lp = p.log_prob_with(&mut Eval, &theta, &[1.0], &[3.0]);
        let sigma = 0.3f64.exp();
        let expected = -0.5 * LOG_2PI - 0.3 - 0.5 * ((3.0 - 2.5) / sigma).powi(2);
        assert!((lp - expected).abs() < 1e-14);
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = PolicyMLP::new(2, &[4], 2, PolicyHead::Gaussian).unwrap();
        let theta = p.init(&mut RngStream::new(5));
        let (s, a) = ([0.3, -0.8], [0.1, 0.4]);
        let mut g = DiffGraph::new();
        let vars = g.params(&theta);
        let out = p.log_prob_with(&mut g, &vars, &s, &a);
        let grad = g.backprop(out);
        for i in [0, 7, theta.len() - 1] {
            let mut tp = theta.clone();
            tp[i] += 1e-6;
            let mut tm = theta.clone();
            tm[i] -= 1e-6;
            let fd = (p.log_prob_with(&mut Eval, &tp, &s, &a) - p.log_prob_with(&mut Eval, &tm, &s, &a)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}
