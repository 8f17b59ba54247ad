//! Episode rollouts and the REINFORCE gradient estimator.

use crate::error::{Error, Result};
use crate::math::{all_finite, DiffGraph, Recorder, RngStream};
use crate::rl::env::Environment;
use crate::rl::policy::{PolicyHead, PolicyMLP};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Next state of every step.
    pub next_states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        discounted_return(&self.rewards, gamma)
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// `Σ γᵗ rₜ`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut scale = 1.0;
    let mut acc = 0.0;
    for &r in rewards {
        acc += scale * r;
        scale *= gamma;
    }
    acc
}

/// `Gₜ = Σ_{k≥t} γ^{k−t} r_k`.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// One episode. `stochastic = false` acts with the policy mean.
pub fn rollout(env: &Environment, policy: &PolicyMLP, theta: &[f64], stochastic: bool, rng: &mut RngStream) -> Trajectory {
    let mut traj = Trajectory::default();
    let mut state = env.reset(rng);
    for t in 0..env.horizon() {
        let action = if stochastic { policy.act(theta, &state, rng) } else { policy.mean(theta, &state) };
        let step = env.step(&state, &action, t, rng);
        traj.states.push(std::mem::take(&mut state));
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        traj.next_states.push(step.next.clone());
        state = step.next;
        if step.done {
            break;
        }
    }
    traj
}

/// REINFORCE with return-to-go and a per-timestep mean baseline over the
/// batch, weighted by `γᵗ`, from already sampled episodes.
pub fn reinforce_from_trajectories(policy: &PolicyMLP, theta: &[f64], trajs: &[Trajectory], gamma: f64) -> Vec<f64> {
    let rtg: Vec<Vec<f64>> = trajs.iter().map(|t| returns_to_go(&t.rewards, gamma)).collect();
    let longest = trajs.iter().map(Trajectory::len).max().unwrap_or(0);
    let baseline: Vec<f64> = (0..longest)
        .map(|t| {
            let (sum, count) = rtg.iter().filter_map(|g| g.get(t)).fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            sum / count as f64
        })
        .collect();
    let mut g = DiffGraph::new();
    let vars = g.params(theta);
    let mut objective = g.constant(0.0);
    let inv_batch = 1.0 / trajs.len().max(1) as f64;
    for (traj, returns) in trajs.iter().zip(&rtg) {
        let mut discount = 1.0;
        for t in 0..traj.len() {
            let weight = discount * (returns[t] - baseline[t]) * inv_batch;
            discount *= gamma;
            if weight == 0.0 {
                continue;
            }
            let lp = policy.log_prob_with(&mut g, &vars, &traj.states[t], &traj.actions[t]);
            objective = g.fma_const(objective, lp, weight);
        }
    }
    g.backprop(objective)
}

/// Ascent gradient of the expected discounted return. On a landscape the
/// return is an analytic function of `θ` and its exact gradient is returned.
pub fn policy_gradient_reinforce(
    env: &Environment,
    policy: &PolicyMLP,
    theta: &[f64],
    episodes: usize,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if let Environment::Landscape(l) = env {
        if theta.len() != l.dim {
            return Err(Error::BadDimensions(format!("landscape expects {} parameters", l.dim)));
        }
        return Ok(l.gradient(theta));
    }
    policy.check(theta.len())?;
    if policy.head() != PolicyHead::Gaussian {
        return Err(Error::InvalidConfig("REINFORCE needs a Gaussian policy head".into()));
    }
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be >= 1".into()));
    }
    let trajs: Vec<Trajectory> = (0..episodes).map(|_| rollout(env, policy, theta, true, rng)).collect();
    let grad = reinforce_from_trajectories(policy, theta, &trajs, gamma);
    if !all_finite(&grad) {
        return Err(Error::NonFiniteField);
    }
    Ok(grad)
}

/// Mean undiscounted return of `episodes` deterministic test episodes.
pub fn evaluate_policy(env: &Environment, policy: &PolicyMLP, theta: &[f64], episodes: usize, rng: &mut RngStream) -> f64 {
    if let Environment::Landscape(l) = env {
        return l.value(theta);
    }
    let total: f64 = (0..episodes).map(|_| rollout(env, policy, theta, false, rng).total_reward()).sum();
    total / episodes.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::{make_env, EnvSpec};

    #[test]
    fn discounted_return_matches_reverse_accumulation() {
        let mut rng = RngStream::new(1);
        let rewards: Vec<f64> = (0..37).map(|_| rng.normal()).collect();
        let forward = discounted_return(&rewards, 0.97);
        assert!((forward - returns_to_go(&rewards, 0.97)[0]).abs() < 1e-12);
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
    }

    #[test]
    fn constant_rewards_give_zero_gradient() {
        let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Gaussian).unwrap();
        let theta = policy.init(&mut RngStream::new(0));
        let env = make_env(&EnvSpec::lqr_1d()).unwrap();
        let mut rng = RngStream::new(2);
        let mut trajs: Vec<Trajectory> = (0..100).map(|_| rollout(&env, &policy, &theta, true, &mut rng)).collect();
        for t in &mut trajs {
            t.rewards.iter_mut().for_each(|r| *r = 1.0);
        }
        let g = reinforce_from_trajectories(&policy, &theta, &trajs, 0.99);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn landscape_gradient_is_analytic() {
        let env = make_env(&EnvSpec::quadratic_bowl(3)).unwrap();
        let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Gaussian).unwrap();
        let g = policy_gradient_reinforce(&env, &policy, &[1.0, 1.0, -2.0], 1, 0.99, &mut RngStream::new(0)).unwrap();
        assert_eq!(g, vec![-1.0, -2.0, 6.0]);
    }

    #[test]
    fn rollout_is_deterministic_given_seed() {
        let env = make_env(&EnvSpec::Pointmass { horizon: 20 }).unwrap();
        let policy = PolicyMLP::new(4, &[8], 2, PolicyHead::Gaussian).unwrap();
        let theta = policy.init(&mut RngStream::new(1));
        let a = rollout(&env, &policy, &theta, true, &mut RngStream::new(9));
        let b = rollout(&env, &policy, &theta, true, &mut RngStream::new(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
    }

    #[test]
    fn deterministic_head_is_rejected() {
        let env = make_env(&EnvSpec::lqr_1d()).unwrap();
        let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Deterministic).unwrap();
        let r = policy_gradient_reinforce(&env, &policy, &[0.0, 0.0], 4, 0.99, &mut RngStream::new(0));
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }
}
