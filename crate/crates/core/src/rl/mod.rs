//! Toy reinforcement-learning problems and gradient estimators.

pub mod buffer;
pub mod env;
pub mod lqr;
pub mod policy;
pub mod reinforce;

pub use buffer::{ReplayBuffer, Transition};
pub use env::{make_env, EnvSpec, Environment, LandscapeKind, LqrEnv};
pub use lqr::{gain_to_theta, lqr_analytic_gradient, lqr_expected_cost, riccati_gain, riccati_optimal_cost};
pub use policy::{PolicyHead, PolicyMLP};
pub use reinforce::{discounted_return, evaluate_policy, policy_gradient_reinforce, rollout, Trajectory};
