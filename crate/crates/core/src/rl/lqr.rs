//! Exact expected return of linear policies on LQR problems, its gradient,
//! and Riccati optima.
//!
//! With `s₀ ~ N(0, I)` and a linear-Gaussian policy `a = W·s + b + σ∘ε`, the
//! state stays Gaussian, so propagating its mean `m` and covariance `C`
//! gives the expected discounted cost in closed form:
//!
//! ```text
//! costₜ = tr(QC) + mᵀQm + tr(R·WCWᵀ) + āᵀRā + Σ R_kk σ_k²,   ā = Wm + b
//! m' = Fm + Bb,   C' = FCFᵀ + B·diag(σ²)·Bᵀ + noise²·I,   F = A + BW
//! ```

use crate::error::{Error, Result};
use crate::math::{dense_inverse, DenseMatrix, DiffGraph, Eval, Recorder};
use crate::rl::env::LqrEnv;
use crate::rl::policy::PolicyMLP;

fn check_policy(env: &LqrEnv, policy: &PolicyMLP, theta_len: usize) -> Result<()> {
    if !policy.is_linear() {
        return Err(Error::InvalidConfig("the analytic LQR gradient needs a linear policy".into()));
    }
    if policy.state_dim() != env.state_dim() || policy.action_dim() != env.action_dim() {
        return Err(Error::BadDimensions("policy does not match the LQR dimensions".into()));
    }
    policy.check(theta_len)
}

/// Expected discounted return `−Σₜ γᵗ E[costₜ]` over the environment horizon, recorded.
pub fn expected_return_with<R: Recorder>(r: &mut R, env: &LqrEnv, policy: &PolicyMLP, theta: &[R::V], gamma: f64) -> R::V {
    let (d, p) = (env.state_dim(), env.action_dim());
    let w = &theta[..p * d];
    let b = &theta[p * d..p * d + p];
    let var: Option<Vec<R::V>> = policy.log_std(theta).map(|ls| {
        ls.iter()
            .map(|&l| {
                let two = r.scale(l, 2.0);
                r.exp(two)
            })
            .collect()
    });

    let f: Vec<R::V> = (0..d * d)
        .map(|ij| {
            let (i, j) = (ij / d, ij % d);
            let mut acc = r.constant(env.a[(i, j)]);
            for k in 0..p {
                acc = r.fma_const(acc, w[k * d + j], env.b[(i, k)]);
            }
            acc
        })
        .collect();
    let bb: Vec<R::V> = (0..d)
        .map(|i| {
            let mut acc = r.constant(0.0);
            for k in 0..p {
                acc = r.fma_const(acc, b[k], env.b[(i, k)]);
            }
            acc
        })
        .collect();
    // B·diag(σ²)·Bᵀ + noise²·I does not change over time.
    let drive: Vec<R::V> = (0..d * d)
        .map(|ij| {
            let (i, j) = (ij / d, ij % d);
            let mut acc = r.constant(if i == j { env.noise_std * env.noise_std } else { 0.0 });
            if let Some(var) = &var {
                for k in 0..p {
                    acc = r.fma_const(acc, var[k], env.b[(i, k)] * env.b[(j, k)]);
                }
            }
            acc
        })
        .collect();

    let mut m: Vec<R::V> = (0..d).map(|_| r.constant(0.0)).collect();
    let mut c: Vec<R::V> = (0..d * d).map(|ij| r.constant(if ij / d == ij % d { 1.0 } else { 0.0 })).collect();
    let mut total = r.constant(0.0);
    let mut discount = 1.0;
    for _ in 0..env.horizon {
        let mut cost = r.constant(0.0);
        for i in 0..d {
            for j in 0..d {
                let q = env.q[(i, j)];
                if q != 0.0 {
                    cost = r.fma_const(cost, c[i * d + j], q);
                    let mm = r.mul(m[i], m[j]);
                    cost = r.fma_const(cost, mm, q);
                }
            }
        }
        let wc = matmul(r, w, &c, p, d, d);
        let wcwt = matmul_bt(r, &wc, w, p, d, p);
        let abar: Vec<R::V> = (0..p)
            .map(|k| {
                let wm = r.dot(&w[k * d..(k + 1) * d], &m);
                r.add(wm, b[k])
            })
            .collect();
        for k in 0..p {
            for l in 0..p {
                let rc = env.r[(k, l)];
                if rc != 0.0 {
                    cost = r.fma_const(cost, wcwt[k * p + l], rc);
                    let aa = r.mul(abar[k], abar[l]);
                    cost = r.fma_const(cost, aa, rc);
                }
            }
            if let Some(var) = &var {
                cost = r.fma_const(cost, var[k], env.r[(k, k)]);
            }
        }
        total = r.fma_const(total, cost, -discount);
        discount *= gamma;

        let fm: Vec<R::V> = (0..d).map(|i| r.dot(&f[i * d..(i + 1) * d], &m)).collect();
        m = fm.iter().zip(&bb).map(|(&x, &y)| r.add(x, y)).collect();
        let fc = matmul(r, &f, &c, d, d, d);
        let fcft = matmul_bt(r, &fc, &f, d, d, d);
        c = fcft.iter().zip(&drive).map(|(&x, &y)| r.add(x, y)).collect();
    }
    total
}

/// `X·Y` for row-major `X` (n×k) and `Y` (k×m).
fn matmul<R: Recorder>(r: &mut R, x: &[R::V], y: &[R::V], n: usize, k: usize, m: usize) -> Vec<R::V> {
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let mut acc = r.constant(0.0);
            for l in 0..k {
                let p = r.mul(x[i * k + l], y[l * m + j]);
                acc = r.add(acc, p);
            }
            out.push(acc);
        }
    }
    out
}

/// `X·Yᵀ` for row-major `X` (n×k) and `Y` (m×k).
fn matmul_bt<R: Recorder>(r: &mut R, x: &[R::V], y: &[R::V], n: usize, k: usize, m: usize) -> Vec<R::V> {
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            out.push(r.dot(&x[i * k..(i + 1) * k], &y[j * k..(j + 1) * k]));
        }
    }
    out
}

pub fn lqr_expected_return(env: &LqrEnv, policy: &PolicyMLP, theta: &[f64], gamma: f64) -> Result<f64> {
    check_policy(env, policy, theta.len())?;
    Ok(expected_return_with(&mut Eval, env, policy, theta, gamma))
}

/// Expected discounted cost, `−lqr_expected_return`.
pub fn lqr_expected_cost(env: &LqrEnv, policy: &PolicyMLP, theta: &[f64], gamma: f64) -> Result<f64> {
    Ok(-lqr_expected_return(env, policy, theta, gamma)?)
}

/// Exact ascent gradient of the expected discounted return over `θ`.
pub fn lqr_analytic_gradient(env: &LqrEnv, policy: &PolicyMLP, theta: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_policy(env, policy, theta.len())?;
    let mut g = DiffGraph::new();
    let vars = g.params(theta);
    let out = expected_return_with(&mut g, env, policy, &vars, gamma);
    Ok(g.backprop(out))
}

/// Parameters of the linear policy `a = −K·s` (zero bias, negligible noise
/// for a Gaussian head).
pub fn gain_to_theta(policy: &PolicyMLP, k: &DenseMatrix) -> Result<Vec<f64>> {
    if !policy.is_linear() || k.rows() != policy.action_dim() || k.cols() != policy.state_dim() {
        return Err(Error::BadDimensions("gain does not match the linear policy".into()));
    }
    let mut theta: Vec<f64> = k.as_slice().iter().map(|v| -v).collect();
    theta.extend(std::iter::repeat_n(0.0, policy.action_dim()));
    if policy.log_std(&vec![0.0; policy.dim()]).is_some() {
        theta.extend(std::iter::repeat_n(-30.0, policy.action_dim()));
    }
    Ok(theta)
}

fn riccati_update(env: &LqrEnv, p: &DenseMatrix, gamma: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    let (a, b) = (&env.a, &env.b);
    let pa = p.matmul(a);
    let pb = p.matmul(b);
    let s = env.r.add(&b.transpose().matmul(&pb).scale(gamma));
    let k = dense_inverse(&s)?.matmul(&b.transpose().matmul(&pa)).scale(gamma);
    let next = env
        .q
        .add(&a.transpose().matmul(&pa).scale(gamma))
        .sub(&a.transpose().matmul(&pb).matmul(&k).scale(gamma));
    Ok((next, k))
}

/// Stationary discounted Riccati solution `(P, K)`; the optimal infinite-horizon
/// policy is `a = −K·s`.
pub fn riccati_gain(env: &LqrEnv, gamma: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut p = env.q.clone();
    for _ in 0..100_000 {
        let (next, k) = riccati_update(env, &p, gamma)?;
        let change = next.max_abs_diff(&p);
        p = next;
        if change <= 1e-14 * p.max_abs().max(1.0) {
            return Ok((p, k));
        }
        if !p.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence { sweeps: 100_000 })
}

/// Lowest achievable expected discounted cost over the environment horizon
/// (time-varying finite-horizon Riccati recursion), for `s₀ ~ N(0, I)`.
pub fn riccati_optimal_cost(env: &LqrEnv, gamma: f64) -> Result<f64> {
    let d = env.state_dim();
    let mut p = DenseMatrix::zeros(d, d);
    let mut offset = 0.0;
    for _ in 0..env.horizon {
        offset = gamma * (offset + env.noise_std * env.noise_std * p.trace());
        p = riccati_update(env, &p, gamma)?.0;
    }
    Ok(p.trace() + offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{max_abs_diff, norm_inf, RngStream};
    use crate::rl::env::{make_env, EnvSpec, Environment};
    use crate::rl::policy::PolicyHead;
    use crate::rl::reinforce::discounted_return;

    fn lqr(spec: &EnvSpec) -> LqrEnv {
        match make_env(spec).unwrap() {
            Environment::Lqr(e) => e,
            _ => unreachable!(),
        }
    }

    fn env_2d() -> LqrEnv {
        lqr(&EnvSpec::Lqr {
            state_dim: 2,
            action_dim: 1,
            a: Some(vec![1.0, 0.1, 0.0, 0.9]),
            b: Some(vec![0.0, 0.5]),
            q: Some(vec![1.0, 0.0, 0.0, 0.5]),
            r: Some(vec![0.2]),
            noise_std: 0.0,
            horizon: 30,
        })
    }

    /// Expected cost by deterministic rollouts through the environment: the
    /// cost is quadratic in `s₀`, so for `s₀ ~ N(0, I)` it equals
    /// `c(0) + ½Σᵢ (c(eᵢ) + c(−eᵢ) − 2c(0))`.
    fn rollout_cost(env: &LqrEnv, policy: &PolicyMLP, theta: &[f64], gamma: f64) -> f64 {
        let e = Environment::Lqr(env.clone());
        let run = |s0: Vec<f64>| {
            let mut s = s0;
            let mut rewards = Vec::new();
            let mut rng = RngStream::new(0);
            for t in 0..env.horizon {
                let a = policy.mean(theta, &s);
                let st = e.step(&s, &a, t, &mut rng);
                rewards.push(st.reward);
                s = st.next;
            }
            -discounted_return(&rewards, gamma)
        };
        let d = env.state_dim();
        let c0 = run(vec![0.0; d]);
        let mut total = c0;
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            let cp = run(e.clone());
            e[i] = -1.0;
            let cm = run(e);
            total += 0.5 * (cp + cm - 2.0 * c0);
        }
        total
    }

    fn fd_gradient(env: &LqrEnv, policy: &PolicyMLP, theta: &[f64], gamma: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|i| {
                let h = 1e-6;
                let mut p = theta.to_vec();
                p[i] += h;
                let mut m = theta.to_vec();
                m[i] -= h;
                -(rollout_cost(env, policy, &p, gamma) - rollout_cost(env, policy, &m, gamma)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn moments_match_rollouts() {
        let env = env_2d();
        let policy = PolicyMLP::new(2, &[], 1, PolicyHead::Deterministic).unwrap();
        let theta = [-0.3, -0.8, 0.2];
        let a = lqr_expected_cost(&env, &policy, &theta, 0.95).unwrap();
        let b = rollout_cost(&env, &policy, &theta, 0.95);
        assert!((a - b).abs() < 1e-10 * b.abs());
    }

    #[test]
    fn zero_gain_gradient_matches_finite_differences() {
        let env = lqr(&EnvSpec::lqr_1d());
        let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Deterministic).unwrap();
        let theta = [0.0, 0.0];
        let g = lqr_analytic_gradient(&env, &policy, &theta, 0.99).unwrap();
        let fd = fd_gradient(&env, &policy, &theta, 0.99);
        assert!(max_abs_diff(&g, &fd) <= 1e-6 * norm_inf(&g).max(1.0), "{g:?} vs {fd:?}");
        assert!(g[0] < 0.0);
    }

    #[test]
    fn two_dimensional_gradient_matches_finite_differences() {
        let env = env_2d();
        let policy = PolicyMLP::new(2, &[], 1, PolicyHead::Deterministic).unwrap();
        let theta = [-0.3, -0.8, 0.2];
        let g = lqr_analytic_gradient(&env, &policy, &theta, 0.95).unwrap();
        let fd = fd_gradient(&env, &policy, &theta, 0.95);
        assert!(max_abs_diff(&g, &fd) <= 1e-6 * norm_inf(&g).max(1.0));
    }

    #[test]
    fn riccati_gain_is_stationary() {
        let env = lqr(&EnvSpec::lqr_1d());
        let (_, k) = riccati_gain(&env, 0.99).unwrap();
        assert!(k[(0, 0)] > 0.5 && k[(0, 0)] < 0.7);
        let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Deterministic).unwrap();
        let theta = gain_to_theta(&policy, &k).unwrap();
        let g = lqr_analytic_gradient(&env, &policy, &theta, 0.99).unwrap();
        assert!(norm_inf(&g) <= 1e-8, "{g:?}");
        let best = riccati_optimal_cost(&env, 0.99).unwrap();
        let achieved = lqr_expected_cost(&env, &policy, &theta, 0.99).unwrap();
        assert!(achieved >= best - 1e-9 && achieved <= best * (1.0 + 1e-9));
    }

    #[test]
    fn sign_flip_symmetry() {
        let env = env_2d();
        let policy = PolicyMLP::new(2, &[], 1, PolicyHead::Deterministic).unwrap();
        let g1 = lqr_analytic_gradient(&env, &policy, &[-0.3, -0.8, 0.2], 0.95).unwrap();
        let g2 = lqr_analytic_gradient(&env, &policy, &[-0.3, -0.8, -0.2], 0.95).unwrap();
        assert!((g1[0] - g2[0]).abs() < 1e-10 && (g1[1] - g2[1]).abs() < 1e-10);
        assert!((g1[2] + g2[2]).abs() < 1e-10);
    }

    #[test]
    fn gaussian_noise_adds_cost() {
        let env = lqr(&EnvSpec::lqr_1d());
        let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Gaussian).unwrap();
        let quiet = lqr_expected_cost(&env, &policy, &[-0.6, 0.0, -30.0], 0.99).unwrap();
        let noisy = lqr_expected_cost(&env, &policy, &[-0.6, 0.0, 0.0], 0.99).unwrap();
        assert!(noisy > quiet);
        let g = lqr_analytic_gradient(&env, &policy, &[-0.6, 0.0, 0.0], 0.99).unwrap();
        assert!(g[2] < 0.0);
    }

    #[test]
    fn nonlinear_policy_is_rejected() {
        let env = lqr(&EnvSpec::lqr_1d());
        let policy = PolicyMLP::new(1, &[4], 1, PolicyHead::Deterministic).unwrap();
        let theta = vec![0.0; policy.dim()];
        assert!(matches!(lqr_analytic_gradient(&env, &policy, &theta, 0.99), Err(Error::InvalidConfig(_))));
    }
}
