//! Toy control problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{DenseMatrix, RngStream};

pub const MAX_HORIZON: usize = 200;
pub const MAX_LQR_STATE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandscapeKind {
    /// `−½ Σ (i+1)·θᵢ²`, maximized at `θ = 0`.
    Quadratic,
    /// Negated Rosenbrock function, maximized at `θ = 1`.
    Rosenbrock,
}

/// Environment description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvSpec {
    Lqr {
        #[serde(default = "one")]
        state_dim: usize,
        #[serde(default = "one")]
        action_dim: usize,
        /// Row-major matrices; identity when omitted.
        #[serde(default)]
        a: Option<Vec<f64>>,
        #[serde(default)]
        b: Option<Vec<f64>>,
        #[serde(default)]
        q: Option<Vec<f64>>,
        #[serde(default)]
        r: Option<Vec<f64>>,
        #[serde(default)]
        noise_std: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    Pointmass {
        #[serde(default = "default_horizon")]
        horizon: usize,
    },
    Landscape {
        function: LandscapeKind,
        dim: usize,
    },
}

fn one() -> usize {
    1
}

fn default_horizon() -> usize {
    50
}

impl EnvSpec {
    pub fn lqr_1d() -> Self {
        EnvSpec::Lqr { state_dim: 1, action_dim: 1, a: None, b: None, q: None, r: None, noise_std: 0.0, horizon: 50 }
    }

    pub fn quadratic_bowl(dim: usize) -> Self {
        EnvSpec::Landscape { function: LandscapeKind::Quadratic, dim }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrEnv {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub noise_std: f64,
    pub horizon: usize,
}

impl LqrEnv {
    pub fn new(a: DenseMatrix, b: DenseMatrix, q: DenseMatrix, r: DenseMatrix, noise_std: f64, horizon: usize) -> Result<Self> {
        let d = a.rows();
        let p = b.cols();
        if d == 0 || d > MAX_LQR_STATE || !a.is_square() {
            return Err(Error::BadDimensions(format!("LQR state dimension must be 1..={MAX_LQR_STATE}")));
        }
        if p == 0 || b.rows() != d || q.rows() != d || !q.is_square() || r.rows() != p || !r.is_square() {
            return Err(Error::BadDimensions("LQR matrices have inconsistent shapes".into()));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidConfig("noise_std must be finite and >= 0".into()));
        }
        check_horizon(horizon)?;
        Ok(Self { a, b, q, r, noise_std, horizon })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        -(quad(&self.q, s) + quad(&self.r, a))
    }
}

fn quad(m: &DenseMatrix, x: &[f64]) -> f64 {
    x.iter().zip(m.matvec(x)).map(|(a, b)| a * b).sum()
}

fn check_horizon(h: usize) -> Result<()> {
    if h == 0 || h > MAX_HORIZON {
        return Err(Error::InvalidConfig(format!("horizon must be 1..={MAX_HORIZON}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassEnv {
    pub dt: f64,
    pub action_cost: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub kind: LandscapeKind,
    pub dim: usize,
}

impl Landscape {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            LandscapeKind::Quadratic => -0.5 * x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum::<f64>(),
            LandscapeKind::Rosenbrock => -x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum::<f64>(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            LandscapeKind::Quadratic => x.iter().enumerate().map(|(i, v)| -(i as f64 + 1.0) * v).collect(),
            LandscapeKind::Rosenbrock => {
                let mut g = vec![0.0; x.len()];
                for i in 0..x.len().saturating_sub(1) {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += 400.0 * t * x[i] + 2.0 * (1.0 - x[i]);
                    g[i + 1] -= 200.0 * t;
                }
                g
            }
        }
    }

    pub fn optimum(&self) -> Vec<f64> {
        match self.kind {
            LandscapeKind::Quadratic => vec![0.0; self.dim],
            LandscapeKind::Rosenbrock => vec![1.0; self.dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Lqr(LqrEnv),
    PointMass(PointMassEnv),
    /// One-step problem whose action is the parameter vector itself.
    Landscape(Landscape),
}

fn matrix_or_identity(v: &Option<Vec<f64>>, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix> {
    match v {
        None => Ok(DenseMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })),
        Some(data) => DenseMatrix::from_row_major(rows, cols, data.clone())
            .map_err(|_| Error::BadDimensions(format!("{what} needs {rows}x{cols} entries, got {}", data.len()))),
    }
}

pub fn make_env(spec: &EnvSpec) -> Result<Environment> {
    match spec {
        EnvSpec::Lqr { state_dim, action_dim, a, b, q, r, noise_std, horizon } => {
            let (d, p) = (*state_dim, *action_dim);
            if d == 0 || d > MAX_LQR_STATE || p == 0 || p > MAX_LQR_STATE {
                return Err(Error::BadDimensions(format!("LQR dimensions must be 1..={MAX_LQR_STATE}")));
            }
            Ok(Environment::Lqr(LqrEnv::new(
                matrix_or_identity(a, d, d, "a")?,
                matrix_or_identity(b, d, p, "b")?,
                matrix_or_identity(q, d, d, "q")?,
                matrix_or_identity(r, p, p, "r")?,
                *noise_std,
                *horizon,
            )?))
        }
        EnvSpec::Pointmass { horizon } => {
            check_horizon(*horizon)?;
            Ok(Environment::PointMass(PointMassEnv { dt: 0.1, action_cost: 0.1, horizon: *horizon }))
        }
        EnvSpec::Landscape { function, dim } => {
            let min = if *function == LandscapeKind::Rosenbrock { 2 } else { 1 };
            if *dim < min {
                return Err(Error::BadDimensions(format!("landscape dimension must be >= {min}")));
            }
            Ok(Environment::Landscape(Landscape { kind: *function, dim: *dim }))
        }
    }
}

impl Environment {
    pub fn state_dim(&self) -> usize {
        match self {
            Environment::Lqr(e) => e.state_dim(),
            Environment::PointMass(_) => 4,
            Environment::Landscape(_) => 0,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Environment::Lqr(e) => e.action_dim(),
            Environment::PointMass(_) => 2,
            Environment::Landscape(l) => l.dim,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Environment::Lqr(e) => e.horizon,
            Environment::PointMass(e) => e.horizon,
            Environment::Landscape(_) => 1,
        }
    }

    pub fn reset(&self, rng: &mut RngStream) -> Vec<f64> {
        match self {
            Environment::Lqr(e) => (0..e.state_dim()).map(|_| rng.normal()).collect(),
            Environment::PointMass(_) => vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0, 0.0],
            Environment::Landscape(_) => Vec::new(),
        }
    }

    /// Transition from `state` under `action`. `t` is the index of this step
    /// within the episode.
    pub fn step(&self, state: &[f64], action: &[f64], t: usize, rng: &mut RngStream) -> Step {
        match self {
            Environment::Lqr(e) => {
                let reward = e.reward(state, action);
                let mut next = e.a.matvec(state);
                for (n, bu) in next.iter_mut().zip(e.b.matvec(action)) {
                    *n += bu;
                    if e.noise_std > 0.0 {
                        *n += e.noise_std * rng.normal();
                    }
                }
                Step { next, reward, done: t + 1 >= e.horizon }
            }
            Environment::PointMass(e) => {
                let (p, v) = (&state[..2], &state[2..]);
                let reward = -(p[0] * p[0] + p[1] * p[1] + e.action_cost * (action[0] * action[0] + action[1] * action[1]));
                let next = vec![
                    p[0] + e.dt * v[0],
                    p[1] + e.dt * v[1],
                    v[0] + e.dt * action[0],
                    v[1] + e.dt * action[1],
                ];
                Step { next, reward, done: t + 1 >= e.horizon }
            }
            Environment::Landscape(l) => Step { next: Vec::new(), reward: l.value(action), done: true },
        }
    }
}
