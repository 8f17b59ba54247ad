use rpg_core::divergence::{
    covariant_laplacian_oracle, default_fd_step, divergence_estimate, divergence_exact, hessian_trace_hutchinson, laplace_beltrami_oracle,
    FieldEvaluator, ProbeConfig,
};
use rpg_core::geodesic::{
    angle_between, christoffel_fd, geodesic_gradient, geodesic_gradient_component, geodesic_ode_direction, metric_compatibility_residual,
    GeodesicConfig,
};
use rpg_core::math::{median, norm, DenseMatrix, RngStream};
use rpg_core::metric::MetricPoint;
use rpg_core::metric_net::{LayerLayout, MetricNet, MetricNetConfig, ProbeBatch};
use rpg_core::rl::{lqr_analytic_gradient, make_env, policy_gradient_reinforce, EnvSpec, Environment, PolicyHead, PolicyMLP};

/// `f(θ) = ½θᵀAθ + Σ cᵢ sin θᵢ` with `A = BᵀB/n`.
struct Objective {
    a: DenseMatrix,
    c: Vec<f64>,
}

impl Objective {
    fn random(n: usize, rng: &mut RngStream) -> Self {
        let b = DenseMatrix::from_fn(n, n, |_, _| rng.normal());
        let a = b.transpose().matmul(&b).scale(1.0 / n as f64);
        let c = (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect();
        Self { a, c }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let ax = self.a.matvec(x);
        0.5 * x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>() + x.iter().zip(&self.c).map(|(v, c)| c * v.sin()).sum::<f64>()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x).iter().zip(x.iter().zip(&self.c)).map(|(g, (v, c))| g + c * v.cos()).collect()
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        self.a.trace() - x.iter().zip(&self.c).map(|(v, c)| c * v.sin()).sum::<f64>()
    }
}

/// `u(θ) = s·tanh(Wθ + b)`.
struct Field {
    w: DenseMatrix,
    b: Vec<f64>,
    s: f64,
}

impl Field {
    fn random(n: usize, s: f64, rng: &mut RngStream) -> Self {
        let w = DenseMatrix::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0));
        let b = (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect();
        Self { w, b, s }
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.w.matvec(x).iter().zip(&self.b).map(|(v, b)| self.s * (v + b).tanh()).collect()
    }
}

fn random_point(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

#[test]
fn divergence_matches_laplace_beltrami_on_random_fixtures() {
    let mut rng = RngStream::new(101);
    for fixture in 0..20 {
        let n = 2 + fixture % 5;
        let f = Objective::random(n, &mut rng);
        let u = Field::random(n, 1.0, &mut rng);
        let theta = random_point(n, &mut rng);
        let fe = FieldEvaluator::new(n, |x: &[f64]| f.grad(x), |x: &[f64]| u.eval(x));
        let exact = divergence_exact(&fe, &theta, default_fd_step(&theta)).unwrap();
        let lb = laplace_beltrami_oracle(|x: &[f64]| f.value(x), |x: &[f64]| u.eval(x), &theta).unwrap();
        let cov = covariant_laplacian_oracle(|x: &[f64]| f.value(x), |x: &[f64]| u.eval(x), &theta).unwrap();
        assert!((exact - lb).abs() <= 1e-3, "fixture {fixture}: exact {exact} oracle {lb}");
        assert!((cov - lb).abs() <= 1e-3, "fixture {fixture}: covariant {cov} oracle {lb}");
    }
}

#[test]
fn euclidean_divergence_is_laplacian() {
    let mut rng = RngStream::new(7);
    for n in [2, 5, 9] {
        let f = Objective::random(n, &mut rng);
        let theta = random_point(n, &mut rng);
        let fe = FieldEvaluator::new(n, |x: &[f64]| f.grad(x), |_: &[f64]| vec![0.0; n]);
        let d = divergence_exact(&fe, &theta, default_fd_step(&theta)).unwrap();
        assert!((d - f.laplacian(&theta)).abs() <= 1e-6);
    }
}

#[test]
fn hutchinson_is_exact_on_diagonal_quadratics() {
    let d = [1.0, 2.0, 3.0];
    let grad = |x: &[f64]| x.iter().zip(&d).map(|(v, c)| v * c).collect::<Vec<_>>();
    for seed in 0..5 {
        let t = hessian_trace_hutchinson(grad, &[0.2, -0.4, 0.9], &ProbeConfig::new(3, seed)).unwrap();
        assert!((t - 6.0).abs() <= 1e-6);
    }
}

#[test]
fn hutchinson_within_ten_percent_at_256_probes() {
    let mut errors = Vec::new();
    for seed in 0..20 {
        let mut rng = RngStream::new(1000 + seed);
        let f = Objective { c: vec![0.0; 16], ..Objective::random(16, &mut rng) };
        let theta = random_point(16, &mut rng);
        let est = hessian_trace_hutchinson(|x: &[f64]| f.grad(x), &theta, &ProbeConfig::new(256, seed)).unwrap();
        let exact = f.a.trace();
        errors.push((est - exact).abs() / exact.abs());
    }
    assert!(median(&errors) <= 0.10, "median relative error {}", median(&errors));
}

fn estimate_errors(k: usize) -> Vec<f64> {
    (0..20)
        .map(|seed| {
            let mut rng = RngStream::new(5000 + seed);
            let f = Objective::random(16, &mut rng);
            let u = Field::random(16, 0.5, &mut rng);
            let theta = random_point(16, &mut rng);
            let fe = FieldEvaluator::new(16, |x: &[f64]| f.grad(x), |x: &[f64]| u.eval(x));
            let exact = divergence_exact(&fe, &theta, default_fd_step(&theta)).unwrap();
            let est = divergence_estimate(&fe, &theta, &ProbeConfig::new(k, seed)).unwrap();
            (est - exact).abs() / exact.abs()
        })
        .collect()
}

#[test]
fn divergence_estimate_within_fifteen_percent_at_64_probes() {
    let m = median(&estimate_errors(64));
    assert!(m <= 0.15, "median relative error {m}");
}

#[test]
fn divergence_estimate_error_decreases_with_probe_count() {
    let medians: Vec<f64> = [4, 16, 64, 256].iter().map(|&k| median(&estimate_errors(k))).collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn geodesic_matrix_and_component_forms_agree() {
    let mut rng = RngStream::new(31);
    for fixture in 0..20 {
        let n = 2 + fixture % 7;
        let u = Field::random(n, 1.0, &mut rng);
        let theta = random_point(n, &mut rng);
        let j = random_point(n, &mut rng);
        let cfg = GeodesicConfig::with_kappa(rng.uniform(0.05, 1.0));
        let a = geodesic_gradient(|x: &[f64]| u.eval(x), &theta, &j, &cfg).unwrap();
        let b = geodesic_gradient_component(|x: &[f64]| u.eval(x), &theta, &j, &cfg).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm(&diff) <= 1e-4 * norm(&b), "fixture {fixture}");
    }
}

#[test]
fn christoffel_symbols_are_metric_compatible() {
    let mut rng = RngStream::new(41);
    for fixture in 0..10 {
        let n = 2 + fixture % 3;
        let u = Field::random(n, 1.0, &mut rng);
        let theta = random_point(n, &mut rng);
        let gamma = christoffel_fd(|x: &[f64]| u.eval(x), &theta, 1e-4).unwrap();
        assert!(gamma.asymmetry() <= 1e-6);
        assert!(metric_compatibility_residual(|x: &[f64]| u.eval(x), &theta, 1e-4).unwrap() <= 1e-4);
    }
}

#[test]
fn geodesic_direction_converges_to_ode_tangent() {
    let mut per_dt = vec![Vec::new(); 3];
    let mut rng = RngStream::new(61);
    for _ in 0..10 {
        let u = Field::random(3, 1.0, &mut rng);
        let theta = random_point(3, &mut rng);
        let j = random_point(3, &mut rng);
        for (slot, dt) in [1e-2, 1e-3, 1e-4].into_iter().enumerate() {
            let ode = geodesic_ode_direction(|x: &[f64]| u.eval(x), &theta, &j, dt).unwrap();
            let t = geodesic_gradient_component(|x: &[f64]| u.eval(x), &theta, &j, &GeodesicConfig::with_kappa(dt / 2.0)).unwrap();
            per_dt[slot].push(angle_between(&ode, &t));
        }
    }
    let medians: Vec<f64> = per_dt.iter().map(|a| median(a)).collect();
    assert!(medians[1] <= 1e-2, "{medians:?}");
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn initial_metric_net_is_euclidean() {
    let net = MetricNet::new(LayerLayout::flat(12).unwrap(), MetricNetConfig::default()).unwrap();
    let mut rng = RngStream::new(3);
    let phi = net.init_params(&mut rng);
    let f = Objective::random(12, &mut rng);
    let theta = random_point(12, &mut rng);
    assert_eq!(net.u(&phi, &theta).unwrap(), vec![0.0; 12]);
    let g = f.grad(&theta);
    assert_eq!(MetricPoint::new(net.u(&phi, &theta).unwrap()).regularized_gradient(&g), g);
    let pc = ProbeConfig::new(16, 4);
    let batch = ProbeBatch::sample(&theta, &|x: &[f64]| f.grad(x), pc.probes(12), pc.step_for(&theta)).unwrap();
    assert!((batch.divergence(&net, &phi) - batch.hessian_trace()).abs() <= 1e-12);
}

#[test]
fn reinforce_sign_agrees_with_analytic_lqr_gradient() {
    let env = make_env(&EnvSpec::lqr_1d()).unwrap();
    let Environment::Lqr(lqr) = &env else { unreachable!() };
    let policy = PolicyMLP::new(1, &[], 1, PolicyHead::Gaussian).unwrap();
    let theta = [-0.3, 0.0, -0.5];
    let analytic = lqr_analytic_gradient(lqr, &policy, &theta, 0.99).unwrap();
    let mut agree = 0;
    for draw in 0..100 {
        let g = policy_gradient_reinforce(&env, &policy, &theta, 10, 0.99, &mut RngStream::new(draw)).unwrap();
        if g[0].signum() == analytic[0].signum() {
            agree += 1;
        }
    }
    assert!(agree >= 95, "{agree}/100 draws agree");
}
