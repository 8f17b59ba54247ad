use rpg_core::math::{median, RngStream};
use rpg_core::metric_net::{LayerLayout, MetricNet, MetricNetConfig};
use rpg_core::rl::EnvSpec;
use rpg_core::trainer::{regularize_step, run_training, RegularizerSettings, RunSummary, TrainConfig, Variant};

fn trajectory(s: &RunSummary) -> Vec<(u64, u64, u64)> {
    s.records.iter().map(|r| (r.eval_return.to_bits(), r.div.to_bits(), r.ratio.to_bits())).collect()
}

#[test]
fn metric_training_lowers_the_ratio_on_a_quadratic() {
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let cfg = TrainConfig { variant: Variant::T, ..TrainConfig::default() };
    let settings = RegularizerSettings::from_config(&cfg);
    let grad_fn = |x: &[f64]| x.iter().enumerate().map(|(i, v)| -(i as f64 + 1.0) * v).collect::<Vec<_>>();
    for seed in 0..10 {
        let net = MetricNet::new(LayerLayout::flat(8).unwrap(), MetricNetConfig::default()).unwrap();
        let mut rng = RngStream::new(seed);
        let mut phi = net.init_params(&mut rng);
        let theta: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let out = regularize_step(&net, &mut phi, &theta, &grad_fn(&theta), grad_fn, &settings, &rng.substream(9)).unwrap();
        before.push(out.ratio_before);
        after.push(out.report.ratio);
    }
    assert!(median(&after) < median(&before), "before {before:?} after {after:?}");
}

#[test]
fn frozen_zero_metric_reproduces_baseline_on_every_backend() {
    let envs = [
        TrainConfig { total_steps: 500, ..TrainConfig::default() },
        TrainConfig { env: EnvSpec::quadratic_bowl(6), total_steps: 500, ..TrainConfig::default() },
        TrainConfig { env: EnvSpec::Pointmass { horizon: 20 }, total_steps: 200, episodes_per_update: 4, eval_episodes: 2, probe_count: 4, ..TrainConfig::default() },
    ];
    for cfg in envs {
        let base = run_training(&cfg).unwrap().summary;
        let j = run_training(&TrainConfig { variant: Variant::J, freeze_metric: true, ..cfg.clone() }).unwrap().summary;
        assert_eq!(base.final_theta, j.final_theta);
        let returns = |s: &RunSummary| s.records.iter().map(|r| r.eval_return.to_bits()).collect::<Vec<_>>();
        assert_eq!(returns(&base), returns(&j));
    }
}

#[test]
fn reinforce_runs_are_deterministic() {
    let cfg = TrainConfig {
        env: EnvSpec::Pointmass { horizon: 20 },
        variant: Variant::T,
        total_steps: 200,
        episodes_per_update: 4,
        eval_episodes: 2,
        probe_count: 4,
        seed: 17,
        ..TrainConfig::default()
    };
    let a = run_training(&cfg).unwrap().summary;
    let b = run_training(&cfg).unwrap().summary;
    assert_eq!(trajectory(&a), trajectory(&b));
    assert_eq!(a.final_theta, b.final_theta);
    let c = run_training(&TrainConfig { seed: 18, ..cfg }).unwrap().summary;
    assert_ne!(a.final_theta, c.final_theta);
}

#[test]
fn summary_fraction_is_a_fraction() {
    let s = run_training(&TrainConfig { env: EnvSpec::quadratic_bowl(3), variant: Variant::J, total_steps: 1000, probe_count: 8, ..TrainConfig::default() })
        .unwrap()
        .summary;
    assert!((0.0..=1.0).contains(&s.ratio_below_one));
    assert_eq!(s.records.len(), 20);
    let below = s.records.iter().filter(|r| r.ratio < 1.0).count() as f64 / 20.0;
    assert_eq!(s.ratio_below_one, below);
}

#[test]
fn divergent_run_returns_partial_summary() {
    let cfg = TrainConfig { env: EnvSpec::quadratic_bowl(3), lr: 1e150, total_steps: 1000, ..TrainConfig::default() };
    let s = run_training(&cfg).unwrap().summary;
    assert!(s.aborted.is_some());
    assert!(s.records.len() < 20);
}
