//! Cross-module properties: descent under small constant steps, estimator
//! agreement at zero noise, PL estimates by both methods, and the on-disk
//! fixtures.

use std::path::PathBuf;

use vqe_lab::ansatz::{build_hardware_efficient, ChannelMap};
use vqe_lab::bounds::{pl_constant_estimate, smoothness_constant, total_variance, PlMethod};
use vqe_lab::config::{builtin_csv, two_parameter_toy, Builtin, ExperimentConfig, ExperimentKind, Instance, InstanceSource, Symmetry};
use vqe_lab::experiment::{bound_reports, sweep_points};
use vqe_lab::observable::{maxcut_hamiltonian, read_weight_csv, MaxCutProblem};
use vqe_lab::optimizer::{repeated_runs, sgd, GradientSource, RunConfig, Schedule, TestShots};
use vqe_lab::qem::{qem_gradient, Budget};
use vqe_lab::gradient::{estimator_variance, shot_gradient};
use vqe_lab::rng::{stream, uniform};
use vqe_lab::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn fixtures_match_builtins() {
    for (file, b) in [("maxcut3.csv", Builtin::Maxcut3), ("maxcut5.csv", Builtin::Maxcut5)] {
        assert_eq!(std::fs::read_to_string(fixture(file)).unwrap(), builtin_csv(b));
        let from_file = Instance::load(
            &InstanceSource::Csv { path: fixture(file), symmetry: Symmetry::Upper },
            1,
            Default::default(),
        )
        .unwrap();
        let builtin = Instance::load(&InstanceSource::Builtin(b), 1, Default::default()).unwrap();
        assert_eq!(from_file.content_hash, builtin.content_hash);
        assert_eq!(from_file.observable.ground_value(), builtin.observable.ground_value());
    }
    let strict = Instance::load(
        &InstanceSource::Csv { path: fixture("maxcut5.csv"), symmetry: Symmetry::Strict },
        1,
        Default::default(),
    );
    assert!(matches!(strict, Err(Error::Asymmetric(..))));
}

#[test]
fn exact_descent_is_monotone_with_small_steps() {
    for n in [3usize, 5] {
        let rows = read_weight_csv(&fixture(&format!("maxcut{n}.csv"))).unwrap();
        let h = maxcut_hamiltonian(&MaxCutProblem::from_upper(&rows).unwrap());
        let c = build_hardware_efficient(n, 1, false).unwrap();
        let eta = 1.0 / smoothness_constant(c.n_params(), &h);
        let mut rng = stream(n as u64, &[]);
        for _ in 0..20 {
            let theta0: Vec<f64> = (0..c.n_params()).map(|_| 6.0 * uniform(&mut rng) - 3.0).collect();
            let tr = sgd(&c, &h, &GradientSource::Exact, &theta0, Schedule::Constant(eta), 15, TestShots::Exact, 0).unwrap();
            for w in tr.loss_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} > {}", w[1], w[0]);
            }
        }
    }
}

#[test]
fn exact_sgd_reaches_three_vertex_ground() {
    let cfg = ExperimentConfig::preset(ExperimentKind::Convergence);
    let inst = Instance::load(&cfg.instance, 1, cfg.noise_mode).unwrap();
    let theta0 = cfg.theta0.resolve(inst.circuit.n_params(), 0).unwrap();
    let tr = sgd(&inst.circuit, &inst.observable, &GradientSource::Exact, &theta0, Schedule::InverseT(0.5), 100, TestShots::Exact, 0).unwrap();
    assert!((tr.final_loss() - inst.observable.ground_value()).abs() < 0.05);
}

#[test]
fn zero_noise_single_circuit_matches_shot_estimator() {
    let inst = Instance::load(&InstanceSource::Builtin(Builtin::Toy), 1, Default::default()).unwrap();
    let quiet = ChannelMap::depolarizing(&inst.circuit, 0.0).unwrap();
    let theta = [0.3, -1.1, 0.8, 2.0];
    let reps = 3000u64;
    let q: Vec<Vec<f64>> = (0..reps)
        .map(|s| qem_gradient(&inst.circuit, &theta, &inst.observable, 1, 64, &quiet, Budget::Strict, s).unwrap())
        .collect();
    let s: Vec<Vec<f64>> = (0..reps)
        .map(|s| shot_gradient(&inst.circuit, &inst.observable, &theta, 64, s + reps).unwrap().g_hat)
        .collect();
    let (vq, seq) = total_variance(&q);
    let (vs, ses) = total_variance(&s);
    assert!((vq - vs).abs() < 4.0 * (seq * seq + ses * ses).sqrt(), "{vq} vs {vs}");
    let exact: f64 = estimator_variance(&inst.circuit, &inst.observable, &theta, 64, None).unwrap().iter().sum();
    assert!((vs - exact).abs() < 4.0 * ses);
}

#[test]
fn recorded_loss_is_noiseless() {
    let inst = Instance::load(&InstanceSource::Builtin(Builtin::Toy), 1, Default::default()).unwrap();
    let ch = ChannelMap::depolarizing(&inst.circuit, 0.2).unwrap();
    let tr = sgd(
        &inst.circuit,
        &inst.observable,
        &GradientSource::NoisyShot { n_m: 20, channels: ch },
        &[0.1; 4],
        Schedule::Constant(0.1),
        5,
        TestShots::Shots(30),
        3,
    )
    .unwrap();
    for (theta, &l) in tr.theta_history.iter().zip(&tr.loss_history) {
        let exact = vqe_lab::gradient::exact_loss(&inst.circuit, &inst.observable, theta, None).unwrap();
        assert_eq!(l, exact);
    }
    assert_eq!(tr.test_loss_history.as_ref().unwrap().len(), 6);
}

#[test]
fn trajectory_estimate_dominates_grid_estimate() {
    let (c, h) = two_parameter_toy(false).unwrap();
    let grid = pl_constant_estimate(&c, &h, PlMethod::Grid { resolution: 60, sublevel: None }).unwrap();
    let rc = RunConfig {
        circuit: &c,
        observable: &h,
        source: GradientSource::Shot { n_m: 50 },
        theta0: vec![2.6, 0.5],
        schedule: Schedule::Constant(0.05),
        iterations: 40,
        test_shots: TestShots::Exact,
    };
    let runs = repeated_runs(&rc, 3, 1).unwrap();
    let traj = pl_constant_estimate(&c, &h, PlMethod::Trajectory(&runs.traces)).unwrap();
    assert!(traj >= grid, "{traj} < {grid}");
}

#[test]
fn exact_regime_has_zero_envelope() {
    let (c, h) = two_parameter_toy(false).unwrap();
    let rc = RunConfig {
        circuit: &c,
        observable: &h,
        source: GradientSource::Exact,
        theta0: vec![2.0, 1.0],
        schedule: Schedule::InverseT(0.5),
        iterations: 10,
        test_shots: TestShots::Exact,
    };
    let r = repeated_runs(&rc, 4, 0).unwrap();
    assert!(r.summary.min.iter().zip(&r.summary.max).all(|(a, b)| a == b));
    let single = repeated_runs(&rc, 1, 0).unwrap();
    assert_eq!(single.summary.mean, single.traces[0].loss_history);
}

#[test]
fn bound_reports_pass_without_noise() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Bounds);
    cfg.epsilons = vec![0.0];
    cfg.replicas = 200;
    cfg.n_seeds = 10;
    let reports = bound_reports(&cfg).unwrap();
    let bias = reports.iter().find(|r| r.name == "bias_norm_squared").unwrap();
    assert_eq!((bias.theoretical_value, bias.empirical_value), (0.0, 0.0));
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed && !r.name.starts_with("iteration")).map(|r| &r.name).collect();
    assert!(failed.is_empty(), "{failed:?}");
}

#[test]
fn noiseless_sweep_point_regimes_agree() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::NoiseSweep);
    cfg.instance = InstanceSource::Builtin(Builtin::Maxcut3);
    cfg.epsilons = vec![0.0];
    cfg.n_c = vec![4];
    cfg.n_m = 4000;
    cfg.iterations = 5;
    cfg.n_seeds = 3;
    let (_, _, points) = sweep_points(&cfg).unwrap();
    let exact = points.iter().find(|p| p.regime == "exact").unwrap().mean();
    for p in &points {
        assert!((p.mean() - exact).abs() < 0.05, "{} {}", p.regime, p.mean());
    }
}

#[test]
fn indivisible_budget_is_rejected_in_strict_mode() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::CircuitSweep);
    cfg.n_c = vec![3];
    cfg.iterations = 1;
    cfg.n_seeds = 1;
    assert!(matches!(sweep_points(&cfg), Err(Error::IndivisibleBudget { .. })));
}
