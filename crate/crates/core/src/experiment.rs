//! Batch experiments over an [`ExperimentConfig`]: convergence curves per
//! gradient regime, final-loss sweeps over noise level and circuit count, and
//! the bound-check harness. Each run writes CSV files with a header row plus a
//! metadata JSON sidecar; identical configs give identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::ansatz::{build_hardware_efficient_with, evolve, ChannelMap, Circuit, NoiseMode};
use crate::bounds::{
    bias_bound_b, convergence_rhs, gamma_star, iterations_to_reach, mean_and_se, nu, nu_noisy_assembled,
    pl_constant_estimate, smoothness_constant, step_for_target, total_variance, variance_bound_v,
    variance_bound_ve, variance_bound_vqem, write_reports_csv, BoundReport, PlMethod,
};
use crate::config::{two_parameter_toy, ExperimentConfig, ExperimentKind, Instance};
use crate::error::{Error, Result};
use crate::gradient::{bias_vector, exact_gradient, exact_loss, hessian_double_shift, noisy_shot_gradient, shot_gradient};
use crate::linalg::symmetric_spectral_norm;
use crate::noise::{error_density, fidelity, gamma, make_depolarizing};
use crate::observable::{outcome_distribution, Observable};
use crate::optimizer::{repeated_runs, GradientSource, RepeatedRuns, RunConfig, RunSummary, Schedule, TestShots};
use crate::par::try_map_indices;
use crate::qem::{
    c1_from_qprs, c2_from_qprs, depolarizing_constants, depolarizing_epsilon_for_fidelity, derive_all, derive_qpr,
    qem_gradient, sampling_overhead, shots_per_circuit,
};
use crate::rng::{derive_seed, stream, uniform};

/// Regime labels in output order.
pub const REGIMES: [&str; 4] = ["exact", "shot", "noisy", "qem"];

/// Files written by one experiment, plus any bound reports.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub files: Vec<PathBuf>,
    pub reports: Vec<BoundReport>,
}

impl ExperimentOutput {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

struct Sink<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Sink<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Sink { dir, files: Vec::new() })
    }

    fn write<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

/// Noise-dependent constants recorded in metadata.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseConstants {
    pub epsilon: f64,
    pub gamma: f64,
    pub overhead_z: f64,
    pub c1: f64,
    pub c2: f64,
    pub bias_bound: f64,
    pub variance_bound_shot: f64,
    pub variance_bound_noisy: f64,
    /// `(N_c, V^QEM)` pairs.
    pub variance_bound_qem: Vec<(usize, f64)>,
}

pub fn noise_constants(inst: &Instance, epsilon: f64, n_m: usize, n_cs: &[usize]) -> Result<NoiseConstants> {
    let c = &inst.circuit;
    let h = &inst.observable;
    let channels = ChannelMap::depolarizing(c, epsilon)?;
    let qprs = derive_all(c, &channels)?;
    let z = sampling_overhead(&qprs);
    let d = c.n_params();
    Ok(NoiseConstants {
        epsilon,
        gamma: gamma(epsilon, c.n_noisy()),
        overhead_z: z,
        c1: c1_from_qprs(&qprs),
        c2: c2_from_qprs(&qprs),
        bias_bound: bias_bound_b(d, h.inf_norm(), gamma(epsilon, c.n_noisy())),
        variance_bound_shot: variance_bound_v(0.25, h.n_distinct(), d, h.trace_h2(), n_m),
        variance_bound_noisy: variance_bound_ve(h.n_distinct(), d, h.trace_h2(), n_m, 0.25),
        variance_bound_qem: n_cs
            .iter()
            .map(|&n_c| {
                let b = variance_bound_vqem(h.n_distinct(), d, z, h.trace_h2(), n_m, n_c, h.inf_norm(), 0.25);
                (n_c, b.upper)
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct InstanceInfo<'a> {
    label: &'a str,
    n_qubits: usize,
    n_params: usize,
    n_noisy_gates: usize,
    ground_value: f64,
    smoothness: f64,
    fixture_hash: &'a str,
}

impl<'a> InstanceInfo<'a> {
    fn of(inst: &'a Instance) -> Self {
        InstanceInfo {
            label: &inst.label,
            n_qubits: inst.circuit.n_qubits(),
            n_params: inst.circuit.n_params(),
            n_noisy_gates: inst.circuit.n_noisy(),
            ground_value: inst.observable.ground_value(),
            smoothness: smoothness_constant(inst.circuit.n_params(), &inst.observable),
            fixture_hash: &inst.content_hash,
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a, E: Serialize> {
    experiment: ExperimentKind,
    config: &'a ExperimentConfig,
    instance: InstanceInfo<'a>,
    theta0: &'a [f64],
    constants: Vec<NoiseConstants>,
    extra: E,
}

fn source_for(regime: &str, inst: &Instance, epsilon: f64, n_m: usize, n_c: usize, cfg: &ExperimentConfig) -> Result<GradientSource> {
    let channels = || ChannelMap::depolarizing(&inst.circuit, epsilon);
    Ok(match regime {
        "exact" => GradientSource::Exact,
        "shot" => GradientSource::Shot { n_m },
        "noisy" => GradientSource::NoisyShot { n_m, channels: channels()? },
        "qem" => GradientSource::Qem {
            n_c,
            n_m,
            channels: channels()?,
            budget: cfg.budget,
        },
        other => return Err(Error::Config(format!("unknown regime {other}"))),
    })
}

fn run_regime(
    inst: &Instance,
    cfg: &ExperimentConfig,
    theta0: &[f64],
    source: GradientSource,
) -> Result<RepeatedRuns> {
    let rc = RunConfig {
        circuit: &inst.circuit,
        observable: &inst.observable,
        source,
        theta0: theta0.to_vec(),
        schedule: cfg.schedule,
        iterations: cfg.iterations,
        test_shots: cfg.test_shots,
    };
    repeated_runs(&rc, cfg.n_seeds, cfg.seed)
}

/// Traces of one regime at one noise level.
#[derive(Debug, Clone)]
pub struct RegimeRuns {
    pub epsilon: f64,
    pub regime: &'static str,
    pub runs: RepeatedRuns,
}

impl RegimeRuns {
    pub fn final_losses(&self) -> Vec<f64> {
        self.runs.traces.iter().map(|t| t.final_loss()).collect()
    }
}

/// The four regimes at every configured noise level, using `n_c[0]` circuits.
pub fn convergence_runs(cfg: &ExperimentConfig) -> Result<(Instance, Vec<f64>, Vec<RegimeRuns>)> {
    cfg.validate()?;
    let inst = Instance::load(&cfg.instance, cfg.layers, cfg.noise_mode)?;
    let theta0 = cfg.theta0.resolve(inst.circuit.n_params(), cfg.seed)?;
    let n_c = cfg.n_c[0];
    shots_per_circuit(cfg.n_m, n_c, cfg.budget)?;
    let mut out = Vec::new();
    for &eps in &cfg.epsilons {
        for regime in REGIMES {
            info!("{} ε={eps} {regime}", cfg.experiment);
            let src = source_for(regime, &inst, eps, cfg.n_m, n_c, cfg)?;
            out.push(RegimeRuns {
                epsilon: eps,
                regime,
                runs: run_regime(&inst, cfg, &theta0, src)?,
            });
        }
    }
    Ok((inst, theta0, out))
}

/// Loss curves per regime and noise level: one CSV per seed, one summary
/// per regime, a table of final losses, and metadata.
pub fn run_convergence(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let (inst, theta0, runs) = convergence_runs(cfg)?;
    let prefix = cfg.experiment.name();
    let mut sink = Sink::new(out_dir)?;
    for rr in &runs {
        for tr in &rr.runs.traces {
            sink.write(&format!("{prefix}_eps{}_{}_seed{}.csv", rr.epsilon, rr.regime, tr.seed), |w| tr.write_csv(w))?;
        }
        sink.write(&format!("{prefix}_eps{}_{}_summary.csv", rr.epsilon, rr.regime), |w| {
            rr.runs.summary.write_csv(w)
        })?;
    }
    sink.write(&format!("{prefix}_final.csv"), |w| {
        writeln!(w, "epsilon,regime,seed,final_loss")?;
        for rr in &runs {
            for tr in &rr.runs.traces {
                writeln!(w, "{},{},{},{}", rr.epsilon, rr.regime, tr.seed, tr.final_loss())?;
            }
        }
        Ok(())
    })?;
    let constants = cfg
        .epsilons
        .iter()
        .map(|&e| noise_constants(&inst, e, cfg.n_m, &cfg.n_c))
        .collect::<Result<Vec<_>>>()?;
    let meta = Metadata {
        experiment: cfg.experiment,
        config: cfg,
        instance: InstanceInfo::of(&inst),
        theta0: &theta0,
        constants,
        extra: (),
    };
    sink.json(&format!("{prefix}_metadata.json"), &meta)?;
    Ok(ExperimentOutput {
        files: sink.files,
        reports: Vec::new(),
    })
}

/// Final losses of one regime at one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n_c: usize,
    pub epsilon: f64,
    pub regime: &'static str,
    pub final_losses: Vec<f64>,
}

impl SweepPoint {
    pub fn mean(&self) -> f64 {
        mean_and_se(&self.final_losses).0
    }
}

/// Final losses for every `(N_c, ε, regime)`. The exact and shot-only
/// regimes do not depend on the grid and are run once.
pub fn sweep_points(cfg: &ExperimentConfig) -> Result<(Instance, Vec<f64>, Vec<SweepPoint>)> {
    cfg.validate()?;
    let inst = Instance::load(&cfg.instance, cfg.layers, cfg.noise_mode)?;
    let theta0 = cfg.theta0.resolve(inst.circuit.n_params(), cfg.seed)?;
    for &n_c in &cfg.n_c {
        shots_per_circuit(cfg.n_m, n_c, cfg.budget)?;
    }
    let finals = |src: GradientSource| -> Result<Vec<f64>> {
        Ok(run_regime(&inst, cfg, &theta0, src)?.traces.iter().map(|t| t.final_loss()).collect())
    };
    let exact = finals(GradientSource::Exact)?;
    let shot = finals(GradientSource::Shot { n_m: cfg.n_m })?;
    let mut noisy = Vec::new();
    for &eps in &cfg.epsilons {
        info!("{} ε={eps} noisy", cfg.experiment);
        noisy.push(finals(source_for("noisy", &inst, eps, cfg.n_m, 1, cfg)?)?);
    }
    let mut points = Vec::new();
    for &n_c in &cfg.n_c {
        for (k, &eps) in cfg.epsilons.iter().enumerate() {
            info!("{} N_c={n_c} ε={eps} qem", cfg.experiment);
            let qem = finals(source_for("qem", &inst, eps, cfg.n_m, n_c, cfg)?)?;
            for (regime, losses) in [("exact", exact.clone()), ("shot", shot.clone()), ("noisy", noisy[k].clone()), ("qem", qem)] {
                points.push(SweepPoint {
                    n_c,
                    epsilon: eps,
                    regime,
                    final_losses: losses,
                });
            }
        }
    }
    Ok((inst, theta0, points))
}

#[derive(Serialize)]
struct SweepExtra {
    ground_value: f64,
    /// Per ε: least-squares slope of the QEM mean final loss against `ln N_c`.
    qem_trend_slope: Vec<(f64, f64)>,
}

/// Final loss after `iterations` steps across the `(N_c, ε)` grid.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let (inst, theta0, points) = sweep_points(cfg)?;
    let prefix = cfg.experiment.name();
    let ground = inst.observable.ground_value();
    let mut sink = Sink::new(out_dir)?;
    sink.write(&format!("{prefix}_final_losses.csv"), |w| {
        writeln!(w, "n_c,epsilon,regime,seed,final_loss")?;
        for p in &points {
            for (k, l) in p.final_losses.iter().enumerate() {
                writeln!(w, "{},{},{},{},{l}", p.n_c, p.epsilon, p.regime, cfg.seed.wrapping_add(k as u64 + 1))?;
            }
        }
        Ok(())
    })?;
    sink.write(&format!("{prefix}_summary.csv"), |w| {
        writeln!(w, "n_c,epsilon,regime,mean,std,min,max,ground_value")?;
        for p in &points {
            let (mean, se) = mean_and_se(&p.final_losses);
            let std = se * (p.final_losses.len() as f64).sqrt();
            let min = p.final_losses.iter().copied().fold(f64::INFINITY, f64::min);
            let max = p.final_losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            writeln!(w, "{},{},{},{mean},{std},{min},{max},{ground}", p.n_c, p.epsilon, p.regime)?;
        }
        Ok(())
    })?;
    let qem_trend_slope = cfg
        .epsilons
        .iter()
        .map(|&eps| {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.regime == "qem" && p.epsilon == eps)
                .map(|p| ((p.n_c as f64).ln(), p.mean()))
                .collect();
            (eps, slope(&pts))
        })
        .collect();
    let constants = cfg
        .epsilons
        .iter()
        .map(|&e| noise_constants(&inst, e, cfg.n_m, &cfg.n_c))
        .collect::<Result<Vec<_>>>()?;
    let meta = Metadata {
        experiment: cfg.experiment,
        config: cfg,
        instance: InstanceInfo::of(&inst),
        theta0: &theta0,
        constants,
        extra: SweepExtra {
            ground_value: ground,
            qem_trend_slope,
        },
    };
    sink.json(&format!("{prefix}_metadata.json"), &meta)?;
    Ok(ExperimentOutput {
        files: sink.files,
        reports: Vec::new(),
    })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::Convergence | ExperimentKind::Custom => run_convergence(cfg, out_dir),
        ExperimentKind::TestShots => {
            let mut c = cfg.clone();
            if c.test_shots == TestShots::Exact {
                c.test_shots = TestShots::Shots(c.n_m);
            }
            run_convergence(&c, out_dir)
        }
        ExperimentKind::NoiseSweep | ExperimentKind::CircuitSweep => run_sweep(cfg, out_dir),
        ExperimentKind::Bounds => run_bounds(cfg, out_dir),
    }
}

fn random_thetas(d: usize, count: usize, seed: u64, key: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, &[key]);
    (0..count)
        .map(|_| {
            (0..d)
                .map(|_| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * uniform(&mut rng))
                .collect()
        })
        .collect()
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

/// Total variance and its standard error over `replicas` draws of `draw(seed)`.
pub fn replicate_variance<F>(replicas: usize, seed: u64, draw: F) -> Result<(f64, f64)>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync + Send,
{
    let samples = try_map_indices(replicas, |r| draw(derive_seed(seed, &[r as u64])))?;
    Ok(total_variance(&samples))
}

/// Every bound check on the configured instance at `epsilons[0]`.
pub fn bound_reports(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    cfg.validate()?;
    let inst = Instance::load(&cfg.instance, cfg.layers, cfg.noise_mode)?;
    let c = &inst.circuit;
    let h = &inst.observable;
    let eps = cfg.epsilons[0];
    let d = c.n_params();
    let channels = ChannelMap::depolarizing(c, eps)?;
    let g = gamma(eps, c.n_noisy());
    let snapshot = format!(
        "instance={} D={d} eps={eps} gamma={g:.6} N_m={} replicas={} seed={}",
        inst.label, cfg.n_m, cfg.replicas, cfg.seed
    );
    let mut reports = Vec::new();

    // Channel inversion
    let mut residual: f64 = 0.0;
    let mut sum_err: f64 = 0.0;
    let mut zd_err: f64 = 0.0;
    for m in [1usize, 2] {
        for e in [0.03, 0.09, 0.25] {
            let support: Vec<usize> = (0..m).collect();
            let ch = make_depolarizing(&support, e)?;
            let q = derive_qpr(&ch, 0)?;
            residual = residual.max(q.reconstruction_residual(&ch));
            sum_err = sum_err.max((q.q.iter().sum::<f64>() - 1.0).abs());
            let f = ch.ptm().diag[1];
            let closed = depolarizing_constants(m, 1.0 - f, 1)?;
            zd_err = zd_err.max((closed.z_d - q.z).abs());
            debug_assert!((depolarizing_epsilon_for_fidelity(m, f) - e).abs() < 1e-12);
        }
    }
    let qpr_cfg = "depolarizing m∈{1,2}, eps∈{0.03,0.09,0.25}";
    reports.push(BoundReport::upper("qpr_reconstruction_residual", 1e-10, residual, 0.0, "none", qpr_cfg));
    reports.push(BoundReport::upper("qpr_sum_to_one", 1e-10, sum_err, 0.0, "none", qpr_cfg));
    reports.push(BoundReport::upper("qpr_closed_form_overhead", 1e-9, zd_err, 0.0, "none", qpr_cfg));

    // Shift rule against central differences
    let thetas = random_thetas(d, 20, cfg.seed, 1);
    let fd_err = try_map_indices(thetas.len(), |k| {
        let th = &thetas[k];
        let gr = exact_gradient(c, h, th, None)?;
        let mut worst: f64 = 0.0;
        for (j, gj) in gr.iter().enumerate() {
            let mut p = th.clone();
            let mut m = th.clone();
            p[j] += 1e-5;
            m[j] -= 1e-5;
            let fd = (exact_loss(c, h, &p, None)? - exact_loss(c, h, &m, None)?) / 2e-5;
            worst = worst.max((fd - gj).abs());
        }
        Ok(worst)
    })?;
    reports.push(BoundReport::upper("shift_rule_vs_finite_difference", 1e-6, max_of(fd_err), 0.0, "none", "20 random θ, step 1e-5"));

    // Bias
    let thetas = random_thetas(d, 100, cfg.seed, 2);
    let bias_sq = try_map_indices(thetas.len(), |k| {
        Ok(bias_vector(c, h, &thetas[k], &channels)?.iter().map(|b| b * b).sum::<f64>())
    })?;
    let b_bound = bias_bound_b(d, h.inf_norm(), g);
    reports.push(BoundReport::upper("bias_norm_squared", b_bound, max_of(bias_sq), 0.0, "none (max over 100 random θ)", &snapshot));

    // Variances at one random θ
    let theta = &random_thetas(d, 1, cfg.seed, 3)[0];
    let n_h = h.n_distinct();
    let (v_shot, se_shot) = replicate_variance(cfg.replicas, derive_seed(cfg.seed, &[4]), |s| {
        Ok(shot_gradient(c, h, theta, cfg.n_m, s)?.g_hat)
    })?;
    let v = variance_bound_v(0.25, n_h, d, h.trace_h2(), cfg.n_m);
    reports.push(BoundReport::upper("shot_variance", v, v_shot, 5.0 * se_shot, "5·SE", &snapshot));
    let (v_noisy, se_noisy) = replicate_variance(cfg.replicas, derive_seed(cfg.seed, &[5]), |s| {
        Ok(noisy_shot_gradient(c, h, theta, cfg.n_m, &channels, s)?.g_hat)
    })?;
    let ve = variance_bound_ve(n_h, d, h.trace_h2(), cfg.n_m, 0.25);
    reports.push(BoundReport::upper("noisy_variance", ve, v_noisy, 5.0 * se_noisy, "5·SE", &snapshot));
    let qprs = derive_all(c, &channels)?;
    let (z, c1) = (sampling_overhead(&qprs), c1_from_qprs(&qprs));
    for &n_c in &cfg.n_c {
        let (v_qem, se_qem) = replicate_variance(cfg.replicas, derive_seed(cfg.seed, &[6, n_c as u64]), |s| {
            qem_gradient(c, theta, h, n_c, cfg.n_m, &channels, cfg.budget, s)
        })?;
        let vq = variance_bound_vqem(n_h, d, z, h.trace_h2(), cfg.n_m, n_c, h.inf_norm(), 0.25);
        let snap = format!("{snapshot} N_c={n_c}");
        reports.push(BoundReport::upper(&format!("qem_variance_upper_nc{n_c}"), vq.upper, v_qem, 5.0 * se_qem, "5·SE", &snap));
        let se = (se_qem.powi(2) + (c1 * se_noisy).powi(2)).sqrt();
        reports.push(BoundReport::lower(&format!("qem_variance_lower_nc{n_c}"), c1 * v_noisy, v_qem, 5.0 * se, "5·SE (combined)", &snap));
    }

    // Noisy-state split under noise after every rotation
    let theory = c.with_noise_mode(NoiseMode::Parameterized);
    let t_channels = ChannelMap::depolarizing(&theory, eps)?;
    let t_gamma = gamma(eps, theory.n_noisy());
    let thetas = random_thetas(d, 200, cfg.seed, 7);
    let split = try_map_indices(thetas.len(), |k| split_check(&theory, h, &thetas[k], &t_channels, t_gamma))?;
    let t_snap = format!("noise after each rotation, eps={eps}, gamma={t_gamma:.6}, 200 random θ");
    reports.push(BoundReport::upper("split_recomposition", 1e-10, max_of(split.iter().map(|s| s.recomposition)), 0.0, "none", &t_snap));
    reports.push(BoundReport::lower("error_density_min_eigenvalue", -1e-8, min_of(split.iter().map(|s| s.min_eig)), 0.0, "none", &t_snap));
    reports.push(BoundReport::lower("fidelity_minus_floor", 0.0, min_of(split.iter().map(|s| s.fidelity_margin)), 1e-12, "1e-12", &t_snap));
    reports.push(BoundReport::upper("variance_split_identity", 1e-10, max_of(split.iter().map(|s| s.identity_err)), 0.0, "none", &t_snap));

    // Smoothness
    let thetas = random_thetas(d, 100, cfg.seed, 8);
    let norms = try_map_indices(thetas.len(), |k| {
        let m = hessian_double_shift(c, h, &thetas[k])?;
        let flat: Vec<f64> = m.into_iter().flatten().collect();
        Ok(symmetric_spectral_norm(d, &flat))
    })?;
    reports.push(BoundReport::upper("hessian_spectral_norm", smoothness_constant(d, h), max_of(norms), 0.0, "none (max over 100 random θ)", &snapshot));

    // Variance algebra on a grid of (p, p̃, γ)
    let (lower_gap, concavity) = variance_algebra_checks();
    reports.push(BoundReport::lower("variance_split_lower_bound", 0.0, lower_gap, 1e-15, "1e-15", "20×20 (p, p̃) grid"));
    reports.push(BoundReport::upper("variance_split_concavity", 1e-9, concavity, 0.0, "none", "second difference over 20 γ points"));

    // Overhead factors
    let monotone = overhead_factor_checks()?;
    reports.push(BoundReport::lower("overhead_factors_at_least_one", 1.0, monotone.0, 1e-12, "1e-12", "n∈{1,2,3}, D∈{1,2,4}, 50 γ"));
    reports.push(BoundReport::lower("overhead_factors_nondecreasing", -1e-9, monotone.1, 0.0, "none", "n∈{1,2,3}, D∈{1,2,4}, 50 γ"));

    reports.extend(convergence_reports(cfg)?);
    Ok(reports)
}

struct SplitCheck {
    recomposition: f64,
    min_eig: f64,
    fidelity_margin: f64,
    identity_err: f64,
}

fn split_check(c: &Circuit, h: &Observable, theta: &[f64], channels: &ChannelMap, g: f64) -> Result<SplitCheck> {
    let ideal = evolve(c, theta, None, None);
    let noisy = evolve(c, theta, Some(channels), None);
    let f = fidelity(&noisy, &ideal)?;
    if g == 0.0 {
        return Ok(SplitCheck {
            recomposition: noisy.matrix().max_abs_diff(ideal.matrix()),
            min_eig: noisy.min_eigenvalue(),
            fidelity_margin: f - 1.0,
            identity_err: 0.0,
        });
    }
    let tilde = error_density(&noisy, &ideal, g)?;
    let recomposed = ideal.matrix().scale((1.0 - g).into()).add(&tilde.matrix().scale(g.into()));
    let p = outcome_distribution(&ideal, h)?;
    let pt = outcome_distribution(&tilde, h)?;
    let pe = outcome_distribution(&noisy, h)?;
    let identity_err = p
        .iter()
        .zip(&pt)
        .zip(&pe)
        .map(|((&a, &b), &e)| (nu_noisy_assembled(a, b, g) - nu(e)).abs())
        .fold(0.0, f64::max);
    Ok(SplitCheck {
        recomposition: recomposed.max_abs_diff(noisy.matrix()),
        min_eig: tilde.min_eigenvalue(),
        fidelity_margin: f - (1.0 - g),
        identity_err,
    })
}

/// Smallest margin of `ν(p^ε) − [(1−γ)ν(p) + γν(p̃)]`, and the largest second
/// difference of `γ ↦ ν(p^ε(γ))`.
pub fn variance_algebra_checks() -> (f64, f64) {
    let mut lower: f64 = f64::INFINITY;
    let mut curvature: f64 = f64::NEG_INFINITY;
    let h = 1e-3;
    for i in 0..20 {
        for j in 0..20 {
            let p = (i as f64 + 0.5) / 20.0;
            let pt = (j as f64 + 0.5) / 20.0;
            for k in 0..20 {
                let g = (k as f64 + 0.5) / 20.0;
                lower = lower.min(nu_noisy_assembled(p, pt, g) - ((1.0 - g) * nu(p) + g * nu(pt)));
                let f = |x: f64| nu_noisy_assembled(p, pt, x);
                let second = (f(g + h) - 2.0 * f(g) + f(g - h)) / (h * h);
                curvature = curvature.max(second);
            }
            let _ = gamma_star(p, pt);
        }
    }
    (lower, curvature)
}

/// Smallest `c₁, c₂` and smallest forward difference in γ over the grid.
pub fn overhead_factor_checks() -> Result<(f64, f64)> {
    let mut least: f64 = f64::INFINITY;
    let mut step: f64 = f64::INFINITY;
    for n in 1..=3 {
        for d in [1, 2, 4] {
            let grid: Vec<_> = (0..50)
                .map(|k| depolarizing_constants(n, 0.95 * k as f64 / 49.0, d))
                .collect::<Result<_>>()?;
            for w in grid.windows(2) {
                step = step.min(w[1].c1 - w[0].c1).min(w[1].c2 - w[0].c2);
            }
            for k in &grid {
                least = least.min(k.c1).min(k.c2);
            }
        }
    }
    Ok((least, step))
}

/// Inputs and measured gaps of the convergence check on the two-parameter toy.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCheck {
    pub regime: &'static str,
    pub eta: f64,
    pub mu_hat: f64,
    pub smoothness: f64,
    pub variance_bound: f64,
    pub bias_bound: f64,
    pub gap0: f64,
    /// `(T, mean L(θ^T) − L*, right-hand side)`.
    pub points: Vec<(usize, f64, f64)>,
}

/// Starting point of the toy convergence check; its loss level keeps the
/// saddle at `(π, π)` outside the sublevel set.
pub const TOY_THETA0: [f64; 2] = [std::f64::consts::PI - 0.6, 0.6];

/// Runs the shot, noisy and QEM regimes on the two-parameter toy with the
/// constant step `min(1/ℒ, δμ̂/(ℒV))` and compares the mean gap at each
/// checkpoint against the bound.
#[allow(clippy::too_many_arguments)]
pub fn toy_convergence_check(
    epsilon: f64,
    n_m: usize,
    n_c: usize,
    delta: f64,
    runs: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<ConvergenceCheck>> {
    let (ideal, h) = two_parameter_toy(false)?;
    let (noisy_c, _) = two_parameter_toy(true)?;
    let channels = ChannelMap::depolarizing(&noisy_c, epsilon)?;
    let l_star = h.ground_value();
    let gap0 = exact_loss(&ideal, &h, &TOY_THETA0, None)? - l_star;
    let level = gap0 + l_star;
    let mu = pl_constant_estimate(&ideal, &h, PlMethod::Grid { resolution: 200, sublevel: Some(level) })?;
    let d = 2;
    let l_smooth = smoothness_constant(d, &h);
    let g = gamma(epsilon, noisy_c.n_noisy());
    let n_h = h.n_distinct();
    let z = sampling_overhead(&derive_all(&noisy_c, &channels)?);
    let t_max = *checkpoints.iter().max().unwrap_or(&1);
    let specs = [
        ("shot", variance_bound_v(0.25, n_h, d, h.trace_h2(), n_m), 0.0, GradientSource::Shot { n_m }),
        (
            "noisy",
            variance_bound_ve(n_h, d, h.trace_h2(), n_m, 0.25),
            bias_bound_b(d, h.inf_norm(), g),
            GradientSource::NoisyShot { n_m, channels: channels.clone() },
        ),
        (
            "qem",
            variance_bound_vqem(n_h, d, z, h.trace_h2(), n_m, n_c, h.inf_norm(), 0.25).upper,
            0.0,
            GradientSource::Qem {
                n_c,
                n_m,
                channels: channels.clone(),
                budget: Default::default(),
            },
        ),
    ];
    let mut out = Vec::new();
    for (k, (regime, v, b, source)) in specs.into_iter().enumerate() {
        let eta = step_for_target(delta, mu, l_smooth, v);
        let circuit = if regime == "shot" { &ideal } else { &noisy_c };
        let rc = RunConfig {
            circuit,
            observable: &h,
            source,
            theta0: TOY_THETA0.to_vec(),
            schedule: Schedule::Constant(eta),
            iterations: t_max,
            test_shots: TestShots::Exact,
        };
        let rr = repeated_runs(&rc, runs, derive_seed(seed, &[k as u64]))?;
        let summary: &RunSummary = &rr.summary;
        let points = checkpoints
            .iter()
            .map(|&t| Ok((t, summary.mean[t] - l_star, convergence_rhs(t, eta, mu, l_smooth, v, b, gap0)?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(ConvergenceCheck {
            regime,
            eta,
            mu_hat: mu,
            smoothness: l_smooth,
            variance_bound: v,
            bias_bound: b,
            gap0,
            points,
        });
    }
    Ok(out)
}

fn convergence_reports(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let n_c = cfg.n_c[cfg.n_c.len() - 1];
    let checks = toy_convergence_check(cfg.epsilons[0], cfg.n_m, n_c, 0.1, cfg.n_seeds, &[10, 50, cfg.iterations.max(51)], cfg.seed)?;
    let mut reports = Vec::new();
    for ch in &checks {
        for &(t, gap, rhs) in &ch.points {
            reports.push(BoundReport::upper(
                &format!("convergence_{}_t{t}", ch.regime),
                rhs,
                gap,
                0.0,
                "none (mean over runs)",
                &format!(
                    "two-parameter toy, eps={}, N_m={}, N_c={n_c}, runs={}, eta={:.5}, mu_hat={:.5} (grid on sublevel set)",
                    cfg.epsilons[0], cfg.n_m, cfg.n_seeds, ch.eta, ch.mu_hat
                ),
            ));
        }
    }
    reports.push(iteration_ordering_report(&checks, cfg.n_m)?);
    Ok(reports)
}

/// Bound-derived iteration counts `(shot, noisy, qem)` to reach `δ` on the
/// two-parameter toy. The noise level is chosen so that the gate-noise floor
/// `B/μ̂` is `gap₀/20`, and `δ = 1.05·B/μ̂`; `N_c` is large.
pub fn toy_iteration_counts(mu: f64, n_m: usize, n_c: usize) -> Result<[Option<usize>; 3]> {
    let (ideal, h) = two_parameter_toy(false)?;
    let (noisy_c, _) = two_parameter_toy(true)?;
    let d = 2;
    let gap0 = exact_loss(&ideal, &h, &TOY_THETA0, None)? - h.ground_value();
    let l_smooth = smoothness_constant(d, &h);
    let g = gap0 / 20.0 * mu / (4.0 * d as f64 * h.inf_norm().powi(2));
    let eps = 1.0 - (1.0 - g).powf(1.0 / noisy_c.n_noisy() as f64);
    let z = sampling_overhead(&derive_all(&noisy_c, &ChannelMap::depolarizing(&noisy_c, eps)?)?);
    let b = bias_bound_b(d, h.inf_norm(), g);
    let delta = 1.05 * b / mu;
    let (n_h, tr) = (h.n_distinct(), h.trace_h2());
    let regimes = [
        (variance_bound_v(0.25, n_h, d, tr, n_m), 0.0),
        (variance_bound_ve(n_h, d, tr, n_m, 0.25), b),
        (variance_bound_vqem(n_h, d, z, tr, n_m, n_c, h.inf_norm(), 0.25).upper, 0.0),
    ];
    let mut out = [None; 3];
    for (slot, (v, bias)) in out.iter_mut().zip(regimes) {
        let eta = step_for_target(delta, mu, l_smooth, v);
        *slot = iterations_to_reach(delta, eta, mu, l_smooth, v, bias, gap0, usize::MAX)?;
    }
    Ok(out)
}

fn iteration_ordering_report(checks: &[ConvergenceCheck], n_m: usize) -> Result<BoundReport> {
    let mu = checks.first().ok_or(Error::NoValidPoints)?.mu_hat;
    let n_c = 10_000;
    let [shot, noisy, qem] = toy_iteration_counts(mu, n_m, n_c)?;
    let f = |t: Option<usize>| t.map_or(f64::INFINITY, |t| t as f64);
    Ok(BoundReport::upper(
        "iteration_count_qem_vs_noisy",
        f(noisy),
        f(qem),
        0.0,
        "none",
        &format!("δ = 1.05·B/μ̂ = gap0/19, N_c={n_c}; iterations shot={} noisy={} qem={}", f(shot), f(noisy), f(qem)),
    ))
}

/// Writes every bound report as CSV alongside a metadata sidecar.
pub fn run_bounds(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let reports = bound_reports(cfg)?;
    let inst = Instance::load(&cfg.instance, cfg.layers, cfg.noise_mode)?;
    let theta0 = cfg.theta0.resolve(inst.circuit.n_params(), cfg.seed)?;
    let mut sink = Sink::new(out_dir)?;
    sink.write("bounds_reports.csv", |w| write_reports_csv(&reports, w))?;
    let meta = Metadata {
        experiment: cfg.experiment,
        config: cfg,
        instance: InstanceInfo::of(&inst),
        theta0: &theta0,
        constants: vec![noise_constants(&inst, cfg.epsilons[0], cfg.n_m, &cfg.n_c)?],
        extra: (),
    };
    sink.json("bounds_metadata.json", &meta)?;
    Ok(ExperimentOutput {
        files: sink.files,
        reports,
    })
}

/// Hardware-efficient ansatz on the builtin toy observable.
pub fn toy_hardware_efficient(layers: usize, mode: NoiseMode) -> Result<(Circuit, Observable)> {
    Ok((
        build_hardware_efficient_with(2, layers, mode)?,
        Observable::from_diagonal(2, &crate::config::TOY_DIAGONAL)?,
    ))
}
