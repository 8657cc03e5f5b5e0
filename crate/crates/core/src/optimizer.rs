//! Stochastic gradient descent over the four gradient sources, plus the
//! mitigated loop written out step by step and a multi-seed driver.
//!
//! Iteration `t` (1-based) draws its randomness from child streams of
//! `derive_seed(run_seed, [t])`. The recorded loss is always the exact,
//! noiseless `L(θ^t)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ansatz::{evolve, ChannelMap, Circuit};
use crate::error::{Error, Result};
use crate::gradient::{exact_gradient, exact_loss, noisy_shot_gradient, shifted, shot_gradient, MINUS, PLUS, SHIFT};
use crate::observable::{outcome_distribution, sample_mean_from_pmf, Observable};
use crate::par::try_map_indices;
use crate::qem::{sample_circuits, derive_all, qem_gradient, shots_per_circuit, Budget, BATCH_KEY};
use crate::rng::{derive_seed, stream};

/// Stream key for finite-shot test losses, disjoint from gradient keys.
const TEST_KEY: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant(f64),
    /// `η_t = c/t`.
    InverseT(f64),
}

impl Schedule {
    /// Learning rate at iteration `t ≥ 1`.
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            Schedule::Constant(eta) => eta,
            Schedule::InverseT(c) => c / t as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Schedule::Constant(v) | Schedule::InverseT(v) => v,
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Config(format!("learning rate {v} must be finite and ≥ 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GradientSource {
    Exact,
    Shot { n_m: usize },
    NoisyShot { n_m: usize, channels: ChannelMap },
    Qem {
        n_c: usize,
        n_m: usize,
        channels: ChannelMap,
        #[serde(default)]
        budget: Budget,
    },
}

impl GradientSource {
    pub fn label(&self) -> &'static str {
        match self {
            GradientSource::Exact => "exact",
            GradientSource::Shot { .. } => "shot",
            GradientSource::NoisyShot { .. } => "noisy",
            GradientSource::Qem { .. } => "qem",
        }
    }

    pub fn gradient(&self, c: &Circuit, h: &Observable, theta: &[f64], seed: u64) -> Result<Vec<f64>> {
        match self {
            GradientSource::Exact => exact_gradient(c, h, theta, None),
            GradientSource::Shot { n_m } => Ok(shot_gradient(c, h, theta, *n_m, seed)?.g_hat),
            GradientSource::NoisyShot { n_m, channels } => {
                Ok(noisy_shot_gradient(c, h, theta, *n_m, channels, seed)?.g_hat)
            }
            GradientSource::Qem {
                n_c,
                n_m,
                channels,
                budget,
            } => qem_gradient(c, theta, h, *n_c, *n_m, channels, *budget, seed),
        }
    }
}

/// How the loss at each iterate is additionally estimated at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestShots {
    #[default]
    Exact,
    /// Sample mean of this many shots on the noiseless circuit.
    Shots(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdTrace {
    pub theta_history: Vec<Vec<f64>>,
    /// Exact noiseless `L(θ^t)`, `t = 0..=T`.
    pub loss_history: Vec<f64>,
    /// `‖ĝ_t‖` for the step taken from `θ^t`, `t = 0..T`.
    pub gradient_norms: Vec<f64>,
    /// Finite-shot test loss per iterate when requested.
    pub test_loss_history: Option<Vec<f64>>,
    pub seed: u64,
    pub regime: String,
}

impl SgdTrace {
    pub fn iterations(&self) -> usize {
        self.loss_history.len() - 1
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("nonempty")
    }

    /// Loss column used for plotting: the test loss if present, else exact.
    pub fn reported_losses(&self) -> &[f64] {
        self.test_loss_history.as_deref().unwrap_or(&self.loss_history)
    }

    /// Columns `t, loss, grad_norm, [test_loss,] theta_0 … theta_{D−1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.theta_history[0].len();
        let mut header = String::from("t,loss,grad_norm");
        if self.test_loss_history.is_some() {
            header.push_str(",test_loss");
        }
        for d in 0..dim {
            header.push_str(&format!(",theta_{d}"));
        }
        writeln!(out, "{header}")?;
        for t in 0..self.loss_history.len() {
            let mut row = format!("{t},{}", self.loss_history[t]);
            match self.gradient_norms.get(t) {
                Some(g) => row.push_str(&format!(",{g}")),
                None => row.push(','),
            }
            if let Some(test) = &self.test_loss_history {
                row.push_str(&format!(",{}", test[t]));
            }
            for v in &self.theta_history[t] {
                row.push_str(&format!(",{v}"));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Recorder<'a> {
    c: &'a Circuit,
    h: &'a Observable,
    test_shots: TestShots,
    seed: u64,
    trace: SgdTrace,
}

impl<'a> Recorder<'a> {
    fn new(c: &'a Circuit, h: &'a Observable, theta0: &[f64], test_shots: TestShots, seed: u64, regime: &str) -> Result<Self> {
        if test_shots == TestShots::Shots(0) {
            return Err(Error::ZeroShots);
        }
        let mut rec = Self {
            c,
            h,
            test_shots,
            seed,
            trace: SgdTrace {
                theta_history: Vec::new(),
                loss_history: Vec::new(),
                gradient_norms: Vec::new(),
                test_loss_history: matches!(test_shots, TestShots::Shots(_)).then(Vec::new),
                seed,
                regime: regime.to_string(),
            },
        };
        rec.push(theta0.to_vec())?;
        Ok(rec)
    }

    fn push(&mut self, theta: Vec<f64>) -> Result<()> {
        let t = self.trace.theta_history.len() as u64;
        self.trace.loss_history.push(exact_loss(self.c, self.h, &theta, None)?);
        if let (TestShots::Shots(n), Some(test)) = (self.test_shots, self.trace.test_loss_history.as_mut()) {
            let pmf = outcome_distribution(&evolve(self.c, &theta, None, None), self.h)?;
            let mut rng = stream(self.seed, &[TEST_KEY, t]);
            test.push(sample_mean_from_pmf(&pmf, self.h.eigenvalues(), n, &mut rng));
        }
        self.trace.theta_history.push(theta);
        Ok(())
    }
}

fn check_run(c: &Circuit, theta0: &[f64], schedule: &Schedule, iterations: usize) -> Result<()> {
    if iterations == 0 {
        return Err(Error::Config("iteration count T must be ≥ 1".into()));
    }
    if theta0.len() != c.n_params() {
        return Err(Error::DimMismatch {
            expected: c.n_params(),
            got: theta0.len(),
        });
    }
    schedule.validate()
}

/// `θ^{t+1} = θ^t − η_t ĝ_t` for `t = 1..=T`.
#[allow(clippy::too_many_arguments)]
pub fn sgd(
    c: &Circuit,
    h: &Observable,
    source: &GradientSource,
    theta0: &[f64],
    schedule: Schedule,
    iterations: usize,
    test_shots: TestShots,
    seed: u64,
) -> Result<SgdTrace> {
    check_run(c, theta0, &schedule, iterations)?;
    let mut rec = Recorder::new(c, h, theta0, test_shots, seed, source.label())?;
    let mut theta = theta0.to_vec();
    for t in 1..=iterations {
        let g = source.gradient(c, h, &theta, derive_seed(seed, &[t as u64]))?;
        let eta = schedule.eta(t);
        for (x, gd) in theta.iter_mut().zip(&g) {
            *x -= eta * gd;
        }
        rec.trace.gradient_norms.push(norm(&g));
        rec.push(theta.clone())?;
    }
    Ok(rec.trace)
}

/// The mitigated SGD loop in explicit form: each iteration samples one batch
/// of circuits, then for every parameter and every sampled circuit measures
/// both shifted circuits, and finally takes the step. Produces the same trace
/// as [`sgd`] with [`GradientSource::Qem`].
#[allow(clippy::too_many_arguments)]
pub fn qem_sgd_stepwise(
    c: &Circuit,
    h: &Observable,
    theta0: &[f64],
    schedule: Schedule,
    iterations: usize,
    n_c: usize,
    n_m: usize,
    channels: &ChannelMap,
    budget: Budget,
    seed: u64,
) -> Result<SgdTrace> {
    check_run(c, theta0, &schedule, iterations)?;
    crate::gradient::check_circuit(c, h, theta0)?;
    let n_qem = shots_per_circuit(n_m, n_c, budget)?;
    let qprs = derive_all(c, channels)?;
    let mut rec = Recorder::new(c, h, theta0, TestShots::Exact, seed, "qem")?;
    let mut theta = theta0.to_vec();
    for t in 1..=iterations {
        let seed_t = derive_seed(seed, &[t as u64]);
        let batch = sample_circuits(&qprs, n_c, &mut stream(seed_t, &[BATCH_KEY]));
        let dim = c.n_params();
        // Per-(d, l) measurements are independent, so they may run in parallel;
        // the sums below keep the sequential order.
        let halves = try_map_indices(dim * n_c, |k| {
            let (d, l) = (k / n_c, k % n_c);
            let mut m = [0.0; 2];
            for (i, (sign, delta)) in [(PLUS, SHIFT), (MINUS, -SHIFT)].into_iter().enumerate() {
                let rho = evolve(c, &shifted(&theta, d, delta), Some(channels), Some(&batch.indices[l]));
                let pmf = outcome_distribution(&rho, h)?;
                let mut rng = stream(seed_t, &[l as u64, d as u64, sign]);
                m[i] = sample_mean_from_pmf(&pmf, h.eigenvalues(), n_qem, &mut rng);
            }
            Ok(m)
        })?;
        let mut g = vec![0.0; dim];
        for d in 0..dim {
            let mut acc = 0.0;
            for l in 0..n_c {
                let [plus, minus] = halves[d * n_c + l];
                acc += batch.signs[l] as f64 * 0.5 * (plus - minus);
            }
            g[d] = acc * (batch.z / n_c as f64);
        }
        let eta = schedule.eta(t);
        for (x, gd) in theta.iter_mut().zip(&g) {
            *x -= eta * gd;
        }
        rec.trace.gradient_norms.push(norm(&g));
        rec.push(theta.clone())?;
    }
    Ok(rec.trace)
}

/// Per-iteration mean and envelope over several traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub std: Vec<f64>,
}

impl RunSummary {
    pub fn from_traces(traces: &[SgdTrace]) -> Self {
        let len = traces[0].reported_losses().len();
        let k = traces.len() as f64;
        let mut s = RunSummary {
            mean: vec![0.0; len],
            min: vec![f64::INFINITY; len],
            max: vec![f64::NEG_INFINITY; len],
            std: vec![0.0; len],
        };
        for t in 0..len {
            let col: Vec<f64> = traces.iter().map(|tr| tr.reported_losses()[t]).collect();
            let mean = col.iter().sum::<f64>() / k;
            s.mean[t] = mean;
            s.min[t] = col.iter().copied().fold(f64::INFINITY, f64::min);
            s.max[t] = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            s.std[t] = if traces.len() > 1 {
                (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean,min,max,std")?;
        for t in 0..self.mean.len() {
            writeln!(out, "{t},{},{},{},{}", self.mean[t], self.min[t], self.max[t], self.std[t])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<'a> {
    pub circuit: &'a Circuit,
    pub observable: &'a Observable,
    pub source: GradientSource,
    pub theta0: Vec<f64>,
    pub schedule: Schedule,
    pub iterations: usize,
    pub test_shots: TestShots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedRuns {
    pub traces: Vec<SgdTrace>,
    pub summary: RunSummary,
}

/// Runs seeds `master+1 ..= master+n_seeds` from the shared `θ⁰`.
pub fn repeated_runs(cfg: &RunConfig<'_>, n_seeds: usize, master_seed: u64) -> Result<RepeatedRuns> {
    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be ≥ 1".into()));
    }
    let traces = try_map_indices(n_seeds, |k| {
        sgd(
            cfg.circuit,
            cfg.observable,
            &cfg.source,
            &cfg.theta0,
            cfg.schedule,
            cfg.iterations,
            cfg.test_shots,
            master_seed.wrapping_add(k as u64 + 1),
        )
    })?;
    let summary = RunSummary::from_traces(&traces);
    Ok(RepeatedRuns { traces, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_hardware_efficient, GateSpec};
    use crate::pauli::{Pauli, PauliString};

    fn single_ry() -> Circuit {
        Circuit::new(1, vec![GateSpec::rotation(PauliString::new(vec![Pauli::Y]), 0, vec![0])]).unwrap()
    }

    fn z1() -> Observable {
        Observable::from_diagonal(1, &[1.0, -1.0]).unwrap()
    }

    #[test]
    fn one_dimensional_descent() {
        let tr = sgd(&single_ry(), &z1(), &GradientSource::Exact, &[1.0], Schedule::Constant(0.1), 200, TestShots::Exact, 0).unwrap();
        assert_eq!(tr.theta_history.len(), 201);
        assert_eq!(tr.loss_history.len(), 201);
        assert_eq!(tr.gradient_norms.len(), 200);
        for w in tr.loss_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(tr.final_loss() < -1.0 + 1e-3);
    }

    #[test]
    fn zero_rate_freezes_theta() {
        let tr = sgd(&single_ry(), &z1(), &GradientSource::Shot { n_m: 5 }, &[0.4], Schedule::InverseT(0.0), 5, TestShots::Exact, 3).unwrap();
        assert!(tr.theta_history.iter().all(|t| t == &vec![0.4]));
    }

    #[test]
    fn explicit_loop_matches_generic_driver() {
        let c = build_hardware_efficient(2, 1, true).unwrap();
        let h = Observable::from_diagonal(2, &[1.0, -0.4, -0.4, 0.3]).unwrap();
        let ch = ChannelMap::depolarizing(&c, 0.1).unwrap();
        let theta0 = [0.3, 0.1, -0.2, 0.5];
        let source = GradientSource::Qem {
            n_c: 4,
            n_m: 40,
            channels: ch.clone(),
            budget: Budget::Strict,
        };
        let a = sgd(&c, &h, &source, &theta0, Schedule::InverseT(0.5), 6, TestShots::Exact, 17).unwrap();
        let b = qem_sgd_stepwise(&c, &h, &theta0, Schedule::InverseT(0.5), 6, 4, 40, &ch, Budget::Strict, 17).unwrap();
        assert_eq!(a.theta_history, b.theta_history);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn repeated_runs_summary() {
        let c = single_ry();
        let h = z1();
        let cfg = RunConfig {
            circuit: &c,
            observable: &h,
            source: GradientSource::Exact,
            theta0: vec![0.5],
            schedule: Schedule::Constant(0.2),
            iterations: 10,
            test_shots: TestShots::Exact,
        };
        let one = repeated_runs(&cfg, 1, 7).unwrap();
        assert_eq!(one.summary.mean, one.traces[0].loss_history);
        let many = repeated_runs(&cfg, 4, 7).unwrap();
        assert_eq!(many.summary.min, many.summary.max);
        assert_eq!(many.traces[2].seed, 10);
    }

    #[test]
    fn csv_and_test_losses() {
        let tr = sgd(&single_ry(), &z1(), &GradientSource::Shot { n_m: 10 }, &[0.5], Schedule::Constant(0.3), 3, TestShots::Shots(20), 1).unwrap();
        let test = tr.test_loss_history.as_ref().unwrap();
        assert_eq!(test.len(), 4);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,loss,grad_norm,test_loss,theta_0\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn rejects_bad_runs() {
        assert!(sgd(&single_ry(), &z1(), &GradientSource::Exact, &[0.0], Schedule::Constant(0.1), 0, TestShots::Exact, 0).is_err());
        assert!(sgd(&single_ry(), &z1(), &GradientSource::Exact, &[0.0, 1.0], Schedule::Constant(0.1), 3, TestShots::Exact, 0).is_err());
    }
}
