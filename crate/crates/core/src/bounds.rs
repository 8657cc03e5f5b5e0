//! Closed-form constants and bounds for the three gradient regimes, the
//! per-outcome variance algebra under the noisy-state split, empirical
//! Polyak-Łojasiewicz estimates, and pass/fail reports comparing bounds to
//! measurements.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ansatz::{evolve, ChannelMap, Circuit};
use crate::error::{Error, Result};
use crate::gradient::exact_gradient;
use crate::observable::{expectation, outcome_distribution, Observable};
use crate::optimizer::SgdTrace;
use crate::par::try_map_indices;
use crate::qem::SampledCircuitBatch;

/// `ℒ = D^{3/2} Σ_y |h_y|`.
pub fn smoothness_constant(d: usize, h: &Observable) -> f64 {
    (d as f64).powf(1.5) * h.abs_eigen_sum()
}

/// Shot-only variance bound `V = ν N_h D Tr(H²)/(2N_m)`.
pub fn variance_bound_v(nu: f64, n_h: usize, d: usize, tr_h2: f64, n_m: usize) -> f64 {
    nu * n_h as f64 * d as f64 * tr_h2 / (2.0 * n_m as f64)
}

/// Gate-noise bias bound `B = 4 D ‖H‖_∞² γ`.
pub fn bias_bound_b(d: usize, h_inf_norm: f64, gamma: f64) -> f64 {
    4.0 * d as f64 * h_inf_norm * h_inf_norm * gamma
}

/// Gate-noise variance bound `V^ε = D N_h Tr(H²) c(γ)/(2N_m)`.
pub fn variance_bound_ve(n_h: usize, d: usize, tr_h2: f64, n_m: usize, c_gamma: f64) -> f64 {
    d as f64 * n_h as f64 * tr_h2 * c_gamma / (2.0 * n_m as f64)
}

/// Mitigated variance bound and the lower combination it must dominate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QemVarianceBound {
    /// `N_h D Z² Tr(H²) ν̄/(2N_m) + Z² D ‖H‖_∞²/N_c`.
    pub upper: f64,
    pub shot_term: f64,
    pub circuit_term: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn variance_bound_vqem(
    n_h: usize,
    d: usize,
    z: f64,
    tr_h2: f64,
    n_m: usize,
    n_c: usize,
    h_inf_norm: f64,
    mean_nu_sampled: f64,
) -> QemVarianceBound {
    let z2 = z * z;
    let shot_term = n_h as f64 * d as f64 * z2 * tr_h2 * mean_nu_sampled / (2.0 * n_m as f64);
    let circuit_term = z2 * d as f64 * h_inf_norm * h_inf_norm / n_c as f64;
    QemVarianceBound {
        upper: shot_term + circuit_term,
        shot_term,
        circuit_term,
    }
}

/// `c₁ V^ε + c₂ D ‖H‖_∞²/N_c`.
pub fn vqem_lower_combination(c1: f64, v_e: f64, c2: f64, d: usize, h_inf_norm: f64, n_c: usize) -> f64 {
    c1 * v_e + c2 * d as f64 * h_inf_norm * h_inf_norm / n_c as f64
}

/// Bernoulli variance `p(1−p)`.
pub fn nu(p: f64) -> f64 {
    p * (1.0 - p)
}

/// `ν(p^ε)` assembled from the split `p^ε = (1−γ)p + γp̃`:
/// `γν(p̃) + γ(1−γ)(p−p̃)² + (1−γ)ν(p)`.
pub fn nu_noisy_assembled(p: f64, p_tilde: f64, gamma: f64) -> f64 {
    gamma * nu(p_tilde) + gamma * (1.0 - gamma) * (p - p_tilde).powi(2) + (1.0 - gamma) * nu(p)
}

/// Where `γ ↦ ν((1−γ)p + γp̃)` peaks on `[0, 1]`. Returns 1 when `p = p̃`.
pub fn gamma_star(p: f64, p_tilde: f64) -> f64 {
    let gap = p_tilde - p;
    if gap.abs() < 1e-15 {
        return 1.0;
    }
    let g = 0.5 * (1.0 - (nu(p) - nu(p_tilde)) / (gap * gap));
    g.clamp(0.0, 1.0)
}

/// `max_{θ,y} ν(p(y|θ))` over the given parameter points.
pub fn nu_grid(c: &Circuit, h: &Observable, thetas: &[Vec<f64>], noise: Option<&ChannelMap>) -> Result<f64> {
    let maxes = try_map_indices(thetas.len(), |k| {
        let pmf = outcome_distribution(&evolve(c, &thetas[k], noise, None), h)?;
        Ok(pmf.iter().map(|&p| nu(p)).fold(0.0, f64::max))
    })?;
    Ok(maxes.into_iter().fold(0.0, f64::max))
}

/// `max_{θ,y} mean_l ν(p_{s_l}(y|θ))` over a batch of sampled circuits.
pub fn nu_sampled(
    c: &Circuit,
    h: &Observable,
    thetas: &[Vec<f64>],
    batch: &SampledCircuitBatch,
    channels: &ChannelMap,
) -> Result<f64> {
    let maxes = try_map_indices(thetas.len(), |k| {
        let mut acc = vec![0.0; h.n_distinct()];
        for ins in &batch.indices {
            let pmf = outcome_distribution(&evolve(c, &thetas[k], Some(channels), Some(ins)), h)?;
            for (a, p) in acc.iter_mut().zip(pmf) {
                *a += nu(p);
            }
        }
        Ok(acc.into_iter().map(|v| v / batch.n_c() as f64).fold(0.0, f64::max))
    })?;
    Ok(maxes.into_iter().fold(0.0, f64::max))
}

/// Points of a regular grid on `[−π, π)^D` with `resolution` points per axis.
pub fn torus_grid(d: usize, resolution: usize) -> Vec<Vec<f64>> {
    let total = resolution.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let i = k % resolution;
                    k /= resolution;
                    -PI + 2.0 * PI * i as f64 / resolution as f64
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlMethod<'a> {
    /// Regular grid, optionally restricted to `{θ : L(θ) ≤ level}`.
    Grid { resolution: usize, sublevel: Option<f64> },
    /// Every iterate visited by the given traces.
    Trajectory(&'a [SgdTrace]),
}

/// `inf ‖∇L‖²/(2(L − L*))` over the evaluated points, skipping points within
/// `1e-9` of the ground value `L*`.
pub fn pl_constant_estimate(c: &Circuit, h: &Observable, method: PlMethod<'_>) -> Result<f64> {
    let (points, level) = match method {
        PlMethod::Grid { resolution, sublevel } => {
            if c.n_params() > 3 {
                return Err(Error::BadShape(format!(
                    "grid PL estimate needs D ≤ 3, got {}",
                    c.n_params()
                )));
            }
            (torus_grid(c.n_params(), resolution), sublevel)
        }
        PlMethod::Trajectory(traces) => (
            traces.iter().flat_map(|t| t.theta_history.iter().cloned()).collect(),
            None,
        ),
    };
    pl_ratio_min(c, h, &points, level)
}

fn pl_ratio_min(c: &Circuit, h: &Observable, points: &[Vec<f64>], level: Option<f64>) -> Result<f64> {
    let l_star = h.ground_value();
    let ratios = try_map_indices(points.len(), |k| {
        let theta = &points[k];
        let loss = expectation(&evolve(c, theta, None, None), h)?;
        let gap = loss - l_star;
        if gap < 1e-9 || level.is_some_and(|lv| loss > lv) {
            return Ok(None);
        }
        let g = exact_gradient(c, h, theta, None)?;
        let g2: f64 = g.iter().map(|x| x * x).sum();
        Ok(Some(g2 / (2.0 * gap)))
    })?;
    ratios
        .into_iter()
        .flatten()
        .reduce(f64::min)
        .ok_or(Error::NoValidPoints)
}

/// `(1−ημ)^T gap₀ + ½(B + ηℒV)/μ`; `B = 0` for the unbiased regimes.
pub fn convergence_rhs(t: usize, eta: f64, mu: f64, l_smooth: f64, v: f64, b: f64, gap0: f64) -> Result<f64> {
    check_rate(eta, mu, l_smooth)?;
    Ok((1.0 - eta * mu).powf(t as f64) * gap0 + 0.5 * (b + eta * l_smooth * v) / mu)
}

fn check_rate(eta: f64, mu: f64, l_smooth: f64) -> Result<()> {
    let limit = 1.0 / l_smooth;
    if eta > limit * (1.0 + 1e-12) {
        return Err(Error::BadLearningRate { eta, limit });
    }
    if !(mu > 0.0) {
        return Err(Error::Config(format!("PL constant must be positive, got {mu}")));
    }
    Ok(())
}

/// Step size `min(1/ℒ, δμ/(ℒV))`.
pub fn step_for_target(delta: f64, mu: f64, l_smooth: f64, v: f64) -> f64 {
    let cap = 1.0 / l_smooth;
    if v <= 0.0 {
        cap
    } else {
        cap.min(delta * mu / (l_smooth * v))
    }
}

/// Smallest `T ≤ t_max` with `convergence_rhs ≤ δ`, or `None` if the floor is above `δ`.
#[allow(clippy::too_many_arguments)]
pub fn iterations_to_reach(
    delta: f64,
    eta: f64,
    mu: f64,
    l_smooth: f64,
    v: f64,
    b: f64,
    gap0: f64,
    t_max: usize,
) -> Result<Option<usize>> {
    check_rate(eta, mu, l_smooth)?;
    let floor = 0.5 * (b + eta * l_smooth * v) / mu;
    if floor >= delta {
        return Ok(None);
    }
    if gap0 <= delta - floor {
        return Ok(Some(0));
    }
    // (1−ημ)^T gap₀ ≤ δ − floor
    let t = ((delta - floor) / gap0).ln() / (1.0 - eta * mu).ln();
    let t = t.ceil().max(0.0) as usize;
    Ok((t <= t_max).then_some(t))
}

/// Which way a bound points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Passes when `empirical ≤ theoretical + slack`.
    Upper,
    /// Passes when `empirical ≥ theoretical − slack`.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub kind: BoundKind,
    pub theoretical_value: f64,
    pub empirical_value: f64,
    pub slack: f64,
    pub slack_rule: String,
    pub passed: bool,
    pub config: String,
}

impl BoundReport {
    pub fn new(
        name: &str,
        kind: BoundKind,
        theoretical: f64,
        empirical: f64,
        slack: f64,
        slack_rule: &str,
        config: &str,
    ) -> Self {
        let passed = match kind {
            BoundKind::Upper => empirical <= theoretical + slack,
            BoundKind::Lower => empirical >= theoretical - slack,
        };
        Self {
            name: name.to_string(),
            kind,
            theoretical_value: theoretical,
            empirical_value: empirical,
            slack,
            slack_rule: slack_rule.to_string(),
            passed,
            config: config.to_string(),
        }
    }

    pub fn upper(name: &str, theoretical: f64, empirical: f64, slack: f64, slack_rule: &str, config: &str) -> Self {
        Self::new(name, BoundKind::Upper, theoretical, empirical, slack, slack_rule, config)
    }

    pub fn lower(name: &str, theoretical: f64, empirical: f64, slack: f64, slack_rule: &str, config: &str) -> Self {
        Self::new(name, BoundKind::Lower, theoretical, empirical, slack, slack_rule, config)
    }
}

pub fn write_reports_csv<W: Write>(reports: &[BoundReport], mut out: W) -> Result<()> {
    writeln!(out, "name,kind,theoretical,empirical,slack,slack_rule,passed,config")?;
    for r in reports {
        let kind = match r.kind {
            BoundKind::Upper => "upper",
            BoundKind::Lower => "lower",
        };
        writeln!(
            out,
            "{},{kind},{},{},{},{},{},{}",
            csv_field(&r.name),
            r.theoretical_value,
            r.empirical_value,
            r.slack,
            csv_field(&r.slack_rule),
            r.passed,
            csv_field(&r.config)
        )?;
    }
    Ok(())
}

/// Plain-text table for terminal output.
pub fn format_reports(reports: &[BoundReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  {:>5}  {:>14}  {:>14}  {:>10}  status\n", "name", "kind", "bound", "measured", "slack");
    for r in reports {
        let kind = if r.kind == BoundKind::Upper { "≤" } else { "≥" };
        s.push_str(&format!(
            "{:<width$}  {:>5}  {:>14.6e}  {:>14.6e}  {:>10.3e}  {}\n",
            r.name,
            kind,
            r.theoretical_value,
            r.empirical_value,
            r.slack,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total variance `E‖X − EX‖²` of vector samples with its standard error.
pub fn total_variance(samples: &[Vec<f64>]) -> (f64, f64) {
    let r = samples.len();
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / r as f64;
        }
    }
    let sq: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>() * r as f64 / (r as f64 - 1.0))
        .collect();
    mean_and_se(&sq)
}

/// Componentwise mean and standard error of vector samples.
pub fn componentwise_mean_se(samples: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let dim = samples[0].len();
    (0..dim)
        .map(|d| {
            let col: Vec<f64> = samples.iter().map(|s| s[d]).collect();
            mean_and_se(&col)
        })
        .collect()
}
