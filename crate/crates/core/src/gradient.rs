//! Parameter-shift gradients: exact, shot-sampled, and shot-sampled under
//! gate noise, plus the gate-noise bias and the double-shift Hessian.
//!
//! Component `d` of a gradient is `½(L(θ + π/2·e_d) − L(θ − π/2·e_d))`. Each
//! of the `2D` shifted circuits in a sampled estimate gets its own measurement
//! block drawn from a child stream keyed by `(seed, d, sign)`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::ansatz::{evolve, ChannelMap, Circuit};
use crate::error::{Error, Result};
use crate::observable::{expectation, outcome_distribution, sample_mean_from_pmf, Observable};
use crate::par::try_map_indices;
use crate::rng::stream;
use crate::state::DensityMatrix;

pub const SHIFT: f64 = FRAC_PI_2;

/// Sign keys for child streams.
pub(crate) const PLUS: u64 = 0;
pub(crate) const MINUS: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Noiseless,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub g_hat: Vec<f64>,
    pub shots_per_term: usize,
    pub regime: Regime,
    pub seed: u64,
}

pub(crate) fn shifted(theta: &[f64], d: usize, delta: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    t[d] += delta;
    t
}

pub(crate) fn check_circuit(c: &Circuit, h: &Observable, theta: &[f64]) -> Result<()> {
    if theta.len() != c.n_params() {
        return Err(Error::DimMismatch {
            expected: c.n_params(),
            got: theta.len(),
        });
    }
    if h.n_qubits() != c.n_qubits() {
        return Err(Error::DimMismatch {
            expected: 1 << c.n_qubits(),
            got: 1 << h.n_qubits(),
        });
    }
    if !c.params_used_once() {
        return Err(Error::BadShape("shift rule needs each parameter in exactly one gate".into()));
    }
    Ok(())
}

fn state(c: &Circuit, theta: &[f64], noise: Option<&ChannelMap>) -> DensityMatrix {
    evolve(c, theta, noise, None)
}

/// `Tr(H ρ(θ))`, noiseless or with the given channels.
pub fn exact_loss(c: &Circuit, h: &Observable, theta: &[f64], noise: Option<&ChannelMap>) -> Result<f64> {
    check_circuit(c, h, theta)?;
    if let Some(ch) = noise {
        ch.validate(c)?;
    }
    expectation(&state(c, theta, noise), h)
}

/// Shift-rule gradient with exact expectations. With channels this is the
/// biased noisy gradient.
pub fn exact_gradient(c: &Circuit, h: &Observable, theta: &[f64], noise: Option<&ChannelMap>) -> Result<Vec<f64>> {
    check_circuit(c, h, theta)?;
    if let Some(ch) = noise {
        ch.validate(c)?;
    }
    try_map_indices(c.n_params(), |d| {
        let plus = expectation(&state(c, &shifted(theta, d, SHIFT), noise), h)?;
        let minus = expectation(&state(c, &shifted(theta, d, -SHIFT), noise), h)?;
        Ok(0.5 * (plus - minus))
    })
}

fn sampled_gradient(
    c: &Circuit,
    h: &Observable,
    theta: &[f64],
    n_m: usize,
    noise: Option<&ChannelMap>,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_m == 0 {
        return Err(Error::ZeroShots);
    }
    check_circuit(c, h, theta)?;
    if let Some(ch) = noise {
        ch.validate(c)?;
    }
    try_map_indices(c.n_params(), |d| {
        let mut halves = [0.0; 2];
        for (k, (sign, delta)) in [(PLUS, SHIFT), (MINUS, -SHIFT)].into_iter().enumerate() {
            let rho = state(c, &shifted(theta, d, delta), noise);
            let pmf = outcome_distribution(&rho, h)?;
            let mut rng = stream(seed, &[d as u64, sign]);
            halves[k] = sample_mean_from_pmf(&pmf, h.eigenvalues(), n_m, &mut rng);
        }
        Ok(0.5 * (halves[0] - halves[1]))
    })
}

/// Noiseless shift-rule estimate with `n_m` shots per shifted circuit.
pub fn shot_gradient(c: &Circuit, h: &Observable, theta: &[f64], n_m: usize, seed: u64) -> Result<GradientSample> {
    Ok(GradientSample {
        g_hat: sampled_gradient(c, h, theta, n_m, None, seed)?,
        shots_per_term: n_m,
        regime: Regime::Noiseless,
        seed,
    })
}

/// Shift-rule estimate measured on the noisy circuits.
pub fn noisy_shot_gradient(
    c: &Circuit,
    h: &Observable,
    theta: &[f64],
    n_m: usize,
    channels: &ChannelMap,
    seed: u64,
) -> Result<GradientSample> {
    Ok(GradientSample {
        g_hat: sampled_gradient(c, h, theta, n_m, Some(channels), seed)?,
        shots_per_term: n_m,
        regime: Regime::Noisy,
        seed,
    })
}

/// `g^ε − g`.
pub fn bias_vector(c: &Circuit, h: &Observable, theta: &[f64], channels: &ChannelMap) -> Result<Vec<f64>> {
    let noisy = exact_gradient(c, h, theta, Some(channels))?;
    let ideal = exact_gradient(c, h, theta, None)?;
    Ok(noisy.iter().zip(&ideal).map(|(a, b)| a - b).collect())
}

/// Exact per-component variance of the sampled estimator,
/// `(σ²₊ + σ²₋)/(4 N_m)` with `σ²_±` the single-shot variance of each shifted circuit.
pub fn estimator_variance(
    c: &Circuit,
    h: &Observable,
    theta: &[f64],
    n_m: usize,
    noise: Option<&ChannelMap>,
) -> Result<Vec<f64>> {
    if n_m == 0 {
        return Err(Error::ZeroShots);
    }
    check_circuit(c, h, theta)?;
    try_map_indices(c.n_params(), |d| {
        let mut total = 0.0;
        for delta in [SHIFT, -SHIFT] {
            let pmf = outcome_distribution(&state(c, &shifted(theta, d, delta), noise), h)?;
            total += single_shot_variance(&pmf, h.eigenvalues());
        }
        Ok(total / (4.0 * n_m as f64))
    })
}

pub(crate) fn single_shot_variance(pmf: &[f64], values: &[f64]) -> f64 {
    let mean: f64 = pmf.iter().zip(values).map(|(p, v)| p * v).sum();
    let second: f64 = pmf.iter().zip(values).map(|(p, v)| p * v * v).sum();
    (second - mean * mean).max(0.0)
}

/// `[∇²L]_ij = ¼ Σ_{a,b=±} a·b·L(θ + a·π/2·e_i + b·π/2·e_j)`.
pub fn hessian_double_shift(c: &Circuit, h: &Observable, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_circuit(c, h, theta)?;
    let dim = c.n_params();
    let loss = |t: &[f64]| expectation(&state(c, t, None), h);
    let upper = try_map_indices(dim * dim, |k| {
        let (i, j) = (k / dim, k % dim);
        if j < i {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (a, b, s) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            let mut t = theta.to_vec();
            t[i] += a * SHIFT;
            t[j] += b * SHIFT;
            acc += s * loss(&t)?;
        }
        Ok(0.25 * acc)
    })?;
    let mut m = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            m[i][j] = upper[i * dim + j];
            m[j][i] = upper[i * dim + j];
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_hardware_efficient, GateSpec};
    use crate::pauli::{Pauli, PauliString};

    fn single_ry(noisy: bool) -> Circuit {
        Circuit::new(
            1,
            vec![GateSpec::rotation(PauliString::new(vec![Pauli::Y]), 0, vec![0]).with_noise(noisy)],
        )
        .unwrap()
    }

    fn z1() -> Observable {
        Observable::from_diagonal(1, &[1.0, -1.0]).unwrap()
    }

    #[test]
    fn analytic_single_qubit() {
        let c = single_ry(false);
        for k in 0..20 {
            let t = -3.1 + 0.31 * k as f64;
            let g = exact_gradient(&c, &z1(), &[t], None).unwrap();
            assert!((g[0] + t.sin()).abs() < 1e-12);
            let hess = hessian_double_shift(&c, &z1(), &[t]).unwrap();
            assert!((hess[0][0] + t.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn single_qubit_bias() {
        let c = single_ry(true);
        for eps in [0.05, 0.3] {
            let ch = ChannelMap::depolarizing(&c, eps).unwrap();
            for t in [0.4, 2.0] {
                let b = bias_vector(&c, &z1(), &[t], &ch).unwrap();
                let want = ((1.0 - 4.0 * eps / 3.0) - 1.0) * (-t.sin());
                assert!((b[0] - want).abs() < 1e-14);
            }
            let zero = ChannelMap::depolarizing(&c, 0.0).unwrap();
            assert_eq!(bias_vector(&c, &z1(), &[0.7], &zero).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn seeded_replay_and_zero_noise_equivalence() {
        let c = build_hardware_efficient(2, 1, true).unwrap();
        let h = Observable::from_diagonal(2, &[1.0, -0.5, -0.5, 0.2]).unwrap();
        let theta = [0.2, -0.7, 1.3, 0.4];
        let a = shot_gradient(&c, &h, &theta, 50, 11).unwrap();
        let b = shot_gradient(&c, &h, &theta, 50, 11).unwrap();
        assert_eq!(a, b);
        let quiet = ChannelMap::depolarizing(&c, 0.0).unwrap();
        let n = noisy_shot_gradient(&c, &h, &theta, 50, &quiet, 11).unwrap();
        assert_eq!(n.g_hat, a.g_hat);
        assert!(matches!(shot_gradient(&c, &h, &theta, 0, 1), Err(Error::ZeroShots)));
    }

    #[test]
    fn hessian_is_symmetric() {
        let c = build_hardware_efficient(2, 1, false).unwrap();
        let h = Observable::from_diagonal(2, &[1.0, -0.5, -0.5, 0.2]).unwrap();
        let m = hessian_double_shift(&c, &h, &[0.2, -0.7, 1.3, 0.4]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m[i][j] - m[j][i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reused_parameter_is_rejected() {
        let y = PauliString::new(vec![Pauli::Y]);
        let c = Circuit::new(
            2,
            vec![GateSpec::rotation(y.clone(), 0, vec![0]), GateSpec::rotation(y, 0, vec![1])],
        )
        .unwrap();
        let h = Observable::from_diagonal(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(exact_gradient(&c, &h, &[0.1], None), Err(Error::BadShape(_))));
    }
}
