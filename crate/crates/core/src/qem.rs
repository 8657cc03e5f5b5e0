//! Quasi-probabilistic error mitigation.
//!
//! Each noisy gate `ℰ∘𝒰` is followed by a sampled Pauli correction so that the
//! implementable operations are `ℰ∘𝒫_s∘𝒰`. The ideal gate is recovered as
//! `𝒰 = Σ_s q_s (ℰ∘𝒫_s∘𝒰)`. In transfer-matrix form this reads
//! `Σ_s q_s χ(s,r) = 1/f_r`, and since the sign matrix satisfies
//! `χχᵀ = 4^m·I` the solution is `q = χᵀ(1/f)/4^m`. Pauli channels commute
//! with Pauli conjugations, so the order of `ℰ` and `𝒫_s` does not change `q`.

use std::io::Write;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{check_insertions, evolve, ChannelMap, Circuit};
use crate::error::{Error, Result};
use crate::gradient::{check_circuit, shifted, MINUS, PLUS, SHIFT};
use crate::noise::{ptm, PauliChannel};
use crate::observable::{expectation, outcome_distribution, sample_mean_from_pmf, Observable};
use crate::par::try_map_indices;
use crate::pauli::{sign_by_index, PauliString};
use crate::rng::{cumulative, sample_cdf, stream};

const SINGULAR_TOL: f64 = 1e-12;
/// Stream key for drawing a circuit batch, disjoint from per-circuit keys.
pub(crate) const BATCH_KEY: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiProbabilityRep {
    pub gate_id: usize,
    pub n_qubits: usize,
    /// `q_s` indexed by Pauli string index.
    pub q: Vec<f64>,
    /// One-norm `Z_d = Σ_s |q_s|`.
    pub z: f64,
    /// Sampling distribution `|q_s|/Z_d`.
    pub pmf: Vec<f64>,
    pub signs: Vec<i8>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl QuasiProbabilityRep {
    fn from_q(gate_id: usize, n_qubits: usize, q: Vec<f64>) -> Self {
        let z: f64 = q.iter().map(|v| v.abs()).sum();
        let pmf: Vec<f64> = q.iter().map(|v| v.abs() / z).collect();
        let signs = q.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
        let cdf = cumulative(&pmf);
        Self {
            gate_id,
            n_qubits,
            q,
            z,
            pmf,
            signs,
            cdf,
        }
    }

    /// Probability of sampling the identity correction.
    pub fn p_identity(&self) -> f64 {
        self.pmf[0]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_cdf(&self.cdf, rng)
    }

    /// `max_r |Σ_s q_s f_r χ(s,r) − 1|` against the channel it was derived from.
    pub fn reconstruction_residual(&self, ch: &PauliChannel) -> f64 {
        let f = ptm(ch).diag;
        let m = self.n_qubits;
        (0..f.len())
            .map(|r| {
                let acc: f64 = self
                    .q
                    .iter()
                    .enumerate()
                    .map(|(s, qs)| qs * f[r] * sign_by_index(s, r, m))
                    .sum();
                (acc - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Quasi-probabilities inverting `ch` on its support.
pub fn derive_qpr(ch: &PauliChannel, gate_id: usize) -> Result<QuasiProbabilityRep> {
    let f = ptm(ch).diag;
    if let Some(bad) = f.iter().find(|v| v.abs() < SINGULAR_TOL) {
        return Err(Error::SingularChannel { fidelity: *bad });
    }
    let m = ch.n_qubits();
    let size = f.len();
    let q = (0..size)
        .map(|s| (0..size).map(|r| sign_by_index(s, r, m) / f[r]).sum::<f64>() / size as f64)
        .collect();
    Ok(QuasiProbabilityRep::from_q(gate_id, m, q))
}

/// One representation per noisy gate, in circuit order.
pub fn derive_all(c: &Circuit, channels: &ChannelMap) -> Result<Vec<QuasiProbabilityRep>> {
    channels.validate(c)?;
    c.noisy_gate_indices()
        .into_iter()
        .map(|i| derive_qpr(channels.get(i).expect("validated"), i))
        .collect()
}

/// `Z = Π_d Z_d`.
pub fn sampling_overhead(qprs: &[QuasiProbabilityRep]) -> f64 {
    qprs.iter().map(|q| q.z).product()
}

/// `c₁ = Z² Π_d p_d(identity)`.
pub fn c1_from_qprs(qprs: &[QuasiProbabilityRep]) -> f64 {
    let z = sampling_overhead(qprs);
    z * z * qprs.iter().map(|q| q.p_identity()).product::<f64>()
}

/// `c₂ = Z²`.
pub fn c2_from_qprs(qprs: &[QuasiProbabilityRep]) -> f64 {
    sampling_overhead(qprs).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCircuitBatch {
    /// Correction string per noisy gate, per sampled circuit.
    pub indices: Vec<Vec<PauliString>>,
    pub signs: Vec<i8>,
    pub z: f64,
}

impl SampledCircuitBatch {
    pub fn n_c(&self) -> usize {
        self.indices.len()
    }

    /// Every circuit uncorrected, sign `+1`, `Z = 1`: the plain noisy estimator.
    pub fn unmitigated(c: &Circuit, n_c: usize) -> Self {
        let ids: Vec<PauliString> = c
            .noisy_gate_indices()
            .iter()
            .map(|&g| PauliString::identity(c.gates()[g].support.len()))
            .collect();
        Self {
            indices: vec![ids; n_c],
            signs: vec![1; n_c],
            z: 1.0,
        }
    }

    /// Writes one row per circuit: `l, sign, Z, corrections…`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let width = self.indices.first().map_or(0, |v| v.len());
        let mut header = String::from("l,sign,z");
        for d in 0..width {
            header.push_str(&format!(",gate{d}"));
        }
        writeln!(out, "{header}")?;
        for (l, (ins, s)) in self.indices.iter().zip(&self.signs).enumerate() {
            let cols: Vec<String> = ins.iter().map(|p| p.to_string()).collect();
            writeln!(out, "{l},{s},{},{}", self.z, cols.join(","))?;
        }
        Ok(())
    }
}

/// Draws `n_c` circuits, each gate's correction sampled from its pmf.
pub fn sample_circuits<R: Rng + ?Sized>(qprs: &[QuasiProbabilityRep], n_c: usize, rng: &mut R) -> SampledCircuitBatch {
    let mut indices = Vec::with_capacity(n_c);
    let mut signs = Vec::with_capacity(n_c);
    for _ in 0..n_c {
        let mut row = Vec::with_capacity(qprs.len());
        let mut sign = 1i8;
        for q in qprs {
            let s = q.sample(rng);
            sign *= q.signs[s];
            row.push(PauliString::from_index(s, q.n_qubits));
        }
        indices.push(row);
        signs.push(sign);
    }
    SampledCircuitBatch {
        indices,
        signs,
        z: sampling_overhead(qprs),
    }
}

/// How each sampled circuit's expectation is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotMode {
    Exact,
    Shots(usize),
}

/// `(Z/N_c) Σ_l sgn_l ⟨H⟩_l`, where `⟨H⟩_l` is exact or a shot average
/// drawn from the stream keyed `(seed, l)`.
pub fn qem_expectation(
    c: &Circuit,
    theta: &[f64],
    h: &Observable,
    batch: &SampledCircuitBatch,
    channels: &ChannelMap,
    shots: ShotMode,
    seed: u64,
) -> Result<f64> {
    if shots == ShotMode::Shots(0) {
        return Err(Error::ZeroShots);
    }
    check_circuit(c, h, theta)?;
    channels.validate(c)?;
    check_batch(c, batch)?;
    let terms = try_map_indices(batch.n_c(), |l| {
        let rho = evolve(c, theta, Some(channels), Some(&batch.indices[l]));
        let value = match shots {
            ShotMode::Exact => expectation(&rho, h)?,
            ShotMode::Shots(n) => {
                let pmf = outcome_distribution(&rho, h)?;
                sample_mean_from_pmf(&pmf, h.eigenvalues(), n, &mut stream(seed, &[l as u64]))
            }
        };
        Ok(batch.signs[l] as f64 * value)
    })?;
    Ok(batch.z * terms.iter().sum::<f64>() / batch.n_c() as f64)
}

fn check_batch(c: &Circuit, batch: &SampledCircuitBatch) -> Result<()> {
    if batch.n_c() == 0 {
        return Err(Error::BadShape("empty circuit batch".into()));
    }
    for ins in &batch.indices {
        check_insertions(c, ins)?;
    }
    Ok(())
}

/// What to do when `N_c` does not divide `N_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    #[default]
    Strict,
    /// Use `⌊N_m/N_c⌋` shots per circuit.
    Lenient,
}

/// Shots per sampled circuit per shifted evaluation.
pub fn shots_per_circuit(n_m: usize, n_c: usize, budget: Budget) -> Result<usize> {
    if n_c == 0 || n_m == 0 {
        return Err(Error::ZeroShots);
    }
    if n_m % n_c != 0 {
        match budget {
            Budget::Strict => return Err(Error::IndivisibleBudget { n_c, n_m }),
            Budget::Lenient => warn!("N_c = {n_c} does not divide N_m = {n_m}; using {} shots per circuit", n_m / n_c),
        }
    }
    let per = n_m / n_c;
    if per == 0 {
        return Err(Error::ZeroShots);
    }
    Ok(per)
}

/// Mitigated shift-rule gradient on a given batch. Every circuit `l` is
/// measured at both shifts of every parameter with `shots` each, using the
/// stream keyed `(seed, l, d, sign)`.
pub fn qem_gradient_on_batch(
    c: &Circuit,
    theta: &[f64],
    h: &Observable,
    batch: &SampledCircuitBatch,
    channels: &ChannelMap,
    shots: ShotMode,
    seed: u64,
) -> Result<Vec<f64>> {
    if shots == ShotMode::Shots(0) {
        return Err(Error::ZeroShots);
    }
    check_circuit(c, h, theta)?;
    channels.validate(c)?;
    check_batch(c, batch)?;
    let dim = c.n_params();
    let n_c = batch.n_c();
    // One task per (circuit, parameter) pair; the reduction below runs in index order.
    let terms = try_map_indices(n_c * dim, |k| {
        let (l, d) = (k / dim, k % dim);
        let mut halves = [0.0; 2];
        for (i, (sign, delta)) in [(PLUS, SHIFT), (MINUS, -SHIFT)].into_iter().enumerate() {
            let rho = evolve(c, &shifted(theta, d, delta), Some(channels), Some(&batch.indices[l]));
            halves[i] = match shots {
                ShotMode::Exact => expectation(&rho, h)?,
                ShotMode::Shots(n) => {
                    let pmf = outcome_distribution(&rho, h)?;
                    let mut rng = stream(seed, &[l as u64, d as u64, sign]);
                    sample_mean_from_pmf(&pmf, h.eigenvalues(), n, &mut rng)
                }
            };
        }
        Ok(batch.signs[l] as f64 * 0.5 * (halves[0] - halves[1]))
    })?;
    let mut g = vec![0.0; dim];
    for l in 0..n_c {
        for d in 0..dim {
            g[d] += terms[l * dim + d];
        }
    }
    let scale = batch.z / n_c as f64;
    Ok(g.into_iter().map(|v| v * scale).collect())
}

/// Samples one batch of `n_c` circuits from `(seed, BATCH_KEY)` and returns the
/// mitigated gradient with `N_m/N_c` shots per circuit and shift.
#[allow(clippy::too_many_arguments)]
pub fn qem_gradient(
    c: &Circuit,
    theta: &[f64],
    h: &Observable,
    n_c: usize,
    n_m: usize,
    channels: &ChannelMap,
    budget: Budget,
    seed: u64,
) -> Result<Vec<f64>> {
    let per = shots_per_circuit(n_m, n_c, budget)?;
    let qprs = derive_all(c, channels)?;
    let batch = sample_circuits(&qprs, n_c, &mut stream(seed, &[BATCH_KEY]));
    qem_gradient_on_batch(c, theta, h, &batch, channels, ShotMode::Shots(per), seed)
}


/// Closed-form per-gate constants for an `n`-qubit global depolarizing
/// channel whose transfer fidelity is `x = (1−γ)^{1/D}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepolarizingConstants {
    pub z_d: f64,
    pub p_d0: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn depolarizing_constants(n: usize, gamma: f64, d: usize) -> Result<DepolarizingConstants> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::BadGamma(gamma));
    }
    if d == 0 || n == 0 {
        return Err(Error::BadShape("need n ≥ 1 and D ≥ 1".into()));
    }
    let x = (1.0 - gamma).powf(1.0 / d as f64);
    let four_n = 4f64.powi(n as i32);
    let a = 1.0 - 2.0 / four_n;
    let z_d = (1.0 + a * (1.0 - x)) / x;
    let p_d0 = (four_n - 1.0 + x) / (four_n * (1.0 + a * (1.0 - x)));
    let c1 = (z_d * z_d * p_d0).powi(d as i32);
    let c2 = z_d.powi(2 * d as i32);
    Ok(DepolarizingConstants { z_d, p_d0, c1, c2 })
}

/// `Z_d² p_d(0)` written as the ratio `num/den` in `x = (1−γ)^{1/D}`.
pub fn c1_factor_ratio(n: usize, gamma: f64, d: usize) -> f64 {
    let x = (1.0 - gamma).powf(1.0 / d as f64);
    let f = 4f64.powi(n as i32);
    let num = (2.0 * f - 4.0 + 2.0 / f) + x * (5.0 - 4.0 / f - f) - x * x * (1.0 - 2.0 / f);
    let den = f * x * x;
    num / den
}

/// Pauli error probability of the `n`-qubit depolarizing channel with transfer fidelity `f`.
pub fn depolarizing_epsilon_for_fidelity(n: usize, f: f64) -> f64 {
    let four_n = 4f64.powi(n as i32);
    (1.0 - f) * (four_n - 1.0) / four_n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::GateSpec;
    use crate::noise::make_depolarizing;
    use crate::pauli::Pauli;

    #[test]
    fn noiseless_channel_gives_point_mass() {
        let q = derive_qpr(&make_depolarizing(&[0], 0.0).unwrap(), 0).unwrap();
        assert_eq!(q.q, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(q.z, 1.0);
    }

    #[test]
    fn single_qubit_closed_form() {
        for eps in [0.03, 0.09, 0.25, 0.6] {
            let ch = make_depolarizing(&[0], eps).unwrap();
            let q = derive_qpr(&ch, 0).unwrap();
            let f = 1.0 - 4.0 * eps / 3.0;
            assert!((q.q[0] - (1.0 + 3.0 / f) / 4.0).abs() < 1e-12);
            for s in 1..4 {
                assert!((q.q[s] - (1.0 - 1.0 / f) / 4.0).abs() < 1e-12);
            }
            assert!((q.z - (3.0 / f - 1.0) / 2.0).abs() < 1e-12);
            assert!(q.reconstruction_residual(&ch) < 1e-12);
        }
    }

    #[test]
    fn two_qubit_reconstruction() {
        let ch = make_depolarizing(&[0, 1], 0.25).unwrap();
        let q = derive_qpr(&ch, 3).unwrap();
        assert_eq!(q.q.len(), 16);
        assert!((q.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.reconstruction_residual(&ch) < 1e-10);
        assert!(q.z >= 1.0);
    }

    #[test]
    fn singular_channel() {
        let ch = make_depolarizing(&[0], 0.75).unwrap();
        assert!(matches!(derive_qpr(&ch, 0), Err(Error::SingularChannel { .. })));
    }

    #[test]
    fn overhead_examples() {
        let q = derive_qpr(&make_depolarizing(&[0], 0.09).unwrap(), 0).unwrap();
        let z = sampling_overhead(&[q.clone(), q]);
        assert!((z - ((3.0 / 0.88 - 1.0) / 2.0f64).powi(2)).abs() < 1e-12);
        assert!((z - 1.45093).abs() < 1e-5);
        let mut last = 1.0;
        for k in 0..30 {
            let z = derive_qpr(&make_depolarizing(&[0, 1], k as f64 * 0.02).unwrap(), 0).unwrap().z;
            assert!(z >= last - 1e-12);
            last = z;
        }
    }

    #[test]
    fn closed_form_matches_linear_solve() {
        for n in 1..=2usize {
            let support: Vec<usize> = (0..n).collect();
            for f in [0.97, 0.88, 0.6] {
                let eps = depolarizing_epsilon_for_fidelity(n, f);
                let q = derive_qpr(&make_depolarizing(&support, eps).unwrap(), 0).unwrap();
                for d in [1usize, 3] {
                    let gamma = 1.0 - f.powi(d as i32);
                    let k = depolarizing_constants(n, gamma, d).unwrap();
                    assert!((k.z_d - q.z).abs() < 1e-9);
                    assert!((k.p_d0 - q.p_identity()).abs() < 1e-9);
                    assert!((k.z_d * k.z_d * k.p_d0 - c1_factor_ratio(n, gamma, d)).abs() < 1e-9);
                }
            }
        }
        let k = depolarizing_constants(2, 0.0, 4).unwrap();
        assert_eq!((k.z_d, k.c1, k.c2), (1.0, 1.0, 1.0));
        assert!(matches!(depolarizing_constants(1, 1.0, 1), Err(Error::BadGamma(_))));
    }

    #[test]
    fn sampler_signs_and_identity_batches() {
        let c = Circuit::new(
            1,
            vec![GateSpec::rotation(PauliString::new(vec![Pauli::Y]), 0, vec![0]).with_noise(true)],
        )
        .unwrap();
        let quiet = ChannelMap::depolarizing(&c, 0.0).unwrap();
        let qprs = derive_all(&c, &quiet).unwrap();
        let batch = sample_circuits(&qprs, 50, &mut stream(1, &[]));
        assert!(batch.signs.iter().all(|&s| s == 1));
        assert!(batch.indices.iter().all(|r| r[0].is_identity()));

        let noisy = ChannelMap::depolarizing(&c, 0.25).unwrap();
        let qprs = derive_all(&c, &noisy).unwrap();
        let batch = sample_circuits(&qprs, 20, &mut stream(3, &[]));
        for (row, s) in batch.indices.iter().zip(&batch.signs) {
            assert_eq!(*s, qprs[0].signs[row[0].index()]);
        }
        let mut csv = Vec::new();
        batch.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 21);
    }

    /// Full sum over all correction strings; feasible only for tiny circuits.
    fn exhaustive(c: &Circuit, theta: &[f64], h: &Observable, channels: &ChannelMap) -> f64 {
        let qprs = derive_all(c, channels).unwrap();
        let sizes: Vec<usize> = qprs.iter().map(|q| q.q.len()).collect();
        let total: usize = sizes.iter().product();
        let mut acc = 0.0;
        for mut code in 0..total {
            let mut weight = 1.0;
            let mut ins = Vec::new();
            for q in &qprs {
                let s = code % q.q.len();
                code /= q.q.len();
                weight *= q.q[s];
                ins.push(PauliString::from_index(s, q.n_qubits));
            }
            acc += weight * expectation(&evolve(c, theta, Some(channels), Some(&ins)), h).unwrap();
        }
        acc
    }

    #[test]
    fn exhaustive_sum_recovers_ideal() {
        let c = Circuit::new(
            1,
            vec![GateSpec::rotation(PauliString::new(vec![Pauli::Y]), 0, vec![0]).with_noise(true)],
        )
        .unwrap();
        let h = Observable::from_diagonal(1, &[1.0, -1.0]).unwrap();
        let ch = ChannelMap::depolarizing(&c, 0.25).unwrap();
        for t in [0.3, 1.7] {
            assert!((exhaustive(&c, &[t], &h, &ch) - t.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_batch_is_the_noisy_estimator() {
        let c = crate::ansatz::build_hardware_efficient(2, 1, true).unwrap();
        let h = Observable::from_diagonal(2, &[1.0, -0.3, -0.3, 0.5]).unwrap();
        let ch = ChannelMap::depolarizing(&c, 0.2).unwrap();
        let theta = [0.4, 1.0, -0.6, 0.2];
        let batch = SampledCircuitBatch::unmitigated(&c, 3);
        let g = qem_gradient_on_batch(&c, &theta, &h, &batch, &ch, ShotMode::Exact, 0).unwrap();
        let want = crate::gradient::exact_gradient(&c, &h, &theta, Some(&ch)).unwrap();
        for (a, b) in g.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let e = qem_expectation(&c, &theta, &h, &batch, &ch, ShotMode::Exact, 0).unwrap();
        let noisy = crate::gradient::exact_loss(&c, &h, &theta, Some(&ch)).unwrap();
        assert!((e - noisy).abs() < 1e-12);
    }

    #[test]
    fn budget_rules() {
        assert_eq!(shots_per_circuit(400, 8, Budget::Strict).unwrap(), 50);
        assert!(matches!(
            shots_per_circuit(10240, 7, Budget::Strict),
            Err(Error::IndivisibleBudget { .. })
        ));
        assert_eq!(shots_per_circuit(10240, 7, Budget::Lenient).unwrap(), 1462);
        assert!(shots_per_circuit(4, 8, Budget::Lenient).is_err());
    }
}
