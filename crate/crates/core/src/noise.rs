//! Pauli noise channels, their transfer-matrix diagonals, and the split of a
//! noisy state into an error-free branch plus an error density.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_support, ComplexMatrix};
use crate::pauli::{sign_by_index, PauliString};
use crate::state::DensityMatrix;

const WEIGHT_SUM_TOL: f64 = 1e-12;
pub const ERROR_DENSITY_PSD_TOL: f64 = -1e-8;

/// `ρ ↦ (1−ε)ρ + ε Σ_j p_j E_j ρ E_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelSpec", into = "ChannelSpec")]
pub struct PauliChannel {
    support: Vec<usize>,
    epsilon: f64,
    errors: Vec<(PauliString, f64)>,
}

impl PauliChannel {
    pub fn new(support: Vec<usize>, epsilon: f64, errors: Vec<(PauliString, f64)>) -> Result<Self> {
        check_epsilon(epsilon)?;
        let m = support.len();
        if m == 0 {
            return Err(Error::InvalidChannel("empty support".into()));
        }
        if errors.is_empty() {
            return Err(Error::InvalidChannel("no error terms".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (s, p) in &errors {
            if s.len() != m {
                return Err(Error::LengthMismatch {
                    expected: m,
                    got: s.len(),
                });
            }
            if s.is_identity() {
                return Err(Error::InvalidChannel("identity listed as an error".into()));
            }
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::InvalidChannel(format!("weight {p} for {s}")));
            }
            if !seen.insert(s.index()) {
                return Err(Error::InvalidChannel(format!("duplicate error {s}")));
            }
        }
        let total: f64 = errors.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidChannel(format!("error weights sum to {total}")));
        }
        Ok(Self {
            support,
            epsilon,
            errors,
        })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn errors(&self) -> &[(PauliString, f64)] {
        &self.errors
    }

    pub fn n_qubits(&self) -> usize {
        self.support.len()
    }

    /// Same error model on a different set of qubits.
    pub fn relocated(&self, support: Vec<usize>) -> Result<Self> {
        if support.len() != self.support.len() {
            return Err(Error::LengthMismatch {
                expected: self.support.len(),
                got: support.len(),
            });
        }
        Ok(Self {
            support,
            ..self.clone()
        })
    }

    pub fn ptm(&self) -> ChannelPtm {
        ptm(self)
    }
}

/// All `4^m − 1` non-identity strings with equal weight.
pub fn make_depolarizing(support: &[usize], epsilon: f64) -> Result<PauliChannel> {
    check_epsilon(epsilon)?;
    let m = support.len();
    if m == 0 {
        return Err(Error::InvalidChannel("empty support".into()));
    }
    let count = (1usize << (2 * m)) - 1;
    let w = 1.0 / count as f64;
    let errors = PauliString::all(m).skip(1).map(|s| (s, w)).collect();
    PauliChannel::new(support.to_vec(), epsilon, errors)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::BadEpsilon(epsilon));
    }
    Ok(())
}

/// Diagonal of a Pauli channel's transfer matrix, indexed by Pauli string index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPtm {
    pub n_qubits: usize,
    pub diag: Vec<f64>,
}

impl ChannelPtm {
    pub fn identity(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            diag: vec![1.0; 1 << (2 * n_qubits)],
        }
    }

    /// Entrywise product, i.e. composition of two diagonal channels.
    pub fn compose(&self, other: &ChannelPtm) -> ChannelPtm {
        ChannelPtm {
            n_qubits: self.n_qubits,
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn get(&self, s: &PauliString) -> f64 {
        self.diag[s.index()]
    }
}

/// `f_r = (1−ε) + ε Σ_j p_j sign(E_j, r)`.
pub fn ptm(ch: &PauliChannel) -> ChannelPtm {
    let m = ch.n_qubits();
    let diag = (0..1usize << (2 * m))
        .map(|r| {
            let mix: f64 = ch
                .errors
                .iter()
                .map(|(e, p)| p * sign_by_index(e.index(), r, m))
                .sum();
            (1.0 - ch.epsilon) + ch.epsilon * mix
        })
        .collect();
    ChannelPtm { n_qubits: m, diag }
}

pub fn apply_channel(rho: &DensityMatrix, ch: &PauliChannel) -> Result<DensityMatrix> {
    check_support(&ch.support, rho.n_qubits())?;
    let mut out = rho.clone();
    apply_channel_in_place(&mut out, ch);
    Ok(out)
}

pub(crate) fn apply_channel_in_place(rho: &mut DensityMatrix, ch: &PauliChannel) {
    if ch.epsilon == 0.0 {
        return;
    }
    let dim = rho.dim();
    let mut acc = rho.matrix().scale(Complex64::new(1.0 - ch.epsilon, 0.0));
    for (e, p) in &ch.errors {
        let term = rho.pauli_conjugated(e, &ch.support);
        let w = ch.epsilon * p;
        for (a, t) in acc.as_mut_slice().iter_mut().zip(term.as_slice()) {
            *a += t * w;
        }
    }
    debug_assert_eq!(acc.rows(), dim);
    *rho.matrix_mut() = acc;
}

/// Probability that at least one of `d_noisy` gates errs: `1 − (1−ε)^d`.
pub fn gamma(epsilon: f64, d_noisy: usize) -> f64 {
    1.0 - (1.0 - epsilon).powi(d_noisy as i32)
}

/// `ρ̃ = (ρ^ε − (1−γ)Ψ)/γ`, checked to be a valid state.
pub fn error_density(rho_noisy: &DensityMatrix, rho_ideal: &DensityMatrix, gamma: f64) -> Result<DensityMatrix> {
    if gamma == 0.0 {
        return Err(Error::ZeroGamma);
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::BadGamma(gamma));
    }
    if rho_noisy.dim() != rho_ideal.dim() {
        return Err(Error::DimMismatch {
            expected: rho_noisy.dim(),
            got: rho_ideal.dim(),
        });
    }
    let diff = rho_noisy
        .matrix()
        .sub(&rho_ideal.matrix().scale(Complex64::new(1.0 - gamma, 0.0)))
        .scale(Complex64::new(1.0 / gamma, 0.0));
    let out = DensityMatrix::from_matrix_unchecked(rho_noisy.n_qubits(), diff);
    let min = out.min_eigenvalue();
    if min < ERROR_DENSITY_PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(out)
}

/// `⟨Ψ|ρ|Ψ⟩ = Tr(Ψρ)` for a pure reference state.
pub fn fidelity(rho: &DensityMatrix, pure: &DensityMatrix) -> Result<f64> {
    let purity = pure.purity();
    if (purity - 1.0).abs() > 1e-9 {
        return Err(Error::NotPure { purity });
    }
    if rho.dim() != pure.dim() {
        return Err(Error::DimMismatch {
            expected: pure.dim(),
            got: rho.dim(),
        });
    }
    let a = rho.matrix().as_slice();
    let b = pure.matrix().as_slice();
    // Tr(AB) = Σ_rc A_rc B_cr = Σ_rc A_rc conj(B_rc) for Hermitian B.
    let f: f64 = a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Brute-force PTM diagonal `Tr(P_r ℰ(P_r))/2^m` on an isolated m-qubit register.
pub fn ptm_by_superoperator(ch: &PauliChannel) -> Vec<f64> {
    let m = ch.n_qubits();
    let local: Vec<usize> = (0..m).collect();
    let local_ch = ch.relocated(local.clone()).expect("same size");
    let dim = 1usize << m;
    PauliString::all(m)
        .map(|r| {
            let pr = r.matrix();
            let rho = DensityMatrix::from_matrix_unchecked(m, pr.clone());
            let mut image = rho.clone();
            apply_channel_in_place(&mut image, &local_ch);
            pr.matmul(image.matrix()).trace().re / dim as f64
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ChannelModel {
    Depolarizing,
    Explicit,
}

#[derive(Serialize, Deserialize)]
struct ChannelSpec {
    support: Vec<usize>,
    epsilon: f64,
    model: ChannelModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    errors: Vec<(PauliString, f64)>,
}

impl TryFrom<ChannelSpec> for PauliChannel {
    type Error = Error;

    fn try_from(spec: ChannelSpec) -> Result<Self> {
        match spec.model {
            ChannelModel::Depolarizing => make_depolarizing(&spec.support, spec.epsilon),
            ChannelModel::Explicit => PauliChannel::new(spec.support, spec.epsilon, spec.errors),
        }
    }
}

impl From<PauliChannel> for ChannelSpec {
    fn from(ch: PauliChannel) -> Self {
        ChannelSpec {
            support: ch.support,
            epsilon: ch.epsilon,
            model: ChannelModel::Explicit,
            errors: ch.errors,
        }
    }
}

/// Dense helper used by tests and the wasm demo: Bloch-style PTM matrix
/// `R_rs = Tr(P_r ℰ(P_s))/2^m` for an arbitrary map on `m` qubits.
pub fn ptm_matrix<F>(m: usize, map: F) -> Vec<Vec<f64>>
where
    F: Fn(&ComplexMatrix) -> ComplexMatrix,
{
    let dim = 1usize << m;
    let paulis: Vec<ComplexMatrix> = PauliString::all(m).map(|s| s.matrix()).collect();
    paulis
        .iter()
        .map(|pr| {
            paulis
                .iter()
                .map(|ps| pr.matmul(&map(ps)).trace().re / dim as f64)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn depolarizing_ptm_single_qubit() {
        let ch = make_depolarizing(&[0], 0.0).unwrap();
        assert_eq!(ptm(&ch).diag, vec![1.0; 4]);
        let ch = make_depolarizing(&[0], 0.09).unwrap();
        for (r, f) in ptm(&ch).diag.iter().enumerate() {
            let want = if r == 0 { 1.0 } else { 1.0 - 4.0 * 0.09 / 3.0 };
            assert!((f - want).abs() < 1e-15);
        }
        assert!((ptm(&ch).diag[1] - 0.88).abs() < 1e-12);
    }

    #[test]
    fn two_qubit_depolarizing_has_fifteen_equal_errors() {
        let ch = make_depolarizing(&[0, 1], 0.2).unwrap();
        assert_eq!(ch.errors().len(), 15);
        assert!(ch.errors().iter().all(|(_, p)| (p - 1.0 / 15.0).abs() < 1e-15));
    }

    #[test]
    fn bit_flip_ptm() {
        let eps = 0.3;
        let ch = PauliChannel::new(vec![0], eps, vec![(ps("X"), 1.0)]).unwrap();
        let f = ptm(&ch).diag;
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 1.0);
        assert!((f[2] - (1.0 - 2.0 * eps)).abs() < 1e-15);
        assert!((f[3] - (1.0 - 2.0 * eps)).abs() < 1e-15);
    }

    #[test]
    fn channel_validation() {
        assert!(matches!(make_depolarizing(&[0], 1.5), Err(Error::BadEpsilon(_))));
        assert!(PauliChannel::new(vec![0], 0.1, vec![(ps("I"), 1.0)]).is_err());
        assert!(PauliChannel::new(vec![0], 0.1, vec![(ps("X"), 0.5)]).is_err());
        assert!(PauliChannel::new(vec![0], 0.1, vec![(ps("X"), 0.5), (ps("X"), 0.5)]).is_err());
        let rho = DensityMatrix::zero_state(1).unwrap();
        let far = make_depolarizing(&[3], 0.1).unwrap();
        assert!(matches!(apply_channel(&rho, &far), Err(Error::BadSupport { .. })));
    }

    #[test]
    fn full_depolarizing_erases_bloch_vector() {
        let rho = DensityMatrix::zero_state(1).unwrap();
        let out = apply_channel(&rho, &make_depolarizing(&[0], 0.75).unwrap()).unwrap();
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(out.matrix().max_abs_diff(mixed.matrix()) < 1e-15);
    }

    #[test]
    fn ptm_agrees_with_superoperator() {
        let chans = [
            make_depolarizing(&[0], 0.17).unwrap(),
            make_depolarizing(&[0, 1], 0.25).unwrap(),
            PauliChannel::new(vec![0, 1], 0.4, vec![(ps("XZ"), 0.25), (ps("YI"), 0.5), (ps("ZZ"), 0.25)]).unwrap(),
        ];
        for ch in &chans {
            let fast = ptm(ch).diag;
            let slow = ptm_by_superoperator(ch);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ptm_matrix_of_pauli_channel_is_diagonal() {
        let ch = make_depolarizing(&[0], 0.2).unwrap();
        let r = ptm_matrix(1, |m| {
            let rho = DensityMatrix::from_matrix_unchecked(1, m.clone());
            let mut out = rho;
            apply_channel_in_place(&mut out, &ch);
            out.into_matrix()
        });
        for (i, row) in r.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    assert!(v.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn depolarizing_composition_multiplies_ptm() {
        let c1 = make_depolarizing(&[0], 0.1).unwrap();
        let c2 = make_depolarizing(&[0], 0.3).unwrap();
        let rho = DensityMatrix::from_pure(&[
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
        ])
        .unwrap();
        let out = apply_channel(&apply_channel(&rho, &c1).unwrap(), &c2).unwrap();
        let f = ptm(&c1).compose(&ptm(&c2)).diag[3];
        let z_in = rho.diagonal()[0] - rho.diagonal()[1];
        let z_out = out.diagonal()[0] - out.diagonal()[1];
        assert!((z_out - f * z_in).abs() < 1e-14);
    }

    #[test]
    fn gamma_examples_and_monotonicity() {
        assert_eq!(gamma(0.0, 5), 0.0);
        assert_eq!(gamma(1.0, 3), 1.0);
        assert!((gamma(0.09, 2) - 0.1719).abs() < 1e-12);
        for d in 0..6 {
            for i in 0..20 {
                let e = i as f64 / 20.0;
                assert!(gamma(e + 0.05, d) >= gamma(e, d));
                assert!(gamma(e, d + 1) >= gamma(e, d));
            }
        }
    }

    #[test]
    fn error_density_inverts_known_mixture() {
        let psi = DensityMatrix::zero_state(1).unwrap();
        let sigma = DensityMatrix::from_matrix(
            ComplexMatrix::from_real(2, 2, &[0.3, 0.1, 0.1, 0.7]).unwrap(),
        )
        .unwrap();
        let g = 0.4;
        let mixed = psi
            .matrix()
            .scale(Complex64::new(1.0 - g, 0.0))
            .add(&sigma.matrix().scale(Complex64::new(g, 0.0)));
        let noisy = DensityMatrix::from_matrix(mixed).unwrap();
        let back = error_density(&noisy, &psi, g).unwrap();
        assert!(back.matrix().max_abs_diff(sigma.matrix()) < 1e-10);
        assert!(matches!(error_density(&noisy, &psi, 0.0), Err(Error::ZeroGamma)));
    }

    #[test]
    fn fidelity_examples() {
        let psi = DensityMatrix::zero_state(1).unwrap();
        assert!((fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert!((fidelity(&mixed, &psi).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(fidelity(&psi, &mixed), Err(Error::NotPure { .. })));
    }

    #[test]
    fn serde_roundtrip() {
        let json = r#"{"support":[0,1],"epsilon":0.25,"model":"depolarizing"}"#;
        let ch: PauliChannel = serde_json::from_str(json).unwrap();
        assert_eq!(ch, make_depolarizing(&[0, 1], 0.25).unwrap());
        let back: PauliChannel = serde_json::from_str(&serde_json::to_string(&ch).unwrap()).unwrap();
        assert_eq!(back, ch);
    }

    proptest! {
        #[test]
        fn channels_preserve_state_validity(
            eps in 0.0f64..=1.0,
            weights in proptest::collection::vec(0.01f64..1.0, 3),
            theta in 0.0f64..6.0,
            phi in 0.0f64..6.0,
        ) {
            let total: f64 = weights.iter().sum();
            let errors = [Pauli::X, Pauli::Y, Pauli::Z]
                .iter()
                .zip(&weights)
                .map(|(p, w)| (PauliString::new(vec![*p]), w / total))
                .collect();
            let ch = PauliChannel::new(vec![1], eps, errors).unwrap();
            let a = Complex64::new((theta / 2.0).cos(), 0.0);
            let b = Complex64::from_polar((theta / 2.0).sin(), phi);
            let zero = Complex64::new(0.0, 0.0);
            let rho = DensityMatrix::from_pure(&[a, zero, b, zero]).unwrap();
            let out = apply_channel(&rho, &ch).unwrap();
            prop_assert!((out.trace() - 1.0).abs() < 1e-12);
            prop_assert!(out.matrix().hermiticity_defect() < 1e-12);
            prop_assert!(out.min_eigenvalue() > -1e-10);
        }
    }
}
