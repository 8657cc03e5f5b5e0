//! Pauli strings.
//!
//! A string on `m` qubits is stored with symbol `k` acting on (local) qubit
//! `k`. Its integer index is the base-4 number `Σ_k s_k 4^k` with
//! `I=0, X=1, Y=2, Z=3`, so qubit 0 is the least significant digit. The text
//! form is written most-significant qubit first, matching the Kronecker
//! order: `"XZ"` is `X ⊗ Z` with `Z` on qubit 0.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(i: usize) -> Pauli {
        Self::ALL[i & 3]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn matrix(self) -> ComplexMatrix {
        let m = match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -I, I, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        };
        ComplexMatrix::from_vec(2, 2, m.to_vec()).expect("2x2")
    }

    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase picked up by `P|b⟩ = ω(b) |b ⊕ flip⟩`.
    fn phase(self, bit: usize) -> Complex64 {
        match (self, bit) {
            (Pauli::Y, 0) => I,
            (Pauli::Y, _) => -I,
            (Pauli::Z, 1) => -ONE,
            _ => ONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(symbols: Vec<Pauli>) -> Self {
        Self(symbols)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// Builds the string with base-4 index `index` on `n` qubits.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|k| Pauli::from_index(index >> (2 * k))).collect())
    }

    /// All `4^n` strings ordered by index.
    pub fn all(n: usize) -> impl Iterator<Item = PauliString> {
        (0..1usize << (2 * n)).map(move |s| PauliString::from_index(s, n))
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .map(|(k, p)| p.index() << (2 * k))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Pauli] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I)
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Dense `2^n × 2^n` matrix of the tensor product.
    pub fn matrix(&self) -> ComplexMatrix {
        self.0
            .iter()
            .rev()
            .fold(ComplexMatrix::identity(1), |acc, p| acc.kron(&p.matrix()))
    }

    /// `+1` if the strings commute, `−1` otherwise.
    pub fn commutation_sign(&self, other: &PauliString) -> Result<i8> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(sign_unchecked(self, other))
    }

    pub(crate) fn flip_mask(&self, support: &[usize]) -> usize {
        self.0
            .iter()
            .zip(support)
            .filter(|(p, _)| p.flips())
            .fold(0, |acc, (_, &q)| acc | (1 << q))
    }

    /// Phase `ω(b)` of the string embedded on `support` for full basis index `b`.
    pub(crate) fn phase_on(&self, basis: usize, support: &[usize]) -> Complex64 {
        self.0
            .iter()
            .zip(support)
            .fold(ONE, |acc, (p, &q)| acc * p.phase((basis >> q) & 1))
    }
}

pub(crate) fn sign_unchecked(a: &PauliString, b: &PauliString) -> i8 {
    let anticommuting = a
        .0
        .iter()
        .zip(&b.0)
        .filter(|(x, y)| **x != Pauli::I && **y != Pauli::I && x != y)
        .count();
    if anticommuting % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Commutation sign of the strings with indices `a` and `b` on `m` qubits.
pub(crate) fn sign_by_index(a: usize, b: usize, m: usize) -> f64 {
    let mut parity = 0;
    for k in 0..m {
        let x = (a >> (2 * k)) & 3;
        let y = (b >> (2 * k)) & 3;
        if x != 0 && y != 0 && x != y {
            parity ^= 1;
        }
    }
    if parity == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn pauli_matrix(s: &PauliString) -> ComplexMatrix {
    s.matrix()
}

pub fn commutation_sign(a: &PauliString, b: &PauliString) -> Result<i8> {
    a.commutation_sign(b)
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.0.iter().rev() {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .rev()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                _ => Err(Error::InvalidPauli(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        if symbols.is_empty() {
            return Err(Error::InvalidPauli(s.to_string()));
        }
        Ok(Self(symbols))
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn single_qubit_matrices() {
        assert_eq!(ps("I").matrix(), ComplexMatrix::identity(2));
        assert_eq!(ps("Z").matrix(), ComplexMatrix::diagonal(&[ONE, -ONE]));
    }

    #[test]
    fn xz_is_kronecker_product_and_squares_to_identity() {
        let x = Pauli::X.matrix();
        let z = Pauli::Z.matrix();
        let xz = ps("XZ").matrix();
        assert_eq!(xz, x.kron(&z));
        // Z acts on qubit 0: |01⟩ (index 1) picks up −1 and is flipped to |11⟩.
        assert_eq!(xz[(3, 1)], -ONE);
        assert!(xz.matmul(&xz).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn index_roundtrip_and_order() {
        let s = ps("XZ");
        assert_eq!(s.symbols(), &[Pauli::Z, Pauli::X]);
        assert_eq!(s.index(), 3 + 4);
        assert_eq!(PauliString::from_index(7, 2), s);
        assert_eq!(s.to_string(), "XZ");
    }

    #[test]
    fn commutation_examples() {
        assert_eq!(ps("II").commutation_sign(&ps("XY")).unwrap(), 1);
        assert_eq!(ps("X").commutation_sign(&ps("Z")).unwrap(), -1);
        assert_eq!(ps("XZ").commutation_sign(&ps("ZZ")).unwrap(), -1);
        assert!(ps("X").commutation_sign(&ps("ZZ")).is_err());
    }

    #[test]
    fn commutation_sign_matches_matrices_exhaustively() {
        for n in 1..=2 {
            for a in PauliString::all(n) {
                for b in PauliString::all(n) {
                    let ma = a.matrix();
                    let mb = b.matrix();
                    let commute = ma.matmul(&mb).max_abs_diff(&mb.matmul(&ma)) < 1e-12;
                    let sign = a.commutation_sign(&b).unwrap();
                    assert_eq!(commute, sign == 1, "{a} {b}");
                    assert_eq!(sign as f64, sign_by_index(a.index(), b.index(), n));
                }
            }
        }
    }

    #[test]
    fn fast_action_matches_dense() {
        let support = [0usize, 1];
        for s in PauliString::all(2) {
            let m = s.matrix();
            let flip = s.flip_mask(&support);
            for b in 0..4 {
                let phase = s.phase_on(b, &support);
                assert!((m[(b ^ flip, b)] - phase).norm() < 1e-15, "{s} {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn every_string_squares_to_identity(n in 1usize..=4, seed in any::<u64>()) {
            let idx = (seed as usize) % (1 << (2 * n));
            let m = PauliString::from_index(idx, n).matrix();
            let eye = ComplexMatrix::identity(1 << n);
            prop_assert!(m.matmul(&m).max_abs_diff(&eye) < 1e-12);
        }
    }
}
