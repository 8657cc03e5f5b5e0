//! Density matrices on registers of up to [`MAX_QUBITS`] qubits.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_support, scatter, ComplexMatrix, MAX_QUBITS, ONE, ZERO};
use crate::pauli::PauliString;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = -1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// `|0…0⟩⟨0…0|`.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let dim = 1 << n_qubits;
        let mut mat = ComplexMatrix::zeros(dim, dim);
        mat[(0, 0)] = ONE;
        Ok(Self { n_qubits, mat })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let dim = 1 << n_qubits;
        let mat = ComplexMatrix::identity(dim).scale(Complex64::new(1.0 / dim as f64, 0.0));
        Ok(Self { n_qubits, mat })
    }

    /// `|ψ⟩⟨ψ|` for a normalised state vector.
    pub fn from_pure(psi: &[Complex64]) -> Result<Self> {
        let n_qubits = qubits_for_dim(psi.len())?;
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("state vector has norm² {norm}")));
        }
        let dim = psi.len();
        let mut mat = ComplexMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                mat[(r, c)] = psi[r] * psi[c].conj();
            }
        }
        Ok(Self { n_qubits, mat })
    }

    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn from_matrix(mat: ComplexMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::BadShape(format!("{}x{} is not square", mat.rows(), mat.cols())));
        }
        let n_qubits = qubits_for_dim(mat.rows())?;
        let rho = Self { n_qubits, mat };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(n_qubits: usize, mat: ComplexMatrix) -> Self {
        Self { n_qubits, mat }
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.mat.hermiticity_defect();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("hermiticity defect {herm:e}")));
        }
        let tr = self.mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_rc|² for Hermitian ρ.
        self.mat.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.mat.hermitian_eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Computational-basis populations `ρ_bb`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|b| self.mat[(b, b)].re).collect()
    }

    /// `U ρ U†` with `u` acting on `support`; validates `u` and `support`.
    pub fn apply_unitary(&self, u: &ComplexMatrix, support: &[usize]) -> Result<Self> {
        check_support(support, self.n_qubits)?;
        let local = 1usize << support.len();
        if u.rows() != local || u.cols() != local {
            return Err(Error::DimMismatch {
                expected: local,
                got: u.rows(),
            });
        }
        let defect = u.unitarity_defect();
        if defect > UNITARY_TOL {
            return Err(Error::NonUnitary { deviation: defect });
        }
        let mut out = self.clone();
        out.conjugate_in_place(u, support);
        Ok(out)
    }

    /// In-place `U ρ U†` without validation.
    pub(crate) fn conjugate_in_place(&mut self, u: &ComplexMatrix, support: &[usize]) {
        let dim = self.dim();
        let k = support.len();
        let local = 1usize << k;
        let offsets: Vec<usize> = (0..local).map(|l| scatter(l, support)).collect();
        let mask = offsets[local - 1];
        let bases: Vec<usize> = (0..dim).filter(|b| b & mask == 0).collect();
        let mut buf = vec![ZERO; local];
        let m = self.mat.as_mut_slice();

        // Rows: ρ ← U ρ.
        for c in 0..dim {
            for &base in &bases {
                for (l, &off) in offsets.iter().enumerate() {
                    buf[l] = m[(base | off) * dim + c];
                }
                for (l, &off) in offsets.iter().enumerate() {
                    let mut acc = ZERO;
                    for (j, &v) in buf.iter().enumerate() {
                        acc += u[(l, j)] * v;
                    }
                    m[(base | off) * dim + c] = acc;
                }
            }
        }
        // Columns: ρ ← ρ U†.
        for r in 0..dim {
            let row = &mut m[r * dim..(r + 1) * dim];
            for &base in &bases {
                for (l, &off) in offsets.iter().enumerate() {
                    buf[l] = row[base | off];
                }
                for (l, &off) in offsets.iter().enumerate() {
                    let mut acc = ZERO;
                    for (j, &v) in buf.iter().enumerate() {
                        acc += v * u[(l, j)].conj();
                    }
                    row[base | off] = acc;
                }
            }
        }
    }

    /// `P ρ P` for a Pauli string acting on `support`.
    pub(crate) fn pauli_conjugated(&self, p: &PauliString, support: &[usize]) -> ComplexMatrix {
        let dim = self.dim();
        let flip = p.flip_mask(support);
        let phases: Vec<Complex64> = (0..dim).map(|b| p.phase_on(b, support)).collect();
        let src = self.mat.as_slice();
        let mut out = ComplexMatrix::zeros(dim, dim);
        let dst = out.as_mut_slice();
        for a in 0..dim {
            let ra = (a ^ flip) * dim;
            let pa = phases[a];
            for b in 0..dim {
                dst[ra + (b ^ flip)] = pa * src[a * dim + b] * phases[b].conj();
            }
        }
        out
    }

    pub(crate) fn pauli_conjugate_in_place(&mut self, p: &PauliString, support: &[usize]) {
        if p.is_identity() {
            return;
        }
        self.mat = self.pauli_conjugated(p, support);
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut ComplexMatrix {
        &mut self.mat
    }
}

/// Free-function form of [`DensityMatrix::apply_unitary`].
pub fn apply_unitary(rho: &DensityMatrix, u: &ComplexMatrix, support: &[usize]) -> Result<DensityMatrix> {
    rho.apply_unitary(u, support)
}

fn check_register(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::BadShape("register needs at least one qubit".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    Ok(())
}

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::BadShape(format!("dimension {dim} is not 2^n with n ≥ 1")));
    }
    let n = dim.trailing_zeros() as usize;
    check_register(n)?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    fn ry(theta: f64) -> ComplexMatrix {
        let (s, c) = (theta / 2.0).sin_cos();
        ComplexMatrix::from_real(2, 2, &[c, -s, s, c]).unwrap()
    }

    fn cnot() -> ComplexMatrix {
        // control = local qubit 0, target = local qubit 1
        let mut m = ComplexMatrix::zeros(4, 4);
        for (r, c) in [(0, 0), (3, 1), (2, 2), (1, 3)] {
            m[(r, c)] = ONE;
        }
        m
    }

    fn z_expectation(rho: &DensityMatrix, q: usize) -> f64 {
        rho.diagonal()
            .iter()
            .enumerate()
            .map(|(b, p)| if (b >> q) & 1 == 0 { *p } else { -*p })
            .sum()
    }

    fn random_unitary(dim: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = g.qr().q();
        let data = (0..dim * dim).map(|i| q[(i / dim, i % dim)]).collect();
        ComplexMatrix::from_vec(dim, dim, data).unwrap()
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let dim = 1 << n;
        let a = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let p = &a * a.adjoint();
        let tr = p.trace();
        let p = p / tr;
        let data = (0..dim * dim).map(|i| p[(i / dim, i % dim)]).collect();
        DensityMatrix::from_matrix(ComplexMatrix::from_vec(dim, dim, data).unwrap()).unwrap()
    }

    #[test]
    fn x_flips_zero() {
        let rho = DensityMatrix::zero_state(1).unwrap();
        let out = rho.apply_unitary(&Pauli::X.matrix(), &[0]).unwrap();
        assert!((out.matrix()[(1, 1)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ry_half_pi_has_zero_z() {
        let rho = DensityMatrix::zero_state(1).unwrap();
        let out = rho.apply_unitary(&ry(std::f64::consts::FRAC_PI_2), &[0]).unwrap();
        assert!(z_expectation(&out, 0).abs() < 1e-15);
    }

    #[test]
    fn cnot_fixes_zero_and_entangles_plus() {
        let rho = DensityMatrix::zero_state(2).unwrap();
        assert_eq!(rho.apply_unitary(&cnot(), &[0, 1]).unwrap(), rho);
        let plus = rho.apply_unitary(&ry(std::f64::consts::FRAC_PI_2), &[0]).unwrap();
        let bell = plus.apply_unitary(&cnot(), &[0, 1]).unwrap();
        assert!((bell.matrix()[(0, 3)].re - 0.5).abs() < 1e-12);
        assert!((bell.matrix()[(3, 3)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rho = DensityMatrix::zero_state(2).unwrap();
        let not_unitary = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(rho.apply_unitary(&not_unitary, &[0]), Err(Error::NonUnitary { .. })));
        assert!(matches!(rho.apply_unitary(&cnot(), &[0, 0]), Err(Error::BadSupport { .. })));
        assert!(matches!(rho.apply_unitary(&ry(0.3), &[2]), Err(Error::BadSupport { .. })));
        assert!(matches!(DensityMatrix::zero_state(11), Err(Error::TooManyQubits(11))));
    }

    #[test]
    fn embedded_conjugation_matches_dense_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_state(3, &mut rng);
        let u = random_unitary(4, &mut rng);
        // support [2, 0]: local bit 0 -> qubit 2, local bit 1 -> qubit 0.
        let out = rho.apply_unitary(&u, &[2, 0]).unwrap();
        // Dense oracle: build the 8x8 operator element by element.
        let mut full = ComplexMatrix::zeros(8, 8);
        for r in 0..8usize {
            for c in 0..8usize {
                if (r >> 1) & 1 != (c >> 1) & 1 {
                    continue;
                }
                let lr = ((r >> 2) & 1) | ((r & 1) << 1);
                let lc = ((c >> 2) & 1) | ((c & 1) << 1);
                full[(r, c)] = u[(lr, lc)];
            }
        }
        let expected = full.matmul(rho.matrix()).matmul(&full.adjoint());
        assert!(out.matrix().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn pauli_fast_path_matches_unitary_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_state(3, &mut rng);
        for s in PauliString::all(2) {
            let fast = rho.pauli_conjugated(&s, &[1, 2]);
            let slow = rho.apply_unitary(&s.matrix(), &[1, 2]).unwrap();
            assert!(fast.max_abs_diff(slow.matrix()) < 1e-12, "{s}");
        }
    }

    proptest! {
        #[test]
        fn unitary_evolution_keeps_state_valid(seed in any::<u64>(), q0 in 0usize..3, q1 in 0usize..3) {
            prop_assume!(q0 != q1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_state(3, &mut rng);
            let u = random_unitary(4, &mut rng);
            let out = rho.apply_unitary(&u, &[q0, q1]).unwrap();
            prop_assert!((out.trace() - 1.0).abs() < 1e-10);
            prop_assert!(out.min_eigenvalue() > -1e-10);
            prop_assert!(out.matrix().hermiticity_defect() < 1e-10);
        }
    }
}
