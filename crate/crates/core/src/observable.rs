//! Observables `H = Σ_y h_y Π_y`, exact expectations, measurement sampling,
//! and weighted max-cut Hamiltonians.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, MAX_QUBITS};
use crate::pauli::PauliString;
use crate::rng::{cumulative, sample_cdf};
use crate::state::DensityMatrix;

/// Eigenvalues closer than this are treated as one outcome.
pub const EIGEN_GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
enum Spectral {
    /// Computational-basis state `b` belongs to outcome `outcome[b]`.
    Diagonal { outcome: Vec<usize> },
    Projectors(Vec<ComplexMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    n_qubits: usize,
    eigenvalues: Vec<f64>,
    multiplicities: Vec<usize>,
    spectral: Spectral,
}

impl Observable {
    /// Observable diagonal in the computational basis with `values[b] = ⟨b|H|b⟩`.
    pub fn from_diagonal(n_qubits: usize, values: &[f64]) -> Result<Self> {
        check_dim(n_qubits, values.len())?;
        let (eigenvalues, labels) = group_values(values);
        let mut multiplicities = vec![0; eigenvalues.len()];
        for &y in &labels {
            multiplicities[y] += 1;
        }
        Ok(Self {
            n_qubits,
            eigenvalues,
            multiplicities,
            spectral: Spectral::Diagonal { outcome: labels },
        })
    }

    /// General Hermitian observable, eigendecomposed into projectors.
    pub fn from_hermitian(mat: &ComplexMatrix) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::BadShape(format!("{}x{} is not square", mat.rows(), mat.cols())));
        }
        let n_qubits = mat.rows().trailing_zeros() as usize;
        check_dim(n_qubits, mat.rows())?;
        let defect = mat.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidState(format!("observable hermiticity defect {defect:e}")));
        }
        let (vals, vecs) = mat.hermitian_eigen();
        let (eigenvalues, labels) = group_values(&vals);
        let dim = mat.rows();
        let mut projectors = vec![ComplexMatrix::zeros(dim, dim); eigenvalues.len()];
        let mut multiplicities = vec![0; eigenvalues.len()];
        for (v, &y) in vecs.iter().zip(&labels) {
            multiplicities[y] += 1;
            let p = &mut projectors[y];
            for r in 0..dim {
                for c in 0..dim {
                    p[(r, c)] += v[r] * v[c].conj();
                }
            }
        }
        Ok(Self {
            n_qubits,
            eigenvalues,
            multiplicities,
            spectral: Spectral::Projectors(projectors),
        })
    }

    /// `Σ_k c_k P_k`; takes the diagonal path when every string is built from I and Z.
    pub fn from_pauli_sum(n_qubits: usize, terms: &[(f64, PauliString)]) -> Result<Self> {
        let dim = 1usize << n_qubits;
        for (_, p) in terms {
            if p.len() != n_qubits {
                return Err(Error::LengthMismatch {
                    expected: n_qubits,
                    got: p.len(),
                });
            }
        }
        let diagonal = terms.iter().all(|(_, p)| {
            p.symbols()
                .iter()
                .all(|s| matches!(s, crate::pauli::Pauli::I | crate::pauli::Pauli::Z))
        });
        if diagonal {
            let values: Vec<f64> = (0..dim)
                .map(|b| {
                    terms
                        .iter()
                        .map(|(c, p)| {
                            let parity = p
                                .symbols()
                                .iter()
                                .enumerate()
                                .filter(|(q, s)| **s == crate::pauli::Pauli::Z && (b >> q) & 1 == 1)
                                .count();
                            if parity % 2 == 0 {
                                *c
                            } else {
                                -*c
                            }
                        })
                        .sum()
                })
                .collect();
            return Self::from_diagonal(n_qubits, &values);
        }
        let mut mat = ComplexMatrix::zeros(dim, dim);
        for (c, p) in terms {
            mat = mat.add(&p.matrix().scale(num_complex::Complex64::new(*c, 0.0)));
        }
        Self::from_hermitian(&mat)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Distinct eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of distinct eigenvalues `N_h`.
    pub fn n_distinct(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.spectral, Spectral::Diagonal { .. })
    }

    pub fn ground_value(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `‖H‖_∞ = max_y |h_y|`.
    pub fn inf_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|h| h.abs()).fold(0.0, f64::max)
    }

    /// `Σ_y |h_y|` over distinct eigenvalues.
    pub fn abs_eigen_sum(&self) -> f64 {
        self.eigenvalues.iter().map(|h| h.abs()).sum()
    }

    /// `Tr(H²) = Σ_y rank(Π_y) h_y²`.
    pub fn trace_h2(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .map(|(h, &k)| k as f64 * h * h)
            .sum()
    }

    /// Dense matrix `Σ_y h_y Π_y`.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let dim = 1usize << self.n_qubits;
        match &self.spectral {
            Spectral::Diagonal { outcome } => {
                let diag: Vec<_> = outcome
                    .iter()
                    .map(|&y| num_complex::Complex64::new(self.eigenvalues[y], 0.0))
                    .collect();
                ComplexMatrix::diagonal(&diag)
            }
            Spectral::Projectors(ps) => ps.iter().zip(&self.eigenvalues).fold(
                ComplexMatrix::zeros(dim, dim),
                |acc, (p, &h)| acc.add(&p.scale(num_complex::Complex64::new(h, 0.0))),
            ),
        }
    }

    /// Same observable forced onto the projector path.
    pub fn as_general(&self) -> Result<Self> {
        Self::from_hermitian(&self.to_matrix())
    }

    /// `c·H`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match &self.spectral {
            Spectral::Diagonal { outcome } => {
                let values: Vec<f64> = outcome.iter().map(|&y| c * self.eigenvalues[y]).collect();
                Self::from_diagonal(self.n_qubits, &values)
            }
            Spectral::Projectors(_) => {
                Self::from_hermitian(&self.to_matrix().scale(num_complex::Complex64::new(c, 0.0)))
            }
        }
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.n_qubits() != self.n_qubits {
            return Err(Error::DimMismatch {
                expected: 1 << self.n_qubits,
                got: rho.dim(),
            });
        }
        Ok(())
    }

    /// Raw `Tr(Π_y ρ)` without clamping.
    fn raw_distribution(&self, rho: &DensityMatrix) -> Vec<f64> {
        match &self.spectral {
            Spectral::Diagonal { outcome } => {
                let mut p = vec![0.0; self.eigenvalues.len()];
                for (b, &y) in outcome.iter().enumerate() {
                    p[y] += rho.matrix()[(b, b)].re;
                }
                p
            }
            Spectral::Projectors(ps) => ps
                .iter()
                .map(|proj| {
                    proj.as_slice()
                        .iter()
                        .zip(rho.matrix().as_slice())
                        .map(|(a, b)| (a.conj() * b).re)
                        .sum()
                })
                .collect(),
        }
    }
}

/// Groups values into ascending distinct levels; returns (levels, label per input).
fn group_values(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut levels: Vec<(f64, usize)> = Vec::new();
    let mut labels = vec![0; values.len()];
    let mut anchor = f64::NEG_INFINITY;
    for &i in &order {
        let v = values[i];
        if levels.is_empty() || v - anchor > EIGEN_GAP_TOL {
            levels.push((0.0, 0));
            anchor = v;
        }
        let last = levels.len() - 1;
        levels[last].0 += v;
        levels[last].1 += 1;
        labels[i] = last;
    }
    let means = levels.iter().map(|(s, k)| s / *k as f64).collect();
    (means, labels)
}

fn check_dim(n_qubits: usize, dim: usize) -> Result<()> {
    if n_qubits == 0 || dim != 1 << n_qubits {
        return Err(Error::BadShape(format!("dimension {dim} is not 2^n with n ≥ 1")));
    }
    if n_qubits > MAX_QUBITS {
        return Err(Error::TooManyQubits(n_qubits));
    }
    Ok(())
}

/// `Tr(Hρ) = Σ_y h_y Tr(Π_y ρ)`.
pub fn expectation(rho: &DensityMatrix, h: &Observable) -> Result<f64> {
    h.check_state(rho)?;
    Ok(h
        .raw_distribution(rho)
        .iter()
        .zip(&h.eigenvalues)
        .map(|(p, v)| p * v)
        .sum())
}

/// `p(y) = Tr(Π_y ρ)` with roundoff negatives clamped to zero.
pub fn outcome_distribution(rho: &DensityMatrix, h: &Observable) -> Result<Vec<f64>> {
    h.check_state(rho)?;
    Ok(h.raw_distribution(rho).into_iter().map(|p| p.max(0.0)).collect())
}

/// Mean of `shots` i.i.d. eigenvalue draws from the outcome distribution.
pub fn sample_mean<R: Rng + ?Sized>(rho: &DensityMatrix, h: &Observable, shots: usize, rng: &mut R) -> Result<f64> {
    if shots == 0 {
        return Err(Error::ZeroShots);
    }
    let pmf = outcome_distribution(rho, h)?;
    Ok(sample_mean_from_pmf(&pmf, h.eigenvalues(), shots, rng))
}

pub(crate) fn sample_mean_from_pmf<R: Rng + ?Sized>(pmf: &[f64], values: &[f64], shots: usize, rng: &mut R) -> f64 {
    let cdf = cumulative(pmf);
    let total: f64 = (0..shots).map(|_| values[sample_cdf(&cdf, rng)]).sum();
    total / shots as f64
}

/// Weighted graph for max-cut; `w` is symmetric and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxCutProblem {
    n: usize,
    w: Vec<f64>,
}

impl MaxCutProblem {
    /// Requires a symmetric, nonnegative matrix.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = check_square(rows)?;
        for i in 0..n {
            for j in 0..i {
                if (rows[i][j] - rows[j][i]).abs() > 1e-12 {
                    return Err(Error::Asymmetric(i, j));
                }
            }
        }
        Self::build(n, |i, j| rows[i][j])
    }

    /// Uses the diagonal and upper triangle, mirroring it into the lower one.
    pub fn from_upper(rows: &[Vec<f64>]) -> Result<Self> {
        let n = check_square(rows)?;
        Self::build(n, |i, j| if i <= j { rows[i][j] } else { rows[j][i] })
    }

    fn build(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let v = f(i, j);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config(format!("weight w[{i}][{j}] = {v} must be finite and ≥ 0")));
                }
                w.push(v);
            }
        }
        Ok(Self { n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Offset `c₀` in `C(x) = c₀ − ⟨x|H|x⟩/2`.
    pub fn cost_offset(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.weight(i, i);
            for j in i + 1..self.n {
                s += self.weight(i, j);
            }
        }
        s / 2.0
    }
}

fn check_square(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::BadShape("empty weight matrix".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::BadShape(format!("row {r} has {} entries, expected {n}", rows[r].len())));
    }
    Ok(n)
}

/// `C(x) = Σ_{i≠j} w_ij x_i (1−x_j) + Σ_i w_ii x_i`.
pub fn maxcut_cost(x: &[u8], p: &MaxCutProblem) -> Result<f64> {
    if x.len() != p.n {
        return Err(Error::LengthMismatch {
            expected: p.n,
            got: x.len(),
        });
    }
    let mut c = 0.0;
    for i in 0..p.n {
        let xi = x[i] as f64;
        c += p.weight(i, i) * xi;
        for j in 0..p.n {
            if i != j && p.weight(i, j) > 0.0 {
                c += p.weight(i, j) * xi * (1.0 - x[j] as f64);
            }
        }
    }
    Ok(c)
}

/// `H = Σ_i w_ii Z_i + Σ_{i<j} w_ij Z_i Z_j`, diagonal, with vertex `i` on qubit `i`.
pub fn maxcut_hamiltonian(p: &MaxCutProblem) -> Observable {
    let values: Vec<f64> = (0..1usize << p.n)
        .map(|b| {
            let z = |i: usize| if (b >> i) & 1 == 0 { 1.0 } else { -1.0 };
            let mut e = 0.0;
            for i in 0..p.n {
                e += p.weight(i, i) * z(i);
                for j in i + 1..p.n {
                    e += p.weight(i, j) * z(i) * z(j);
                }
            }
            e
        })
        .collect();
    Observable::from_diagonal(p.n, &values).expect("n checked at construction")
}

/// Reads `n` rows of `n` comma-separated reals.
pub fn read_weight_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    parse_weight_csv(&text)
}

pub fn parse_weight_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(ln, line)| {
            line.split(',')
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("line {}: '{}': {e}", ln + 1, cell.trim())))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_hardware_efficient, run_ideal, GateSpec, Circuit};
    use crate::pauli::Pauli;
    use crate::rng::stream;
    use num_complex::Complex64;

    fn z1() -> Observable {
        Observable::from_diagonal(1, &[1.0, -1.0]).unwrap()
    }

    fn ry_state(theta: f64) -> DensityMatrix {
        let c = Circuit::new(1, vec![GateSpec::rotation(PauliString::new(vec![Pauli::Y]), 0, vec![0])]).unwrap();
        run_ideal(&c, &[theta]).unwrap()
    }

    #[test]
    fn expectation_examples() {
        let zero = DensityMatrix::zero_state(1).unwrap();
        assert_eq!(expectation(&zero, &z1()).unwrap(), 1.0);
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(expectation(&mixed, &z1()).unwrap().abs() < 1e-15);
        assert_eq!(outcome_distribution(&mixed, &z1()).unwrap(), vec![0.5, 0.5]);
        for k in 0..20 {
            let t = -3.0 + 0.3 * k as f64;
            assert!((expectation(&ry_state(t), &z1()).unwrap() - t.cos()).abs() < 1e-14);
        }
        let two = DensityMatrix::zero_state(2).unwrap();
        assert!(matches!(expectation(&two, &z1()), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn zero_hamiltonian_has_one_level() {
        let p = MaxCutProblem::new(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let h = maxcut_hamiltonian(&p);
        assert_eq!(h.eigenvalues(), &[0.0]);
        assert_eq!(h.multiplicities(), &[8]);
    }

    #[test]
    fn cost_examples() {
        let p = MaxCutProblem::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(maxcut_cost(&[0, 0], &p).unwrap(), 0.0);
        assert_eq!(maxcut_cost(&[1, 0], &p).unwrap(), 1.0);
        assert!(maxcut_cost(&[1], &p).is_err());
    }

    #[test]
    fn cost_and_hamiltonian_are_affinely_related() {
        let rows = vec![
            vec![0.41, 0.44, 0.55],
            vec![0.44, 0.97, 0.22],
            vec![0.55, 0.22, 0.89],
        ];
        let p = MaxCutProblem::new(&rows).unwrap();
        let h = maxcut_hamiltonian(&p);
        let diag = h.to_matrix();
        for b in 0..8usize {
            let x: Vec<u8> = (0..3).map(|i| ((b >> i) & 1) as u8).collect();
            let c = maxcut_cost(&x, &p).unwrap();
            assert!((c - (p.cost_offset() - diag[(b, b)].re / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_and_projector_paths_agree() {
        let terms = vec![
            (0.7, "IZZ".parse().unwrap()),
            (-0.4, "ZIZ".parse().unwrap()),
            (0.25, "IIZ".parse().unwrap()),
        ];
        let h = Observable::from_pauli_sum(3, &terms).unwrap();
        assert!(h.is_diagonal());
        let g = h.as_general().unwrap();
        assert!(!g.is_diagonal());
        let c = build_hardware_efficient(3, 1, false).unwrap();
        let rho = run_ideal(&c, &[0.3, 1.1, -0.5, 2.0, 0.9, -1.7]).unwrap();
        assert!((expectation(&rho, &h).unwrap() - expectation(&rho, &g).unwrap()).abs() < 1e-10);
        let p1 = outcome_distribution(&rho, &h).unwrap();
        let p2 = outcome_distribution(&rho, &g).unwrap();
        assert_eq!(h.eigenvalues().len(), g.eigenvalues().len());
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((h.trace_h2() - g.trace_h2()).abs() < 1e-10);
    }

    #[test]
    fn projectors_resolve_identity() {
        let x: PauliString = "XX".parse().unwrap();
        let z: PauliString = "ZI".parse().unwrap();
        let h = Observable::from_pauli_sum(2, &[(1.0, x), (0.5, z)]).unwrap();
        if let Spectral::Projectors(ps) = &h.spectral {
            let sum = ps.iter().fold(ComplexMatrix::zeros(4, 4), |a, p| a.add(p));
            assert!(sum.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-10);
            for (i, a) in ps.iter().enumerate() {
                for (j, b) in ps.iter().enumerate() {
                    let want = if i == j { a.clone() } else { ComplexMatrix::zeros(4, 4) };
                    assert!(a.matmul(b).max_abs_diff(&want) < 1e-10);
                }
            }
        } else {
            panic!("expected projector path");
        }
    }

    #[test]
    fn sampling() {
        let zero = DensityMatrix::zero_state(1).unwrap();
        let mut rng = stream(1, &[]);
        assert_eq!(sample_mean(&zero, &z1(), 17, &mut rng).unwrap(), 1.0);
        assert!(matches!(sample_mean(&zero, &z1(), 0, &mut rng), Err(Error::ZeroShots)));
        let plus = ry_state(std::f64::consts::FRAC_PI_2);
        let m = sample_mean(&plus, &z1(), 1_000_000, &mut rng).unwrap();
        assert!(m.abs() < 0.004, "{m}");
        let a = sample_mean(&plus, &z1(), 100, &mut stream(9, &[1])).unwrap();
        let b = sample_mean(&plus, &z1(), 100, &mut stream(9, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_is_unbiased() {
        let rho = ry_state(1.0);
        let exact = expectation(&rho, &z1()).unwrap();
        let mut rng = stream(2, &[]);
        let reps = 10_000;
        let draws: Vec<f64> = (0..reps).map(|_| sample_mean(&rho, &z1(), 10, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((mean - exact).abs() < 3.0 * (var / reps as f64).sqrt());
    }

    #[test]
    fn grouping_and_norms() {
        let h = Observable::from_diagonal(2, &[1.0, 1.0 + 1e-12, -2.0, 0.5]).unwrap();
        assert_eq!(h.n_distinct(), 3);
        assert_eq!(h.inf_norm(), 2.0);
        assert!((h.trace_h2() - (2.0 + 4.0 + 0.25)).abs() < 1e-9);
        let hs = h.scaled(2.0).unwrap();
        assert_eq!(hs.ground_value(), -4.0);
        let y = Observable::from_hermitian(&Pauli::Y.matrix()).unwrap();
        assert_eq!(y.n_distinct(), 2);
        assert!((y.eigenvalues()[0] + 1.0).abs() < 1e-12);
        let rho = DensityMatrix::from_pure(&[
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2),
        ])
        .unwrap();
        assert!((expectation(&rho, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_matrix_validation_and_csv() {
        assert!(matches!(
            MaxCutProblem::new(&[vec![0.0, 1.0], vec![0.5, 0.0]]),
            Err(Error::Asymmetric(1, 0))
        ));
        let p = MaxCutProblem::from_upper(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(p.weight(1, 0), 1.0);
        assert!(MaxCutProblem::new(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        let rows = parse_weight_csv("# header\n0.1, 0.2\n0.2,0.3\n").unwrap();
        assert_eq!(rows, vec![vec![0.1, 0.2], vec![0.2, 0.3]]);
        assert!(parse_weight_csv("0.1,abc\n").is_err());
    }
}
