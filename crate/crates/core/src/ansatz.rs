//! Parameterized circuits and their evolution with and without gate noise.
//!
//! A circuit is an ordered gate list. Rotation gates `exp(−iθ_d G/2)` read
//! parameter `d`; fixed gates carry a unitary. Any gate may be flagged noisy,
//! in which case a Pauli channel acts right after it.
//!
//! JSON form, either shorthand for the hardware-efficient layout
//!
//! ```json
//! {"n_qubits": 3, "layers": 1, "noise_mode": "cnots"}
//! ```
//!
//! or an explicit gate list
//!
//! ```json
//! {"n_qubits": 2, "gates": [
//!   {"kind": "rotation", "generator": "Y", "param": 0, "support": [0]},
//!   {"kind": "fixed", "name": "cnot", "support": [0, 1], "noisy": true}
//! ]}
//! ```
//!
//! Two-qubit fixed gates use local qubit order: `support[0]` is the least
//! significant local bit (the control for `cnot`).

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_support, ComplexMatrix, I, MAX_QUBITS, ONE, ZERO};
use crate::noise::{apply_channel_in_place, make_depolarizing, PauliChannel};
use crate::pauli::PauliString;
use crate::state::{DensityMatrix, UNITARY_TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    Rotation { generator: PauliString, param: usize },
    Fixed { name: String, unitary: ComplexMatrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub support: Vec<usize>,
    pub noisy: bool,
}

impl GateSpec {
    pub fn rotation(generator: PauliString, param: usize, support: Vec<usize>) -> Self {
        Self {
            kind: GateKind::Rotation { generator, param },
            support,
            noisy: false,
        }
    }

    pub fn fixed(name: &str, support: Vec<usize>) -> Result<Self> {
        Ok(Self {
            kind: GateKind::Fixed {
                name: name.to_string(),
                unitary: named_gate(name)?,
            },
            support,
            noisy: false,
        })
    }

    pub fn with_noise(mut self, noisy: bool) -> Self {
        self.noisy = noisy;
        self
    }

    pub fn param(&self) -> Option<usize> {
        match &self.kind {
            GateKind::Rotation { param, .. } => Some(*param),
            GateKind::Fixed { .. } => None,
        }
    }

    fn unitary(&self, theta: &[f64]) -> ComplexMatrix {
        match &self.kind {
            GateKind::Rotation { generator, param } => rotation_unitary(theta[*param], generator),
            GateKind::Fixed { unitary, .. } => unitary.clone(),
        }
    }
}

/// Where gate noise is attached in a generated ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// No gate is noisy.
    None,
    /// Only the entangling CNOTs are noisy.
    #[default]
    Cnots,
    /// Every parameterized rotation is noisy.
    Parameterized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitDoc", into = "CircuitDoc")]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<GateSpec>,
    n_params: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<GateSpec>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::BadShape("circuit needs at least one qubit".into()));
        }
        if n_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(n_qubits));
        }
        let mut max_param: Option<usize> = None;
        for g in &gates {
            check_support(&g.support, n_qubits)?;
            match &g.kind {
                GateKind::Rotation { generator, param } => {
                    if generator.len() != g.support.len() {
                        return Err(Error::LengthMismatch {
                            expected: g.support.len(),
                            got: generator.len(),
                        });
                    }
                    max_param = Some(max_param.map_or(*param, |m| m.max(*param)));
                }
                GateKind::Fixed { name, unitary } => {
                    let local = 1 << g.support.len();
                    if unitary.rows() != local || unitary.cols() != local {
                        return Err(Error::BadShape(format!(
                            "gate {name} is {}x{} on {} qubits",
                            unitary.rows(),
                            unitary.cols(),
                            g.support.len()
                        )));
                    }
                    let defect = unitary.unitarity_defect();
                    if defect > UNITARY_TOL {
                        return Err(Error::NonUnitary { deviation: defect });
                    }
                }
            }
        }
        let n_params = max_param.map_or(0, |m| m + 1);
        for d in 0..n_params {
            if !gates.iter().any(|g| g.param() == Some(d)) {
                return Err(Error::BadShape(format!("parameter {d} is not used by any gate")));
            }
        }
        Ok(Self {
            n_qubits,
            gates,
            n_params,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    /// Number of parameters `D`.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn noisy_gate_indices(&self) -> Vec<usize> {
        (0..self.gates.len()).filter(|&i| self.gates[i].noisy).collect()
    }

    pub fn n_noisy(&self) -> usize {
        self.gates.iter().filter(|g| g.noisy).count()
    }

    pub fn count_fixed(&self, name: &str) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(&g.kind, GateKind::Fixed { name: n, .. } if n == name))
            .count()
    }

    /// Whether each parameter drives exactly one gate, which the two-term
    /// shift rule needs.
    pub fn params_used_once(&self) -> bool {
        (0..self.n_params).all(|d| self.gates.iter().filter(|g| g.param() == Some(d)).count() == 1)
    }

    /// Same gates with the noisy flags replaced according to `mode`.
    pub fn with_noise_mode(&self, mode: NoiseMode) -> Self {
        let gates = self
            .gates
            .iter()
            .cloned()
            .map(|g| {
                let noisy = match mode {
                    NoiseMode::None => false,
                    NoiseMode::Cnots => matches!(&g.kind, GateKind::Fixed { name, .. } if name == "cnot"),
                    NoiseMode::Parameterized => g.param().is_some(),
                };
                g.with_noise(noisy)
            })
            .collect();
        Self {
            gates,
            ..self.clone()
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params {
            return Err(Error::DimMismatch {
                expected: self.n_params,
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// `cos(θ/2)·I − i·sin(θ/2)·P`.
pub fn rotation_unitary(theta: f64, g: &PauliString) -> ComplexMatrix {
    let (s, c) = (theta / 2.0).sin_cos();
    let p = g.matrix();
    let mut out = p.scale(Complex64::new(0.0, -s));
    for i in 0..out.rows() {
        out[(i, i)] += c;
    }
    out
}

pub fn named_gate(name: &str) -> Result<ComplexMatrix> {
    let h = FRAC_1_SQRT_2;
    let m = match name {
        "x" => ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]),
        "y" => ComplexMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]),
        "z" => ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        "h" => ComplexMatrix::from_real(2, 2, &[h, h, h, -h]),
        "s" => ComplexMatrix::from_vec(2, 2, vec![ONE, ZERO, ZERO, I]),
        // local bit 0 is the control, local bit 1 the target
        "cnot" => ComplexMatrix::from_real(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0,
            ],
        ),
        "cz" => ComplexMatrix::from_real(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, -1.0,
            ],
        ),
        "swap" => ComplexMatrix::from_real(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        ),
        other => return Err(Error::Config(format!("unknown gate '{other}'"))),
    };
    m
}

/// One `R_y` per qubit, then `layers` × [CNOT chain on (0,1),…,(n−2,n−1); `R_y` per qubit].
pub fn build_hardware_efficient(n: usize, layers: usize, noisy_cnots: bool) -> Result<Circuit> {
    let mode = if noisy_cnots { NoiseMode::Cnots } else { NoiseMode::None };
    build_hardware_efficient_with(n, layers, mode)
}

pub fn build_hardware_efficient_with(n: usize, layers: usize, mode: NoiseMode) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::BadShape(format!("hardware-efficient ansatz needs n ≥ 2, got {n}")));
    }
    if layers < 1 {
        return Err(Error::BadShape("hardware-efficient ansatz needs at least one layer".into()));
    }
    let y = PauliString::new(vec![crate::pauli::Pauli::Y]);
    let mut gates = Vec::new();
    let mut param = 0;
    let mut column = |gates: &mut Vec<GateSpec>| {
        for q in 0..n {
            gates.push(GateSpec::rotation(y.clone(), param, vec![q]));
            param += 1;
        }
    };
    column(&mut gates);
    for _ in 0..layers {
        for q in 0..n - 1 {
            gates.push(GateSpec::fixed("cnot", vec![q, q + 1])?);
        }
        column(&mut gates);
    }
    Ok(Circuit::new(n, gates)?.with_noise_mode(mode))
}

/// Channel attached to each gate, indexed by gate position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMap {
    channels: Vec<Option<PauliChannel>>,
}

impl ChannelMap {
    pub fn new(channels: Vec<Option<PauliChannel>>) -> Self {
        Self { channels }
    }

    /// Depolarizing channel of strength `epsilon` on every noisy gate's support.
    pub fn depolarizing(c: &Circuit, epsilon: f64) -> Result<Self> {
        let channels = c
            .gates
            .iter()
            .map(|g| {
                if g.noisy {
                    make_depolarizing(&g.support, epsilon).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels })
    }

    pub fn get(&self, gate: usize) -> Option<&PauliChannel> {
        self.channels.get(gate).and_then(|c| c.as_ref())
    }

    /// Channels of the noisy gates in circuit order.
    pub fn noisy_channels(&self) -> impl Iterator<Item = &PauliChannel> {
        self.channels.iter().flatten()
    }

    /// Checks that exactly the noisy gates carry a channel on their support.
    pub fn validate(&self, c: &Circuit) -> Result<()> {
        for (i, g) in c.gates.iter().enumerate() {
            match (g.noisy, self.get(i)) {
                (true, None) => return Err(Error::MissingChannel(i)),
                (false, Some(_)) => {
                    return Err(Error::SupportMismatch {
                        gate: i,
                        detail: "channel attached to a noiseless gate".into(),
                    })
                }
                (true, Some(ch)) if ch.support() != g.support.as_slice() => {
                    return Err(Error::SupportMismatch {
                        gate: i,
                        detail: format!("channel on {:?}, gate on {:?}", ch.support(), g.support),
                    })
                }
                _ => {}
            }
        }
        if self.channels.len() > c.gates.len() && self.channels[c.gates.len()..].iter().any(|x| x.is_some()) {
            return Err(Error::SupportMismatch {
                gate: c.gates.len(),
                detail: "channel beyond the last gate".into(),
            });
        }
        Ok(())
    }

    /// Common ε if every channel has the same strength.
    pub fn uniform_epsilon(&self) -> Option<f64> {
        let mut it = self.noisy_channels().map(|c| c.epsilon());
        let first = it.next()?;
        it.all(|e| e == first).then_some(first)
    }
}

/// `U(θ)|0…0⟩⟨0…0|U(θ)†`.
pub fn run_ideal(c: &Circuit, theta: &[f64]) -> Result<DensityMatrix> {
    c.check_theta(theta)?;
    Ok(evolve(c, theta, None, None))
}

/// Each noisy gate is followed by its channel.
pub fn run_noisy(c: &Circuit, theta: &[f64], channels: &ChannelMap) -> Result<DensityMatrix> {
    c.check_theta(theta)?;
    channels.validate(c)?;
    Ok(evolve(c, theta, Some(channels), None))
}

/// Each noisy gate applies its unitary, then the inserted Pauli, then its
/// channel. `insertions[k]` belongs to the k-th noisy gate.
pub fn run_with_insertions(
    c: &Circuit,
    theta: &[f64],
    insertions: &[PauliString],
    channels: &ChannelMap,
) -> Result<DensityMatrix> {
    c.check_theta(theta)?;
    channels.validate(c)?;
    check_insertions(c, insertions)?;
    Ok(evolve(c, theta, Some(channels), Some(insertions)))
}

pub(crate) fn check_insertions(c: &Circuit, insertions: &[PauliString]) -> Result<()> {
    let noisy = c.noisy_gate_indices();
    if insertions.len() < noisy.len() {
        return Err(Error::MissingInsertion(noisy[insertions.len()]));
    }
    if insertions.len() > noisy.len() {
        return Err(Error::SupportMismatch {
            gate: c.gates.len(),
            detail: format!("{} insertions for {} noisy gates", insertions.len(), noisy.len()),
        });
    }
    for (&gi, p) in noisy.iter().zip(insertions) {
        if p.len() != c.gates[gi].support.len() {
            return Err(Error::SupportMismatch {
                gate: gi,
                detail: format!("insertion {p} on a {}-qubit gate", c.gates[gi].support.len()),
            });
        }
    }
    Ok(())
}

/// Unchecked evolution; callers validate shapes.
pub(crate) fn evolve(
    c: &Circuit,
    theta: &[f64],
    channels: Option<&ChannelMap>,
    insertions: Option<&[PauliString]>,
) -> DensityMatrix {
    let mut rho = DensityMatrix::zero_state(c.n_qubits).expect("validated register");
    let mut k = 0;
    for (i, g) in c.gates.iter().enumerate() {
        rho.conjugate_in_place(&g.unitary(theta), &g.support);
        if g.noisy {
            if let Some(ins) = insertions {
                rho.pauli_conjugate_in_place(&ins[k], &g.support);
            }
            if let Some(ch) = channels.and_then(|m| m.get(i)) {
                apply_channel_in_place(&mut rho, ch);
            }
            k += 1;
        }
    }
    rho
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CircuitDoc {
    Layout {
        n_qubits: usize,
        layers: usize,
        #[serde(default)]
        noise_mode: NoiseMode,
    },
    Explicit {
        n_qubits: usize,
        gates: Vec<GateDoc>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GateDoc {
    Rotation {
        generator: PauliString,
        param: usize,
        support: Vec<usize>,
        #[serde(default, skip_serializing_if = "is_false")]
        noisy: bool,
    },
    Fixed {
        name: String,
        support: Vec<usize>,
        #[serde(default, skip_serializing_if = "is_false")]
        noisy: bool,
        /// Row-major `[re, im]` pairs; omitted for named gates.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unitary: Option<Vec<[f64; 2]>>,
    },
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl TryFrom<CircuitDoc> for Circuit {
    type Error = Error;

    fn try_from(doc: CircuitDoc) -> Result<Self> {
        match doc {
            CircuitDoc::Layout {
                n_qubits,
                layers,
                noise_mode,
            } => build_hardware_efficient_with(n_qubits, layers, noise_mode),
            CircuitDoc::Explicit { n_qubits, gates } => {
                let gates = gates
                    .into_iter()
                    .map(|g| match g {
                        GateDoc::Rotation {
                            generator,
                            param,
                            support,
                            noisy,
                        } => Ok(GateSpec::rotation(generator, param, support).with_noise(noisy)),
                        GateDoc::Fixed {
                            name,
                            support,
                            noisy,
                            unitary,
                        } => {
                            let unitary = match unitary {
                                Some(entries) => {
                                    let dim = 1 << support.len();
                                    let data = entries.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
                                    ComplexMatrix::from_vec(dim, dim, data)?
                                }
                                None => named_gate(&name)?,
                            };
                            Ok(GateSpec {
                                kind: GateKind::Fixed { name, unitary },
                                support,
                                noisy,
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Circuit::new(n_qubits, gates)
            }
        }
    }
}

impl From<Circuit> for CircuitDoc {
    fn from(c: Circuit) -> Self {
        let gates = c
            .gates
            .into_iter()
            .map(|g| match g.kind {
                GateKind::Rotation { generator, param } => GateDoc::Rotation {
                    generator,
                    param,
                    support: g.support,
                    noisy: g.noisy,
                },
                GateKind::Fixed { name, unitary } => {
                    let custom = named_gate(&name).map_or(true, |u| u != unitary);
                    GateDoc::Fixed {
                        unitary: custom.then(|| unitary.as_slice().iter().map(|z| [z.re, z.im]).collect()),
                        name,
                        support: g.support,
                        noisy: g.noisy,
                    }
                }
            })
            .collect();
        CircuitDoc::Explicit {
            n_qubits: c.n_qubits,
            gates,
        }
    }
}
