//! Experiment configuration: presets per experiment kind, JSON overrides with
//! line-precise errors, and the problem instances experiments run on.

use std::fmt;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{build_hardware_efficient_with, Circuit, GateSpec, NoiseMode};
use crate::error::{Error, Result};
use crate::observable::{maxcut_hamiltonian, parse_weight_csv, MaxCutProblem, Observable};
use crate::optimizer::{Schedule, TestShots};
use crate::pauli::{Pauli, PauliString};
use crate::qem::Budget;
use crate::rng::{stream, uniform};

/// Three-vertex weight matrix.
pub const MAXCUT3: [[f64; 3]; 3] = [[0.41, 0.44, 0.55], [0.44, 0.97, 0.22], [0.55, 0.22, 0.89]];

/// Five-vertex weight matrix. Entry (1,0) reads 0.44 against 0.43 at (0,1),
/// so it is loaded by mirroring the upper triangle.
pub const MAXCUT5: [[f64; 5]; 5] = [
    [0.42, 0.43, 0.55, 0.96, 0.22],
    [0.44, 0.89, 0.07, 0.87, 0.01],
    [0.55, 0.07, 0.77, 0.18, 0.15],
    [0.96, 0.87, 0.18, 0.77, 0.51],
    [0.22, 0.01, 0.15, 0.51, 0.84],
];

/// Diagonal of `Z₀ + 0.5 Z₁ + 0.3 Z₀Z₁` on two qubits.
pub const TOY_DIAGONAL: [f64; 4] = [1.8, -0.8, 0.2, -1.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Loss curves of the four gradient regimes at each noise level.
    Convergence,
    /// Final loss against noise level.
    NoiseSweep,
    /// Final loss against the number of sampled circuits.
    CircuitSweep,
    /// Convergence curves whose plotted loss is a finite-shot estimate.
    TestShots,
    /// Bound-versus-measurement reports.
    Bounds,
    /// Convergence pipeline on a user-supplied instance.
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Convergence,
        ExperimentKind::NoiseSweep,
        ExperimentKind::CircuitSweep,
        ExperimentKind::TestShots,
        ExperimentKind::Bounds,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::CircuitSweep => "circuit_sweep",
            ExperimentKind::TestShots => "test_shots",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown experiment '{s}', expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Maxcut3,
    Maxcut5,
    /// Two-qubit `Z₀ + 0.5 Z₁ + 0.3 Z₀Z₁`.
    Toy,
}

/// How a weight CSV is turned into a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Mirror the upper triangle, warning if the lower one disagrees.
    #[default]
    Upper,
    /// Reject any asymmetry.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Builtin(Builtin),
    Csv {
        path: PathBuf,
        #[serde(default)]
        symmetry: Symmetry,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoint {
    /// Every component equal to this value.
    Constant(f64),
    /// Uniform on `[−π, π)^D` from the master seed.
    Uniform,
    Values(Vec<f64>),
}

impl InitialPoint {
    /// Stream key for drawing a uniform `θ⁰`.
    const INIT_KEY: u64 = u64::MAX - 2;

    pub fn resolve(&self, d: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            InitialPoint::Constant(v) => Ok(vec![*v; d]),
            InitialPoint::Uniform => {
                let mut rng = stream(seed, &[Self::INIT_KEY]);
                Ok((0..d)
                    .map(|_| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * uniform(&mut rng))
                    .collect())
            }
            InitialPoint::Values(v) if v.len() == d => Ok(v.clone()),
            InitialPoint::Values(v) => Err(Error::Config(format!(
                "theta0 has {} entries but the circuit has {d} parameters",
                v.len()
            ))),
        }
    }
}

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub instance: InstanceSource,
    pub layers: usize,
    pub epsilons: Vec<f64>,
    pub n_m: usize,
    pub n_c: Vec<usize>,
    pub schedule: Schedule,
    pub iterations: usize,
    pub n_seeds: usize,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub test_shots: TestShots,
    pub budget: Budget,
    pub theta0: InitialPoint,
    /// Monte-Carlo replicas per variance estimate in the bound checks.
    pub replicas: usize,
    pub out_dir: Option<PathBuf>,
}

/// Overrides read from a JSON file; any field left out keeps its preset value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigOverrides {
    experiment: Option<ExperimentKind>,
    instance: Option<InstanceSource>,
    layers: Option<usize>,
    epsilons: Option<Vec<f64>>,
    n_m: Option<usize>,
    n_c: Option<Vec<usize>>,
    schedule: Option<Schedule>,
    iterations: Option<usize>,
    n_seeds: Option<usize>,
    seed: Option<u64>,
    noise_mode: Option<NoiseMode>,
    test_shots: Option<TestShots>,
    budget: Option<Budget>,
    theta0: Option<InitialPoint>,
    replicas: Option<usize>,
    out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let convergence = ExperimentConfig {
            experiment: kind,
            instance: InstanceSource::Builtin(Builtin::Maxcut3),
            layers: 1,
            epsilons: vec![0.09, 0.25],
            n_m: 400,
            n_c: vec![8],
            schedule: Schedule::InverseT(0.5),
            iterations: 100,
            n_seeds: 8,
            seed: 0,
            noise_mode: NoiseMode::Cnots,
            test_shots: TestShots::Exact,
            budget: Budget::Strict,
            theta0: InitialPoint::Constant(0.1),
            replicas: 2000,
            out_dir: None,
        };
        let sweep = ExperimentConfig {
            instance: InstanceSource::Builtin(Builtin::Maxcut5),
            n_m: 10240,
            schedule: Schedule::Constant(0.14),
            iterations: 10,
            ..convergence.clone()
        };
        match kind {
            ExperimentKind::Convergence | ExperimentKind::Custom => convergence,
            ExperimentKind::TestShots => ExperimentConfig {
                test_shots: TestShots::Shots(400),
                ..convergence
            },
            ExperimentKind::NoiseSweep => ExperimentConfig {
                epsilons: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
                n_c: vec![7, 10],
                // 7 does not divide 10240
                budget: Budget::Lenient,
                ..sweep
            },
            ExperimentKind::CircuitSweep => ExperimentConfig {
                epsilons: vec![0.03, 0.25],
                n_c: vec![1, 2, 4, 5, 8, 10, 16, 20, 32],
                ..sweep
            },
            ExperimentKind::Bounds => ExperimentConfig {
                instance: InstanceSource::Builtin(Builtin::Toy),
                epsilons: vec![0.05],
                n_m: 40,
                n_c: vec![4, 8],
                schedule: Schedule::Constant(0.05),
                iterations: 200,
                n_seeds: 50,
                ..convergence
            },
        }
    }

    /// Parses JSON overrides on top of the preset for the named (or
    /// fallback) experiment. Syntax and type errors carry line and column.
    pub fn from_json(text: &str, fallback: ExperimentKind) -> Result<Self> {
        let o: ConfigOverrides = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        let mut cfg = Self::preset(o.experiment.unwrap_or(fallback));
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { cfg.$f = v; } )* };
        }
        take!(instance, layers, epsilons, n_m, n_c, schedule, iterations, n_seeds, seed, noise_mode, test_shots, budget, theta0, replicas);
        if o.out_dir.is_some() {
            cfg.out_dir = o.out_dir;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, fallback: ExperimentKind) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, fallback).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("n_m", self.n_m),
            ("iterations", self.iterations),
            ("n_seeds", self.n_seeds),
            ("replicas", self.replicas),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.replicas < 2 {
            return Err(Error::Config("replicas must be at least 2".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons must not be empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Config(format!("epsilon {e} outside [0, 1]")));
        }
        if self.n_c.is_empty() || self.n_c.contains(&0) {
            return Err(Error::Config("n_c must be a nonempty list of positive counts".into()));
        }
        if self.test_shots == TestShots::Shots(0) {
            return Err(Error::Config("test_shots must be positive".into()));
        }
        match self.schedule {
            Schedule::Constant(v) | Schedule::InverseT(v) if !(v.is_finite() && v > 0.0) => {
                return Err(Error::Config(format!("learning rate {v} must be positive")))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// A problem instance ready to run: circuit, observable and provenance hash.
#[derive(Debug, Clone)]
pub struct Instance {
    pub label: String,
    pub circuit: Circuit,
    pub observable: Observable,
    /// Hex SHA-256 of `"blob <len>\0" + bytes` over the weight CSV.
    pub content_hash: String,
}

impl Instance {
    pub fn load(src: &InstanceSource, layers: usize, mode: NoiseMode) -> Result<Self> {
        let (label, n, observable, bytes) = match src {
            InstanceSource::Builtin(Builtin::Toy) => {
                let h = Observable::from_diagonal(2, &TOY_DIAGONAL)?;
                (String::from("toy"), 2, h, toy_text().into_bytes())
            }
            InstanceSource::Builtin(b) => {
                let text = builtin_csv(*b);
                let p = MaxCutProblem::from_upper(&parse_weight_csv(&text)?)?;
                let label = if *b == Builtin::Maxcut3 { "maxcut3" } else { "maxcut5" };
                (label.to_string(), p.n(), maxcut_hamiltonian(&p), text.into_bytes())
            }
            InstanceSource::Csv { path, symmetry } => {
                let bytes = std::fs::read(path)?;
                let text = String::from_utf8_lossy(&bytes);
                let rows = parse_weight_csv(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let p = match symmetry {
                    Symmetry::Strict => MaxCutProblem::new(&rows)?,
                    Symmetry::Upper => {
                        if MaxCutProblem::new(&rows).is_err() {
                            warn!("{} is not symmetric; mirroring its upper triangle", path.display());
                        }
                        MaxCutProblem::from_upper(&rows)?
                    }
                };
                (path.display().to_string(), p.n(), maxcut_hamiltonian(&p), bytes)
            }
        };
        Ok(Instance {
            label,
            circuit: build_hardware_efficient_with(n, layers, mode)?,
            observable,
            content_hash: blob_hash(&bytes),
        })
    }
}

/// Canonical CSV text of a builtin weight matrix.
pub fn builtin_csv(b: Builtin) -> String {
    let rows: Vec<Vec<f64>> = match b {
        Builtin::Maxcut3 => MAXCUT3.iter().map(|r| r.to_vec()).collect(),
        Builtin::Maxcut5 => MAXCUT5.iter().map(|r| r.to_vec()).collect(),
        Builtin::Toy => return toy_text(),
    };
    rows.iter()
        .map(|r| r.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

fn toy_text() -> String {
    TOY_DIAGONAL.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n"
}

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `R_y(θ₀)` on qubit 0 and `R_y(θ₁)` on qubit 1, then CNOT(0→1). With
/// `noisy`, each rotation is followed by its own channel.
pub fn two_parameter_toy(noisy: bool) -> Result<(Circuit, Observable)> {
    let y = PauliString::new(vec![Pauli::Y]);
    let c = Circuit::new(
        2,
        vec![
            GateSpec::rotation(y.clone(), 0, vec![0]).with_noise(noisy),
            GateSpec::rotation(y, 1, vec![1]).with_noise(noisy),
            GateSpec::fixed("cnot", vec![0, 1])?,
        ],
    )?;
    Ok((c, Observable::from_diagonal(2, &TOY_DIAGONAL)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_ground_values() {
        let three = Instance::load(&InstanceSource::Builtin(Builtin::Maxcut3), 1, NoiseMode::Cnots).unwrap();
        assert!((three.observable.ground_value() + 2.22).abs() < 1e-9);
        assert_eq!(three.circuit.n_params(), 6);
        assert_eq!(three.circuit.n_noisy(), 2);
        let five = Instance::load(&InstanceSource::Builtin(Builtin::Maxcut5), 1, NoiseMode::Cnots).unwrap();
        assert!((five.observable.ground_value() + 3.24).abs() < 1e-9);
        assert_eq!(builtin_csv(Builtin::Maxcut3), "0.41,0.44,0.55\n0.44,0.97,0.22\n0.55,0.22,0.89\n");
    }

    #[test]
    fn overrides_and_errors() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "noise_sweep", "iterations": 3}"#, ExperimentKind::Convergence).unwrap();
        assert_eq!(cfg.iterations, 3);
        assert_eq!(cfg.n_c, vec![7, 10]);
        let err = ExperimentConfig::from_json("{\n  \"n_m\": 10,\n  \"bogus\": 1\n}", ExperimentKind::Convergence).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(ExperimentConfig::from_json(r#"{"epsilons": [1.5]}"#, ExperimentKind::Bounds).is_err());
        assert!(ExperimentConfig::from_json(r#"{"n_c": [0]}"#, ExperimentKind::Bounds).is_err());
        let round = ExperimentConfig::preset(ExperimentKind::CircuitSweep);
        let back: ExperimentConfig = serde_json::from_str(&round.to_json()).unwrap();
        assert_eq!(round, back);
        assert_eq!("noise-sweep".parse::<ExperimentKind>().unwrap(), ExperimentKind::NoiseSweep);
    }

    #[test]
    fn initial_points() {
        let u = InitialPoint::Uniform.resolve(4, 9).unwrap();
        assert_eq!(u, InitialPoint::Uniform.resolve(4, 9).unwrap());
        assert!(u.iter().all(|v| (-std::f64::consts::PI..std::f64::consts::PI).contains(v)));
        assert!(InitialPoint::Values(vec![0.0]).resolve(2, 0).is_err());
    }

    #[test]
    fn toy_landscape() {
        let (c, h) = two_parameter_toy(false).unwrap();
        let rho = crate::ansatz::run_ideal(&c, &[1.1, -0.4]).unwrap();
        let l = crate::observable::expectation(&rho, &h).unwrap();
        let want = 1.1f64.cos() + 0.5 * 1.1f64.cos() * (-0.4f64).cos() + 0.3 * (-0.4f64).cos();
        assert!((l - want).abs() < 1e-12);
    }
}
