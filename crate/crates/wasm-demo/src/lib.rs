//! Browser bindings. Each export returns a JSON string that the static page
//! in `www/` plots on a canvas; the plain functions underneath are what the
//! native tests exercise.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use vqe_lab::ansatz::ChannelMap;
use vqe_lab::config::{Builtin, Instance, InstanceSource};
use vqe_lab::noise::make_depolarizing;
use vqe_lab::optimizer::{repeated_runs, GradientSource, RunConfig, Schedule, TestShots};
use vqe_lab::pauli::PauliString;
use vqe_lab::qem::{depolarizing_constants, derive_qpr, Budget};

/// Mean and envelope of the loss for the four gradient regimes on the
/// three-vertex instance, 400 shots per term, `η_t = 0.5/t`.
pub fn convergence_curves(epsilon: f64, n_c: usize, iterations: usize, n_seeds: usize, seed: u64) -> vqe_lab::Result<Value> {
    let inst = Instance::load(&InstanceSource::Builtin(Builtin::Maxcut3), 1, Default::default())?;
    let channels = ChannelMap::depolarizing(&inst.circuit, epsilon)?;
    let n_m = 400;
    let sources = [
        GradientSource::Exact,
        GradientSource::Shot { n_m },
        GradientSource::NoisyShot { n_m, channels: channels.clone() },
        GradientSource::Qem { n_c, n_m, channels, budget: Budget::Lenient },
    ];
    let mut regimes = Vec::new();
    for source in sources {
        let label = source.label();
        let rc = RunConfig {
            circuit: &inst.circuit,
            observable: &inst.observable,
            source,
            theta0: vec![0.1; inst.circuit.n_params()],
            schedule: Schedule::InverseT(0.5),
            iterations,
            test_shots: TestShots::Exact,
        };
        let s = repeated_runs(&rc, n_seeds, seed)?.summary;
        regimes.push(json!({ "name": label, "mean": s.mean, "min": s.min, "max": s.max }));
    }
    Ok(json!({ "ground": inst.observable.ground_value(), "regimes": regimes }))
}

/// Total overhead `Z = Z_d^D` and the variance factors `c₁, c₂` over `γ ∈ [0, 0.95]`.
pub fn overhead_curves(n: usize, d: usize, points: usize) -> vqe_lab::Result<Value> {
    let mut gamma = Vec::new();
    let (mut z, mut c1, mut c2) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..points.max(2) {
        let g = 0.95 * k as f64 / (points.max(2) - 1) as f64;
        let k = depolarizing_constants(n, g, d)?;
        gamma.push(g);
        z.push(k.z_d.powi(d as i32));
        c1.push(k.c1);
        c2.push(k.c2);
    }
    Ok(json!({ "gamma": gamma, "z": z, "c1": c1, "c2": c2 }))
}

/// Signed weights that invert an `m`-qubit depolarizing channel.
pub fn quasi_probabilities(m: usize, epsilon: f64) -> vqe_lab::Result<Value> {
    let support: Vec<usize> = (0..m).collect();
    let ch = make_depolarizing(&support, epsilon)?;
    let q = derive_qpr(&ch, 0)?;
    let labels: Vec<String> = (0..q.q.len()).map(|i| PauliString::from_index(i, m).to_string()).collect();
    Ok(json!({
        "labels": labels,
        "q": q.q,
        "z": q.z,
        "p_identity": q.p_identity(),
        "residual": q.reconstruction_residual(&ch),
    }))
}

fn to_js(r: vqe_lab::Result<Value>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = convergenceCurves)]
pub fn convergence_curves_js(epsilon: f64, n_c: usize, iterations: usize, n_seeds: usize, seed: u64) -> Result<String, JsError> {
    to_js(convergence_curves(epsilon, n_c, iterations, n_seeds, seed))
}

#[wasm_bindgen(js_name = overheadCurves)]
pub fn overhead_curves_js(n: usize, d: usize, points: usize) -> Result<String, JsError> {
    to_js(overhead_curves(n, d, points))
}

#[wasm_bindgen(js_name = quasiProbabilities)]
pub fn quasi_probabilities_js(m: usize, epsilon: f64) -> Result<String, JsError> {
    to_js(quasi_probabilities(m, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_have_four_regimes() {
        let v = convergence_curves(0.25, 4, 5, 2, 1).unwrap();
        let regimes = v["regimes"].as_array().unwrap();
        assert_eq!(regimes.len(), 4);
        assert_eq!(regimes[0]["mean"].as_array().unwrap().len(), 6);
        assert!((v["ground"].as_f64().unwrap() + 2.22).abs() < 1e-9);
    }

    #[test]
    fn overhead_starts_at_one() {
        let v = overhead_curves(2, 4, 10).unwrap();
        assert_eq!(v["z"][0].as_f64().unwrap(), 1.0);
        assert_eq!(v["gamma"].as_array().unwrap().len(), 10);
    }

    #[test]
    fn single_qubit_weights() {
        let v = quasi_probabilities(1, 0.25).unwrap();
        let q: Vec<f64> = v["q"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // f = 1 − 4ε/3 = 2/3, Z = (3/f − 1)/2
        assert!((v["z"].as_f64().unwrap() - 1.75).abs() < 1e-12);
        assert_eq!(v["labels"][3], "Z");
    }
}
