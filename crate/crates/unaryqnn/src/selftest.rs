//! Fast invariant checks behind the CLI `selftest` subcommand. Each check is
//! independent and runs in well under a second; together they touch every
//! subsystem against frozen oracles so a broken build surfaces before an
//! hour-long experiment does.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{decompose_rbs, rbs_matrix, Circuit, Gate};
use crate::dataio::npy::{parse_npy, write_npy};
use crate::dense::{dense_simulate, DenseState};
use crate::error::{Error, Result};
use crate::estimators::{crossover_dimension, estimate_ip, quantum_step_count, EstimatorMode};
use crate::eval::auc;
use crate::loaders::{load, LoaderTopology, TopologyKind};
use crate::orthonn::{qpc_backward, OrthoNet};
use crate::pyramid::{matrix_to_angles, param_count, PyramidLayer};
use crate::qnn::Mlp;
use crate::unary::run_circuit;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity on success, error text on failure.
    pub detail: String,
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// Runs every check; failures are collected, never propagated, so one broken
/// subsystem still leaves a full report.
pub fn run_selftest() -> Vec<CheckOutcome> {
    let checks: [(&'static str, fn() -> Result<String>); 11] = [
        ("rbs decomposition matches its 4x4 matrix", check_rbs_decomposition),
        ("unary simulator agrees with dense statevector", check_unary_dense),
        ("data loaders reconstruct their input", check_loader_roundtrip),
        ("exact inner-product estimate equals the dot product", check_exact_ip),
        ("sampled inner-product estimate concentrates", check_sampled_ip),
        ("pyramid angles give an orthogonal matrix and round-trip", check_pyramid),
        ("angle gradients match finite differences", check_qpc_gradient),
        ("network forward pass matches hand-rolled arithmetic", check_mlp_parity),
        ("step counts and shot crossover match closed forms", check_crossover),
        ("rank-based AUC reproduces frozen values", check_auc),
        ("npy serialization round-trips", check_npy),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok(detail) => CheckOutcome { name, passed: true, detail },
            Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
        })
        .collect()
}

fn fail(msg: String) -> Error {
    Error::Selftest(msg)
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / norm).collect()
}

fn check_rbs_decomposition() -> Result<String> {
    let mut max_dev: f64 = 0.0;
    for theta in [0.3, -1.2, 2.5] {
        let decomposed = decompose_rbs(theta);
        let matrix = rbs_matrix(theta);
        for col in 0..4 {
            let mut state = DenseState::basis(2, col)?;
            state.apply_circuit(&decomposed)?;
            for (row, &amp) in state.amp().iter().enumerate() {
                max_dev = max_dev.max((amp - matrix[row][col]).abs());
            }
        }
    }
    if max_dev > 1e-10 {
        return Err(fail(format!("max deviation {max_dev:.3e} exceeds 1e-10")));
    }
    Ok(format!("max deviation {max_dev:.3e}"))
}

fn check_unary_dense() -> Result<String> {
    let mut c = Circuit::new(5);
    c.push(Gate::XInit { qubit: 0 })?;
    for (a, b, theta) in [(0, 1, 0.7), (1, 2, -0.4), (3, 4, 1.1), (2, 3, 0.9), (0, 2, -2.2)] {
        c.push(Gate::Rbs { a, b, theta })?;
    }
    let unary = run_circuit(&c, None)?;
    let dense = dense_simulate(&c)?;
    let max_dev = unary
        .amp()
        .iter()
        .zip(dense.unary_amplitudes())
        .map(|(u, d)| (u - d).abs())
        .fold(0.0f64, f64::max);
    if max_dev > 1e-10 {
        return Err(fail(format!("max amplitude deviation {max_dev:.3e} exceeds 1e-10")));
    }
    Ok(format!("max amplitude deviation {max_dev:.3e}"))
}

fn check_loader_roundtrip() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x = unit_vector(&mut rng, 7);
    let mut max_dev: f64 = 0.0;
    for kind in [TopologyKind::Diagonal, TopologyKind::Parallel, TopologyKind::SemiDiagonal] {
        let topology = LoaderTopology::new(kind, x.len())?;
        let state = load(&x, &topology)?;
        for (got, want) in state.amp().iter().zip(&x) {
            max_dev = max_dev.max((got - want).abs());
        }
    }
    if max_dev > 1e-12 {
        return Err(fail(format!("max deviation {max_dev:.3e} exceeds 1e-12")));
    }
    Ok(format!("max deviation {max_dev:.3e} over 3 topologies"))
}

fn check_exact_ip() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = unit_vector(&mut rng, 8);
    let w: Vec<f64> = unit_vector(&mut rng, 8).iter().map(|v| v * 1.7).collect();
    let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
    let got = estimate_ip(&x, &w, EstimatorMode::Exact)?.value;
    let dev = (got - dot).abs();
    if dev > 1e-12 {
        return Err(fail(format!("deviation {dev:.3e} exceeds 1e-12")));
    }
    Ok(format!("deviation {dev:.3e}"))
}

fn check_sampled_ip() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let x = unit_vector(&mut rng, 4);
    let w = unit_vector(&mut rng, 4);
    let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
    let mode = EstimatorMode::Sampled { n_shots: 20_000, seed: 11 };
    let err = (estimate_ip(&x, &w, mode)?.value - dot).abs();
    // std of the estimate is at most 1/sqrt(shots) = 0.007 here
    if err > 0.03 {
        return Err(fail(format!("20k-shot error {err:.4} exceeds 0.03")));
    }
    Ok(format!("20k-shot error {err:.4}"))
}

fn check_pyramid() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let n_params = param_count(5, 5)?;
    let theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.5..1.5)).collect();
    let layer = PyramidLayer::new(5, 5, theta)?;
    let w = layer.angles_to_matrix();
    let ortho_dev = w.orthogonality_deviation();
    if ortho_dev > 1e-10 {
        return Err(fail(format!("orthogonality deviation {ortho_dev:.3e} exceeds 1e-10")));
    }
    let rebuilt = matrix_to_angles(&w)?.angles_to_matrix();
    let mut max_dev: f64 = 0.0;
    for (ra, rb) in w.rows().iter().zip(rebuilt.rows()) {
        for (a, b) in ra.iter().zip(rb) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    if max_dev > 1e-10 {
        return Err(fail(format!("round-trip deviation {max_dev:.3e} exceeds 1e-10")));
    }
    Ok(format!("orthogonality {ortho_dev:.3e}, round-trip {max_dev:.3e}"))
}

fn check_qpc_gradient() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let reference = OrthoNet::init(&[4, 2], 3)?;
    let xs = vec![unit_vector(&mut rng, 4)];
    let ys = vec![1u8];

    // unit learning rate turns the parameter update into the raw gradient
    let mut stepped = reference.clone();
    let mut cache = stepped.cache();
    qpc_backward(&mut stepped, &xs, &ys, 1.0, &mut cache)?;
    let analytic: Vec<f64> = reference.layers()[0]
        .theta()
        .iter()
        .zip(stepped.layers()[0].theta())
        .map(|(before, after)| before - after)
        .collect();

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..analytic.len() {
        let probe = |delta: f64| -> Result<f64> {
            let mut net = reference.clone();
            net.layers_mut()[0].theta_mut()[k] += delta;
            let mut cache = net.cache();
            qpc_backward(&mut net, &xs, &ys, 0.0, &mut cache)
        };
        let numeric = (probe(eps)? - probe(-eps)?) / (2.0 * eps);
        let dev = (analytic[k] - numeric).abs() / numeric.abs().max(1e-3);
        worst = worst.max(dev);
    }
    if worst > 1e-5 {
        return Err(fail(format!("worst relative deviation {worst:.3e} exceeds 1e-5")));
    }
    Ok(format!("worst relative deviation {worst:.3e} over {} angles", analytic.len()))
}

fn check_mlp_parity() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let net = Mlp::init(&[3, 4, 2], 5)?;
    let x = unit_vector(&mut rng, 3);
    let got = net.predict_proba(&x, EstimatorMode::Exact)?;

    let dump: serde_json::Value = serde_json::from_str(&net.to_json())?;
    let number = |v: &serde_json::Value| v.as_f64().expect("checkpoint holds numbers");
    let mut a = x.clone();
    for (w_layer, b_layer) in dump["weights"]
        .as_array()
        .expect("weights array")
        .iter()
        .zip(dump["biases"].as_array().expect("biases array"))
    {
        a = w_layer
            .as_array()
            .expect("rows")
            .iter()
            .zip(b_layer.as_array().expect("bias row"))
            .map(|(row, b)| {
                let z: f64 = row
                    .as_array()
                    .expect("row")
                    .iter()
                    .zip(&a)
                    .map(|(wij, ai)| number(wij) * ai)
                    .sum::<f64>()
                    + number(b);
                1.0 / (1.0 + (-z).exp())
            })
            .collect();
    }
    let max_dev = got.iter().zip(&a).map(|(g, m)| (g - m).abs()).fold(0.0f64, f64::max);
    if max_dev > 1e-12 {
        return Err(fail(format!("max deviation {max_dev:.3e} exceeds 1e-12")));
    }
    Ok(format!("max deviation {max_dev:.3e}"))
}

fn check_crossover() -> Result<String> {
    let cases = [
        ("crossover(400)", crossover_dimension(400), 10_801),
        ("crossover(100)", crossover_dimension(100), 2_301),
        ("quantum_steps(10000, 400)", quantum_step_count(10_000, 400), 10_800),
    ];
    for (what, got, want) in cases {
        if got != want {
            return Err(fail(format!("{what} = {got}, expected {want}")));
        }
    }
    Ok("crossover 10801 at 400 shots, 2301 at 100 shots".into())
}

fn check_auc() -> Result<String> {
    let frozen = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])?;
    if (frozen - 0.75).abs() > 1e-12 {
        return Err(fail(format!("frozen case gave {frozen}, expected 0.75")));
    }
    let ties = auc(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1])?;
    if (ties - 0.5).abs() > 1e-12 {
        return Err(fail(format!("all-ties case gave {ties}, expected 0.5")));
    }
    Ok("frozen 0.75 and all-ties 0.5 reproduced".into())
}

fn check_npy() -> Result<String> {
    let data = [1u8, 2, 3, 4, 5, 6];
    let bytes = write_npy(&[2, 3], &data)?;
    let parsed = parse_npy(&bytes)?;
    if parsed.shape != vec![2, 3] || parsed.data != data {
        return Err(fail("round-trip changed shape or data".into()));
    }
    Ok(format!("{}-byte header round-trip", bytes.len() - data.len()))
}
