//! Acceptance checklist for the whole stack: one test per criterion, named
//! `criterion_<n>_*`, so the test report reads as a pass/fail line per
//! criterion. Benchmark-accuracy criteria need the official archives and are
//! ignored by default; run them with
//!
//! ```text
//! MEDMNIST_DIR=/path/to/archives cargo test --release --test acceptance -- --ignored --nocapture
//! ```
//!
//! Everything else runs in a plain `cargo test`. Tests share a lock so
//! wall-clock measurements are never taken under CPU contention from a
//! sibling test.

use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use unaryqnn::circuit::{decompose_rbs, rbs_matrix, Circuit, Gate};
use unaryqnn::dataio::{binarize, medmnist_dir, read_medmnist, DatasetKind, Task};
use unaryqnn::dense::dense_simulate;
use unaryqnn::dense::DenseState;
use unaryqnn::estimators::{crossover_dimension, signed_ip_circuit, EstimatorMode};
use unaryqnn::experiment::{
    run_experiment, ExperimentConfig, Hyperparameters, InferModeSpec, Method, TrainModeSpec,
};
use unaryqnn::loaders::{build_loader, compute_angles, load, LoaderTopology, TopologyKind};
use unaryqnn::orthonn::{
    loglog_slope, qpc_backward, scaling_benchmark, OrthoNet, ScalingConfig,
};
use unaryqnn::pyramid::{matrix_to_angles, param_count, OrthoMatrix, PyramidLayer};
use unaryqnn::qnn::{Mlp, TrainConfig};
use unaryqnn::unary::{run_circuit, sample_wire_counts};

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn require_archives() {
    assert!(
        medmnist_dir().is_some(),
        "set MEDMNIST_DIR to the directory holding pneumoniamnist.npz and retinamnist.npz"
    );
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / norm).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    unit(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

// --- criterion 1: benchmark table rows -----------------------------------

struct TableCell {
    name: &'static str,
    dataset: DatasetKind,
    method: Method,
    layers: &'static [usize],
    train_mode: TrainModeSpec,
    want_auc: Option<f64>,
    want_acc: Option<f64>,
}

fn benchmark_config(cell: &TableCell) -> ExperimentConfig {
    ExperimentConfig {
        name: cell.name.into(),
        dataset: cell.dataset,
        task: None,
        pca_k: Some(cell.layers[0]),
        method: cell.method,
        layers: cell.layers.to_vec(),
        train_mode: cell.train_mode,
        infer_mode: InferModeSpec::Exact,
        hyperparameters: Hyperparameters::default(),
        repetitions: 10,
        seed: 0,
        subsample_per_class: None,
        data_dir: None,
        output_dir: std::env::temp_dir().join("unaryqnn-acceptance"),
        save_models: false,
    }
}

#[test]
#[ignore = "needs MedMNIST archives; set MEDMNIST_DIR and run with --ignored"]
fn criterion_1_benchmark_table_rows_within_tolerance() {
    let _guard = serial();
    require_archives();
    use DatasetKind::{Pneumonia, Retina};
    use Method::{Orthonn, Qnn};
    let cells = [
        TableCell { name: "qnn-4-pneumonia", dataset: Pneumonia, method: Qnn, layers: &[4, 4, 2], train_mode: TrainModeSpec::Exact, want_auc: Some(0.91), want_acc: Some(0.84) },
        TableCell { name: "qnn-4-retina", dataset: Retina, method: Qnn, layers: &[4, 4, 2], train_mode: TrainModeSpec::Exact, want_auc: Some(0.75), want_acc: Some(0.73) },
        TableCell { name: "qnn-8-pneumonia", dataset: Pneumonia, method: Qnn, layers: &[8, 4, 2], train_mode: TrainModeSpec::Exact, want_auc: None, want_acc: Some(0.83) },
        TableCell { name: "qnn-8-retina", dataset: Retina, method: Qnn, layers: &[8, 4, 2], train_mode: TrainModeSpec::Exact, want_auc: Some(0.83), want_acc: Some(0.80) },
        TableCell { name: "orthonn-4-pneumonia", dataset: Pneumonia, method: Orthonn, layers: &[4, 2], train_mode: TrainModeSpec::Qpc, want_auc: Some(0.90), want_acc: Some(0.80) },
        TableCell { name: "orthonn-4-retina", dataset: Retina, method: Orthonn, layers: &[4, 2], train_mode: TrainModeSpec::Qpc, want_auc: None, want_acc: Some(0.71) },
        TableCell { name: "orthonn-8-retina", dataset: Retina, method: Orthonn, layers: &[8, 2], train_mode: TrainModeSpec::Qpc, want_auc: Some(0.84), want_acc: Some(0.79) },
        TableCell { name: "svb-4-pneumonia", dataset: Pneumonia, method: Orthonn, layers: &[4, 2], train_mode: TrainModeSpec::Svb, want_auc: None, want_acc: Some(0.80) },
    ];
    for cell in &cells {
        let started = Instant::now();
        let result = run_experiment(&benchmark_config(cell)).unwrap();
        let s = &result.summary;
        println!(
            "  {}: test auc {:.4} acc {:.4} ({:.0}s for 10 reps)",
            cell.name,
            s.test_auc_mean,
            s.test_acc_mean,
            started.elapsed().as_secs_f64()
        );
        if let Some(want) = cell.want_auc {
            assert!(
                (s.test_auc_mean - want).abs() <= 0.05,
                "{}: test AUC {:.4} not within 0.05 of {want}",
                cell.name,
                s.test_auc_mean
            );
        }
        if let Some(want) = cell.want_acc {
            assert!(
                (s.test_acc_mean - want).abs() <= 0.05,
                "{}: test ACC {:.4} not within 0.05 of {want}",
                cell.name,
                s.test_acc_mean
            );
        }
    }
    println!("criterion 1: PASS ({} benchmark cells within +-0.05)", cells.len());
}

// --- criterion 2: full-resolution network on the full training set -------

#[test]
#[ignore = "needs MedMNIST archives; set MEDMNIST_DIR and run with --ignored"]
fn criterion_2_large_network_accuracy() {
    let _guard = serial();
    require_archives();
    // the sanctioned scaled-down variant for slower machines: a balanced 10%
    // training subsample, same tolerances, reported as scaled-down
    let subsample = std::env::var("UNARYQNN_BIGSIM_SUBSAMPLE")
        .ok()
        .map(|v| v.parse::<usize>().expect("UNARYQNN_BIGSIM_SUBSAMPLE must be an integer"));
    let base = ExperimentConfig {
        name: "bigsim".into(),
        dataset: DatasetKind::Pneumonia,
        task: None,
        pca_k: None,
        method: Method::Qnn,
        layers: vec![784, 64, 2],
        train_mode: TrainModeSpec::Exact,
        infer_mode: InferModeSpec::Exact,
        hyperparameters: Hyperparameters::default(),
        repetitions: 3,
        seed: 0,
        subsample_per_class: subsample,
        data_dir: None,
        output_dir: std::env::temp_dir().join("unaryqnn-acceptance"),
        save_models: false,
    };
    if let Some(per_class) = subsample {
        println!("  scaled-down run: {per_class} training samples per class");
    }

    let exact = run_experiment(&base).unwrap();
    println!("  exact: test acc {:.4} (want 0.8365 +- 0.04)", exact.summary.test_acc_mean);
    assert!(
        (exact.summary.test_acc_mean - 0.8365).abs() <= 0.04,
        "exact-mode test ACC {:.4} not within 0.04 of 0.8365",
        exact.summary.test_acc_mean
    );

    let sampled_config = ExperimentConfig {
        name: "bigsim-sampled".into(),
        train_mode: TrainModeSpec::Sampled { n_shots: 400 },
        repetitions: 1,
        ..base
    };
    let started = Instant::now();
    let sampled = run_experiment(&sampled_config).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "  sampled(400): test acc {:.4} in {:.0}s (want 0.8077 +- 0.05, budget 7200s)",
        sampled.summary.test_acc_mean, elapsed
    );
    assert!(
        (sampled.summary.test_acc_mean - 0.8077).abs() <= 0.05,
        "sampled-mode test ACC {:.4} not within 0.05 of 0.8077",
        sampled.summary.test_acc_mean
    );
    assert!(elapsed <= 7200.0, "sampled run took {elapsed:.0}s, over the two-hour budget");
    println!("criterion 2: PASS");
}

// --- criterion 3: angle training vs the clipped-SGD baseline -------------

#[test]
#[ignore = "needs MedMNIST archives; set MEDMNIST_DIR and run with --ignored"]
fn criterion_3_qpc_beats_svb_on_wide_retina() {
    let _guard = serial();
    require_archives();
    let base = ExperimentConfig {
        name: "diffmodel-qpc".into(),
        dataset: DatasetKind::Retina,
        task: None,
        pca_k: Some(32),
        method: Method::Orthonn,
        layers: vec![32, 16, 2],
        train_mode: TrainModeSpec::Qpc,
        infer_mode: InferModeSpec::Exact,
        hyperparameters: Hyperparameters::default(),
        repetitions: 5,
        seed: 0,
        subsample_per_class: None,
        data_dir: None,
        output_dir: std::env::temp_dir().join("unaryqnn-acceptance"),
        save_models: false,
    };
    let qpc = run_experiment(&base).unwrap().summary.test_acc_mean;
    let svb_config = ExperimentConfig {
        name: "diffmodel-svb".into(),
        train_mode: TrainModeSpec::Svb,
        ..base
    };
    let svb = run_experiment(&svb_config).unwrap().summary.test_acc_mean;
    println!("  qpc test acc {qpc:.4}, svb test acc {svb:.4}");
    if svb <= 0.62 {
        assert!(qpc >= 0.70, "QPC test ACC {qpc:.4} below 0.70");
        println!("criterion 3: PASS (divergence reproduced: qpc {qpc:.4} vs svb {svb:.4})");
    } else {
        // graceful degradation: the baseline trained fine here, so only the
        // QPC accuracy target applies and the divergence is logged as not
        // reproduced
        assert!(
            (qpc - 0.7525).abs() <= 0.05,
            "QPC test ACC {qpc:.4} not within 0.05 of 0.7525"
        );
        println!(
            "criterion 3: PASS (divergence not reproduced: svb reached {svb:.4}; qpc {qpc:.4} within +-0.05 of 0.7525)"
        );
    }
}

// --- criterion 4: quadratic scaling of square-layer training -------------

#[test]
fn criterion_4_op_count_formula_and_quadratic_walltime() {
    let _guard = serial();
    let widths = [32usize, 64, 128, 256];
    let config = ScalingConfig::default();
    let started = Instant::now();
    let rows = scaling_benchmark(&widths, &config).unwrap();
    // one epoch-sample costs 0.5n^2 + 1.5n - 3 rotations per direction; the
    // constant in front is 2 * epochs * samples
    let c = 2 * config.epochs as u64 * config.n_samples as u64;
    for row in &rows {
        let n = row.n as u64;
        let want = c * (n * n + 3 * n - 6) / 2;
        assert_eq!(
            row.op_count, want,
            "op count for n={n}: got {}, formula gives {want}",
            row.op_count
        );
    }
    let slope = loglog_slope(&rows).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        (1.8..=2.2).contains(&slope),
        "wall-time log-log slope {slope:.3} outside [1.8, 2.2]"
    );
    assert!(elapsed <= 1800.0, "benchmark took {elapsed:.0}s, over the 30-minute budget");
    println!(
        "criterion 4: PASS (op counts exact, wall-time slope {slope:.3} in {elapsed:.1}s)"
    );
}

// --- criterion 5: shot-budget crossover dimension ------------------------

#[test]
fn criterion_5_crossover_dimension_in_expected_band() {
    let _guard = serial();
    // independent brute force: smallest n where shots * (2 ceil(log2 n) - 1)
    // undercuts the n classical multiply-adds
    let mut brute = None;
    for n in 2u64..20_000 {
        let mut depth = 0u64;
        let mut p = 1u64;
        while p < n {
            p *= 2;
            depth += 1;
        }
        if 400 * (2 * depth - 1) < n {
            brute = Some(n);
            break;
        }
    }
    let brute = brute.expect("crossover exists below 20000");
    let reported = crossover_dimension(400);
    assert_eq!(reported, brute, "closed form disagrees with brute force");
    assert!(
        (9_000..=12_000).contains(&reported),
        "crossover {reported} outside [9000, 12000]"
    );
    println!("criterion 5: PASS (crossover at n = {reported})");
}

// --- criterion 6: property suites ----------------------------------------

#[test]
fn criterion_6_loader_roundtrip_and_depth_formulas() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let kinds = [TopologyKind::Diagonal, TopologyKind::Parallel, TopologyKind::SemiDiagonal];
    let mut max_dev: f64 = 0.0;
    for kind in kinds {
        for d in 2..=32 {
            let topology = LoaderTopology::new(kind, d).unwrap();
            for _ in 0..1000 {
                let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                // sparse entries exercise the zero-amplitude branches
                for entry in v.iter_mut() {
                    if rng.random_range(0.0..1.0) < 0.2 {
                        *entry = 0.0;
                    }
                }
                if v.iter().all(|&a| a == 0.0) {
                    v[0] = 1.0;
                }
                let x = unit(&v);
                let state = load(&x, &topology).unwrap();
                for (got, want) in state.amp().iter().zip(&x) {
                    max_dev = max_dev.max((got - want).abs());
                }
            }
            let angles = compute_angles(&topology, &random_unit(&mut rng, d)).unwrap();
            let circuit = build_loader(&topology, &angles).unwrap();
            let rbs_gates = circuit
                .gates()
                .iter()
                .filter(|g| matches!(g, Gate::Rbs { .. }))
                .count();
            assert_eq!(rbs_gates, d - 1, "{kind:?} d={d}: rotation count");
            // depth() treats the hot-wire preparation as timestep 0, so the
            // split-depth formulas apply directly
            let rbs_depth = match kind {
                TopologyKind::Diagonal => d - 1,
                TopologyKind::Parallel => (usize::BITS - (d - 1).leading_zeros()) as usize,
                TopologyKind::SemiDiagonal => d.div_ceil(2),
            };
            assert_eq!(circuit.depth(), rbs_depth, "{kind:?} d={d}: circuit depth");
        }
    }
    assert!(max_dev <= 1e-12, "loader round-trip deviation {max_dev:.3e}");
    println!("criterion 6 (loaders): PASS (round-trip {max_dev:.3e}, formulas exact)");
}

#[test]
fn criterion_6_dense_oracle_equivalence() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(602);

    // random weight-preserving circuits, unary simulation vs full statevector
    let mut max_dev: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=12usize);
        let mut c = Circuit::new(n);
        c.push(Gate::XInit { qubit: rng.random_range(0..n) }).unwrap();
        for _ in 0..2 * n {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            c.push(Gate::Rbs { a, b, theta: rng.random_range(-3.0..3.0) }).unwrap();
        }
        let unary = run_circuit(&c, None).unwrap();
        let dense = dense_simulate(&c).unwrap();
        for (u, d) in unary.amp().iter().zip(dense.unary_amplitudes()) {
            max_dev = max_dev.max((u - d).abs());
        }
    }
    assert!(max_dev <= 1e-10, "unary vs dense deviation {max_dev:.3e}");

    // the sign-recovery circuit puts (1 - w.x)/2 on the first wire
    let mut ip_dev: f64 = 0.0;
    for kind in [TopologyKind::Diagonal, TopologyKind::Parallel, TopologyKind::SemiDiagonal] {
        for d in [2usize, 5, 11] {
            let x = random_unit(&mut rng, d);
            let w = random_unit(&mut rng, d);
            let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let dense = dense_simulate(&signed_ip_circuit(&x, &w, kind).unwrap()).unwrap();
            let got = dense.unary_amplitudes()[0];
            ip_dev = ip_dev.max((got - (1.0 - dot) / 2.0).abs());
        }
    }
    assert!(ip_dev <= 1e-10, "sign-recovery amplitude deviation {ip_dev:.3e}");

    // ancilla interference construction vs the closed-form joint distribution
    let mut dist_dev: f64 = 0.0;
    for nl in [4usize, 6] {
        let n_params = param_count(nl, nl).unwrap();
        let theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.5..1.5)).collect();
        let layer = PyramidLayer::new(nl, nl, theta).unwrap();
        let x = random_unit(&mut rng, nl);

        let topo = LoaderTopology::new(TopologyKind::Diagonal, nl).unwrap();
        let ax = compute_angles(&topo, &x).unwrap();
        let uniform = vec![1.0 / (nl as f64).sqrt(); nl];
        let au = compute_angles(&topo, &uniform).unwrap();
        let root = topo.root();

        let n = nl + 1;
        let mut c = Circuit::new(n);
        c.push(Gate::H { qubit: 0 }).unwrap();
        c.push(Gate::Cnot { control: 0, target: root + 1 }).unwrap();
        c.push(Gate::XInit { qubit: root + 1 }).unwrap();
        for (&(src, new), &t) in topo.splits().iter().zip(ax.theta()) {
            c.push(Gate::Rbs { a: src + 1, b: new + 1, theta: t }).unwrap();
        }
        for (&(upper, lower, _), &t) in layer.gate_plan().iter().zip(layer.theta()) {
            c.push(Gate::Rbs { a: lower + 1, b: upper + 1, theta: t }).unwrap();
        }
        c.push(Gate::Cnot { control: 0, target: root + 1 }).unwrap();
        for (&(src, new), &t) in topo.splits().iter().zip(au.theta()) {
            c.push(Gate::Cz { a: 0, b: src + 1 }).unwrap();
            c.push(Gate::Rbs { a: src + 1, b: new + 1, theta: -t / 2.0 }).unwrap();
            c.push(Gate::Cz { a: 0, b: src + 1 }).unwrap();
            c.push(Gate::Rbs { a: src + 1, b: new + 1, theta: t / 2.0 }).unwrap();
        }
        c.push(Gate::H { qubit: 0 }).unwrap();

        let probs = dense_simulate(&c).unwrap().probabilities();
        let dist = layer.inference_distribution(&x).unwrap();
        for j in 0..nl {
            let wire_bit = 1usize << (n - 1 - (j + 1));
            dist_dev = dist_dev.max((probs[wire_bit] - dist.p0[j]).abs());
            dist_dev = dist_dev.max((probs[(1 << (n - 1)) | wire_bit] - dist.p1[j]).abs());
        }
    }
    assert!(dist_dev <= 1e-10, "measured-distribution deviation {dist_dev:.3e}");

    println!(
        "criterion 6 (dense oracle): PASS (circuits {max_dev:.3e}, sign {ip_dev:.3e}, distribution {dist_dev:.3e})"
    );
}

#[test]
fn criterion_6_rbs_decomposition_unitary_equality() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(603);
    let mut max_dev: f64 = 0.0;
    let mut angles: Vec<f64> = (0..100).map(|_| rng.random_range(-3.2..3.2)).collect();
    angles.extend([0.0, std::f64::consts::PI, -std::f64::consts::FRAC_PI_2]);
    for theta in angles {
        let decomposed = decompose_rbs(theta);
        let matrix = rbs_matrix(theta);
        for col in 0..4 {
            let mut state = DenseState::basis(2, col).unwrap();
            state.apply_circuit(&decomposed).unwrap();
            for (row, &amp) in state.amp().iter().enumerate() {
                max_dev = max_dev.max((amp - matrix[row][col]).abs());
            }
        }
    }
    assert!(max_dev <= 1e-10, "decomposition deviation {max_dev:.3e}");
    println!("criterion 6 (decomposition): PASS (max deviation {max_dev:.3e})");
}

#[test]
fn criterion_6_orthogonal_matrix_roundtrips() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(604);
    let mut negative_det_cases = 0;
    for trial in 0..30 {
        let n = rng.random_range(3..=8usize);
        let n_params = param_count(n, n).unwrap();
        let theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(-3.0..3.0)).collect();
        let layer = PyramidLayer::new(n, n, theta).unwrap();
        let mut rows = layer.angles_to_matrix().rows().to_vec();
        // odd trials flip one row so both determinant signs are covered
        if trial % 2 == 1 {
            for v in &mut rows[0] {
                *v = -*v;
            }
        }
        let w = OrthoMatrix::new(rows).unwrap();
        assert!(w.orthogonality_deviation() <= 1e-10, "orthogonality broke at trial {trial}");
        let det = nalgebra::DMatrix::from_fn(n, n, |i, j| w.rows()[i][j]).determinant();
        assert!((det.abs() - 1.0).abs() <= 1e-8, "determinant {det} is not +-1");
        if det < 0.0 {
            negative_det_cases += 1;
        }
        let rebuilt = matrix_to_angles(&w).unwrap().angles_to_matrix();
        for (ra, rb) in w.rows().iter().zip(rebuilt.rows()) {
            for (a, b) in ra.iter().zip(rb) {
                assert!((a - b).abs() <= 1e-8, "round-trip deviation at trial {trial}");
            }
        }
    }
    assert!(negative_det_cases > 0, "no reflection cases were exercised");
    println!(
        "criterion 6 (orthogonal round-trip): PASS (30 trials, {negative_det_cases} with det = -1)"
    );
}

/// Recovers analytic gradients from a unit-rate update step, then compares
/// against central finite differences of the loss.
#[test]
fn criterion_6_gradients_match_finite_differences() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(605);

    // layered rotation network: probe angles directly
    let mut worst_qpc: f64 = 0.0;
    for sizes in [&[4usize, 2] as &[usize], &[8, 4, 2]] {
        let reference = OrthoNet::init(sizes, 9).unwrap();
        let xs: Vec<Vec<f64>> = (0..3).map(|_| random_unit(&mut rng, sizes[0])).collect();
        let ys = vec![0u8, 1, 1];
        let mut stepped = reference.clone();
        let mut cache = stepped.cache();
        qpc_backward(&mut stepped, &xs, &ys, 1.0, &mut cache).unwrap();
        for l in 0..reference.layers().len() {
            for k in 0..reference.layers()[l].theta().len() {
                let analytic =
                    reference.layers()[l].theta()[k] - stepped.layers()[l].theta()[k];
                let eps = 1e-5;
                let probe = |delta: f64| {
                    let mut net = reference.clone();
                    net.layers_mut()[l].theta_mut()[k] += delta;
                    let mut cache = net.cache();
                    qpc_backward(&mut net, &xs, &ys, 0.0, &mut cache).unwrap()
                };
                let numeric = (probe(eps) - probe(-eps)) / (2.0 * eps);
                worst_qpc = worst_qpc.max((analytic - numeric).abs() / numeric.abs().max(1e-4));
            }
        }
    }
    assert!(worst_qpc < 1e-5, "angle-gradient relative deviation {worst_qpc:.3e}");

    // estimator-backed network: probe weights through checkpoint surgery
    let perturbed = |net: &Mlp, layer: usize, row: usize, col: usize, delta: f64| -> Mlp {
        let mut dump: serde_json::Value = serde_json::from_str(&net.to_json()).unwrap();
        let w = dump["weights"][layer][row][col].as_f64().unwrap();
        dump["weights"][layer][row][col] = serde_json::json!(w + delta);
        Mlp::from_json(&dump.to_string()).unwrap()
    };
    let loss_of = |net: &Mlp, xs: &[Vec<f64>], ys: &[u8]| -> f64 {
        let mut probe = net.clone();
        let config = TrainConfig { learning_rate: 1e-300, ..TrainConfig::default() };
        let mut counter = 0;
        probe.backprop_step(xs, ys, &config, &mut counter).unwrap()
    };
    let net = Mlp::init(&[4, 3, 2], 12).unwrap();
    let xs: Vec<Vec<f64>> = (0..3).map(|_| random_unit(&mut rng, 4)).collect();
    let ys = vec![1u8, 0, 1];
    let mut stepped = net.clone();
    let config = TrainConfig { learning_rate: 1.0, ..TrainConfig::default() };
    let mut counter = 0;
    stepped.backprop_step(&xs, &ys, &config, &mut counter).unwrap();
    let mut worst_mlp: f64 = 0.0;
    for (l, layer) in net.weights().iter().enumerate() {
        for (i, row) in layer.iter().enumerate() {
            for j in 0..row.len() {
                let analytic = net.weights()[l][i][j] - stepped.weights()[l][i][j];
                let eps = 1e-6;
                let plus = loss_of(&perturbed(&net, l, i, j, eps), &xs, &ys);
                let minus = loss_of(&perturbed(&net, l, i, j, -eps), &xs, &ys);
                let numeric = (plus - minus) / (2.0 * eps);
                worst_mlp = worst_mlp.max((analytic - numeric).abs() / numeric.abs().max(1e-6));
            }
        }
    }
    assert!(worst_mlp < 1e-5, "weight-gradient relative deviation {worst_mlp:.3e}");
    println!(
        "criterion 6 (gradients): PASS (angles {worst_qpc:.3e}, weights {worst_mlp:.3e})"
    );
}

#[test]
fn criterion_6_sampled_estimator_concentration() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let x = random_unit(&mut rng, 4);
    // fix the overlap at 0.5 so the marginal probability is 1/4
    let raw = random_unit(&mut rng, 4);
    let parallel: f64 = raw.iter().zip(&x).map(|(a, b)| a * b).sum();
    let ortho = unit(
        &raw.iter().zip(&x).map(|(r, xi)| r - parallel * xi).collect::<Vec<_>>(),
    );
    let w: Vec<f64> =
        x.iter().zip(&ortho).map(|(xi, oi)| 0.5 * xi + (0.75f64).sqrt() * oi).collect();
    let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
    assert!((dot - 0.5).abs() < 1e-12);

    let circuit = signed_ip_circuit(&x, &w, TopologyKind::SemiDiagonal).unwrap();
    let state = run_circuit(&circuit, None).unwrap();

    // error scaling across five decades of shots, 30 trials each
    let budgets = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    let mut points = Vec::new();
    for (bi, &n_shots) in budgets.iter().enumerate() {
        let mut se = 0.0;
        for t in 0..30u64 {
            let counts = sample_wire_counts(&state, n_shots, 7_000 + 100 * bi as u64 + t);
            let p_hat = counts[0] as f64 / n_shots as f64;
            let value = 1.0 - 2.0 * p_hat.sqrt();
            se += (value - dot) * (value - dot);
        }
        points.push(((n_shots as f64).ln(), (se / 30.0).sqrt().ln()));
    }
    let n = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    assert!(
        (slope + 0.5).abs() <= 0.05,
        "error-vs-shots log-log slope {slope:.4} not within 0.05 of -0.5"
    );

    // raw outcome-probability spread at the 400-shot operating point
    let mut p_hats = Vec::with_capacity(300);
    for t in 0..300u64 {
        let counts = sample_wire_counts(&state, 400, 90_000 + t);
        p_hats.push(counts[0] as f64 / 400.0);
    }
    let mean = p_hats.iter().sum::<f64>() / p_hats.len() as f64;
    let std = (p_hats.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>()
        / (p_hats.len() - 1) as f64)
        .sqrt();
    assert!(std <= 0.025, "400-shot marginal std {std:.4} exceeds 0.025");
    println!(
        "criterion 6 (concentration): PASS (slope {slope:.3}, 400-shot std {std:.4})"
    );
}

#[test]
#[ignore = "needs MedMNIST archives; set MEDMNIST_DIR and run with --ignored"]
fn criterion_6_dataset_counts() {
    let _guard = serial();
    require_archives();
    let dir = medmnist_dir().unwrap();

    let pneumonia = read_medmnist(&DatasetKind::Pneumonia.archive_path(&dir)).unwrap();
    assert_eq!((pneumonia.train.n, pneumonia.test.n), (4708, 624));
    let counts = |labels: &[u8]| {
        let ones = labels.iter().filter(|&&l| l == 1).count();
        (labels.len() - ones, ones)
    };
    let train = binarize(&pneumonia.train.labels, Task::Binary).unwrap();
    let test = binarize(&pneumonia.test.labels, Task::Binary).unwrap();
    assert_eq!(counts(&train), (1214, 3494), "pneumonia train class split");
    assert_eq!(counts(&test), (234, 390), "pneumonia test class split");

    let retina = read_medmnist(&DatasetKind::Retina.archive_path(&dir)).unwrap();
    assert_eq!((retina.train.n, retina.test.n), (1080, 400));
    let train = binarize(&retina.train.labels, Task::ZeroVsRest).unwrap();
    let test = binarize(&retina.test.labels, Task::ZeroVsRest).unwrap();
    assert_eq!(counts(&train), (486, 594), "retina train class split");
    assert_eq!(counts(&test), (174, 226), "retina test class split");
    println!("criterion 6 (dataset counts): PASS");
}

// --- criterion 7: exact mode is the classical network --------------------

/// Independent reference network: same initialization and schedule contract,
/// implemented with plain loops and no estimator plumbing.
struct RefNet {
    w: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<f64>>,
}

impl RefNet {
    fn init(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Vec::new();
        let mut b = Vec::new();
        for pair in sizes.windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            w.push(
                (0..pair[1])
                    .map(|_| (0..pair[0]).map(|_| rng.random_range(-bound..bound)).collect())
                    .collect(),
            );
            b.push(vec![0.0; pair[1]]);
        }
        RefNet { w, b }
    }

    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut activations = vec![x.to_vec()];
        for (w, b) in self.w.iter().zip(&self.b) {
            let prev = activations.last().unwrap().clone();
            let a: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, bi)| {
                    let mut z: f64 = prev.iter().zip(row).map(|(ai, wi)| ai * wi).sum();
                    z += bi;
                    sigmoid(z)
                })
                .collect();
            activations.push(a);
        }
        activations
    }

    fn batch_step(&mut self, xs: &[Vec<f64>], ys: &[u8], lr: f64) -> f64 {
        let n_layers = self.w.len();
        let mut grad_w: Vec<Vec<Vec<f64>>> =
            self.w.iter().map(|w| w.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
        let mut grad_b: Vec<Vec<f64>> = self.b.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0;
        let transposes: Vec<Vec<Vec<f64>>> = self
            .w
            .iter()
            .map(|w| {
                (0..w[0].len())
                    .map(|j| (0..w.len()).map(|i| w[i][j]).collect())
                    .collect()
            })
            .collect();
        for (x, &y) in xs.iter().zip(ys) {
            let activations = self.forward(x);
            let out = activations.last().unwrap();
            let target = [if y == 0 { 1.0 } else { 0.0 }, if y == 1 { 1.0 } else { 0.0 }];
            for (a, t) in out.iter().zip(target) {
                let a = a.clamp(1e-12, 1.0 - 1e-12);
                loss -= t * a.ln() + (1.0 - t) * (1.0 - a).ln();
            }
            let mut delta: Vec<f64> = out.iter().zip(target).map(|(a, t)| a - t).collect();
            for l in (0..n_layers).rev() {
                let a_prev = &activations[l];
                for (gr, d) in grad_w[l].iter_mut().zip(&delta) {
                    for (g, ap) in gr.iter_mut().zip(a_prev) {
                        *g += d * ap;
                    }
                }
                for (g, d) in grad_b[l].iter_mut().zip(&delta) {
                    *g += d;
                }
                if l > 0 {
                    let back: Vec<f64> = transposes[l]
                        .iter()
                        .map(|row| delta.iter().zip(row).map(|(di, wi)| di * wi).sum())
                        .collect();
                    let a = &activations[l];
                    delta = back.iter().zip(a).map(|(bk, ai)| bk * ai * (1.0 - ai)).collect();
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        for g in grad_w.iter_mut().flatten().flatten() {
            *g *= scale;
        }
        for g in grad_b.iter_mut().flatten() {
            *g *= scale;
        }
        for (w, g) in self.w.iter_mut().flatten().flatten().zip(grad_w.iter().flatten().flatten()) {
            *w -= lr * g;
        }
        for (b, g) in self.b.iter_mut().flatten().zip(grad_b.iter().flatten()) {
            *b -= lr * g;
        }
        loss * scale
    }

    fn train(&mut self, xs: &[Vec<f64>], ys: &[u8], epochs: usize, batch: usize, lr: f64, seed: u64) -> Vec<f64> {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut losses = Vec::new();
        for _ in 0..epochs {
            for i in (1..order.len()).rev() {
                let j = shuffle_rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut loss_sum = 0.0;
            let mut seen = 0usize;
            for chunk in order.chunks(batch) {
                let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
                let by: Vec<u8> = chunk.iter().map(|&i| ys[i]).collect();
                loss_sum += self.batch_step(&bx, &by, lr) * bx.len() as f64;
                seen += bx.len();
            }
            losses.push(loss_sum / seen as f64);
        }
        losses
    }
}

#[test]
fn criterion_7_exact_mode_equals_classical_reference() {
    let _guard = serial();
    let shapes: [&[usize]; 3] = [&[4, 4, 2], &[8, 4, 2], &[6, 3, 2]];
    let seeds = [0u64, 1, 2, 3];
    let mut worst: f64 = 0.0;
    for sizes in shapes {
        for &seed in &seeds {
            let mut data_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0D0);
            let xs: Vec<Vec<f64>> = (0..36)
                .map(|_| (0..sizes[0]).map(|_| data_rng.random_range(-1.0..1.0)).collect())
                .collect();
            let ys: Vec<u8> = (0..36).map(|i| (i % 2) as u8).collect();

            let config = TrainConfig {
                epochs: 5,
                batch_size: 7,
                learning_rate: 0.3,
                mode: EstimatorMode::Exact,
                seed,
            };
            let mut net = Mlp::init(sizes, seed).unwrap();
            let history = net.train(&xs, &ys, None, &config).unwrap();

            let mut reference = RefNet::init(sizes, seed);
            let losses = reference.train(&xs, &ys, 5, 7, 0.3, seed);

            for (h, l) in history.iter().zip(&losses) {
                worst = worst.max((h.loss - l).abs());
            }
            for (lw, rw) in net.weights().iter().flatten().flatten().zip(
                reference.w.iter().flatten().flatten(),
            ) {
                worst = worst.max((lw - rw).abs());
            }
            for (lb, rb) in net.biases().iter().flatten().zip(reference.b.iter().flatten()) {
                worst = worst.max((lb - rb).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "exact mode diverged from the classical reference by {worst:.3e}");
    println!(
        "criterion 7: PASS (12 seed/shape runs, worst deviation {worst:.3e})"
    );
}
