//! Inner-product estimation circuits and the matrix-vector service built on
//! them.
//!
//! The square circuit (loader then adjoint loader) exposes (w.x)^2 as the
//! probability of finding the excitation back on the root wire; the signed
//! circuit adds an ancilla wire and a pair of pi/4 beam splitters so that the
//! probability of the designated outcome becomes ((1 - w.x)/2)^2, from which
//! the signed product is recovered as 1 - 2*sqrt(p). Norms are tracked
//! classically and multiplied back after estimation.

use std::f64::consts::FRAC_PI_4;

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::loaders::{compute_angles, LoaderTopology, TopologyKind};
use crate::unary::{run_circuit, sample_wire_counts};

pub const DEFAULT_SHOTS: u64 = 400;

/// How an estimator evaluates its circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Closed-form probabilities; numerically identical to classical math.
    Exact,
    /// Finite-shot simulation, deterministic given the seed.
    Sampled { n_shots: u64, seed: u64 },
}

impl EstimatorMode {
    /// Sampled mode at the 400-shot operating point used throughout.
    pub fn sampled_default(seed: u64) -> Self {
        EstimatorMode::Sampled { n_shots: DEFAULT_SHOTS, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpEstimate {
    pub value: f64,
    pub mode: EstimatorMode,
    /// Shots surviving postselection (0 in exact mode and on short-circuits).
    pub shots_used: u64,
}

fn check_unit(v: &[f64], what: &str) -> Result<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!("{what} must be unit norm, got {norm}")));
    }
    Ok(norm)
}

/// Loader for x followed by the adjoint loader for w on the same wires. The
/// final amplitude on the root wire is exactly w.x, so measuring the root
/// gives outcome probability (w.x)^2.
pub fn square_ip_circuit(
    x_hat: &[f64],
    w_hat: &[f64],
    kind: TopologyKind,
) -> Result<Circuit> {
    if x_hat.len() != w_hat.len() {
        return Err(Error::DimensionMismatch { expected: x_hat.len(), got: w_hat.len() });
    }
    check_unit(x_hat, "x")?;
    check_unit(w_hat, "w")?;
    let topo = LoaderTopology::new(kind, x_hat.len())?;
    let ax = compute_angles(&topo, x_hat)?;
    let aw = compute_angles(&topo, w_hat)?;
    let mut c = crate::loaders::build_loader(&topo, &ax)?;
    c.append(&crate::loaders::adjoint_loader(&topo, &aw)?)?;
    Ok(c)
}

/// Signed variant on d+1 wires. Wire 0 is the ancilla; the loader pair lives
/// on wires 1..=d with its XInit elided, because the excitation arrives
/// through the first pi/4 splitter. The splitter attaches to the topology's
/// root wire (shifted by one), so any loader shape works unchanged. The
/// probability of the excitation ending on wire 0 is ((1 - w.x)/2)^2, which
/// is in [0, 1] for any pair of unit vectors.
pub fn signed_ip_circuit(
    x_hat: &[f64],
    w_hat: &[f64],
    kind: TopologyKind,
) -> Result<Circuit> {
    if x_hat.len() != w_hat.len() {
        return Err(Error::DimensionMismatch { expected: x_hat.len(), got: w_hat.len() });
    }
    check_unit(x_hat, "x")?;
    check_unit(w_hat, "w")?;
    let d = x_hat.len();
    let topo = LoaderTopology::new(kind, d)?;
    let ax = compute_angles(&topo, x_hat)?;
    let aw = compute_angles(&topo, w_hat)?;
    let split_wire = topo.root() + 1;

    let mut c = Circuit::new(d + 1);
    c.push(Gate::XInit { qubit: 0 })?;
    c.push(Gate::Rbs { a: 0, b: split_wire, theta: FRAC_PI_4 })?;
    for (&(src, new), &theta) in topo.splits().iter().zip(ax.theta()) {
        c.push(Gate::Rbs { a: src + 1, b: new + 1, theta })?;
    }
    for (&(src, new), &theta) in topo.splits().iter().zip(aw.theta()).rev() {
        c.push(Gate::Rbs { a: src + 1, b: new + 1, theta: -theta })?;
    }
    c.push(Gate::Rbs { a: 0, b: split_wire, theta: FRAC_PI_4 })?;
    Ok(c)
}

/// Estimates w.x with the semi-diagonal topology (the hardware-friendly
/// default); see [`estimate_ip_with`] to inject another topology.
pub fn estimate_ip(x: &[f64], w: &[f64], mode: EstimatorMode) -> Result<IpEstimate> {
    estimate_ip_with(x, w, TopologyKind::SemiDiagonal, mode)
}

pub fn estimate_ip_with(
    x: &[f64],
    w: &[f64],
    kind: TopologyKind,
    mode: EstimatorMode,
) -> Result<IpEstimate> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: w.len() });
    }
    let norm_x = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let norm_w = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm_x.is_finite() && norm_w.is_finite()) {
        return Err(Error::NonFinite("estimator input".into()));
    }
    // zero-norm inputs have a zero product; no circuit is built
    if norm_x == 0.0 || norm_w == 0.0 {
        return Ok(IpEstimate { value: 0.0, mode, shots_used: 0 });
    }
    match mode {
        EstimatorMode::Exact => {
            // closed form: the designated amplitude is (1 - w.x)/2, and
            // inverting it reproduces the dot product exactly
            let value: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            Ok(IpEstimate { value, mode, shots_used: 0 })
        }
        EstimatorMode::Sampled { n_shots, seed } => {
            if n_shots == 0 {
                return Err(Error::InvalidConfig("sampled mode needs at least one shot".into()));
            }
            let x_hat: Vec<f64> = x.iter().map(|a| a / norm_x).collect();
            let w_hat: Vec<f64> = w.iter().map(|a| a / norm_w).collect();
            let circuit = signed_ip_circuit(&x_hat, &w_hat, kind)?;
            let state = run_circuit(&circuit, None)?;
            // Noiseless simulation only emits weight-1 outcomes, so per-wire
            // counts already are the postselected tally; a test pins this
            // against the explicit bitstring + postselect_unary route.
            let counts = sample_wire_counts(&state, n_shots, seed);
            let shots_used: u64 = counts.iter().sum();
            if shots_used == 0 {
                return Err(Error::EmptyPostselection);
            }
            let p_hat = (counts[0] as f64 / shots_used as f64).clamp(0.0, 1.0);
            let value = norm_x * norm_w * (1.0 - 2.0 * p_hat.sqrt());
            Ok(IpEstimate { value, mode, shots_used })
        }
    }
}

/// Mixes (run_seed, row, call) into an independent per-row stream seed, so a
/// matvec is reproducible no matter how its rows are scheduled.
pub fn derive_seed(run_seed: u64, row: u64, call: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let h = mix(run_seed ^ row.wrapping_add(0x9E37_79B9_7F4A_7C15));
    mix(h ^ call.wrapping_add(0xD1B5_4A32_D192_ED03))
}

/// One estimate per row of `rows`. `call_counter` distinguishes successive
/// matvecs inside one training run; it is part of the seed derivation, not
/// hidden state.
pub fn estimate_matvec(
    rows: &[Vec<f64>],
    x: &[f64],
    mode: EstimatorMode,
    call_counter: u64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len());
    for (j, row) in rows.iter().enumerate() {
        if row.len() != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: row.len() });
        }
        let row_mode = match mode {
            EstimatorMode::Exact => EstimatorMode::Exact,
            EstimatorMode::Sampled { n_shots, seed } => EstimatorMode::Sampled {
                n_shots,
                seed: derive_seed(seed, j as u64, call_counter),
            },
        };
        out.push(estimate_ip(x, row, row_mode)?.value);
    }
    Ok(out)
}

fn ceil_log2(n: u64) -> u64 {
    debug_assert!(n >= 1);
    (u64::BITS - (n - 1).leading_zeros()) as u64
}

/// Elementary steps for one sampled inner product on an n-dimensional input:
/// each shot pays the parallel-loader depth twice minus the shared timestep.
pub fn quantum_step_count(n: u64, n_shots: u64) -> u64 {
    n_shots * (2 * ceil_log2(n) - 1)
}

/// Elementary multiply-adds for the classical inner product.
pub fn classical_step_count(n: u64) -> u64 {
    n
}

/// Smallest dimension where the sampled circuit beats the classical loop.
pub fn crossover_dimension(n_shots: u64) -> u64 {
    for k in 1..u64::BITS as u64 {
        let lo = (1u64 << (k - 1)) + 1;
        let hi = 1u64 << k;
        let lo = if k == 1 { 2 } else { lo };
        let threshold = n_shots * (2 * k - 1);
        let candidate = lo.max(threshold + 1);
        if candidate <= hi {
            return candidate;
        }
    }
    unreachable!("crossover exists for any shot count below 2^63")
}
