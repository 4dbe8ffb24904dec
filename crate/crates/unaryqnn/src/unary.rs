//! Simulator restricted to the Hamming-weight-1 (unary) subspace.
//!
//! RBS gates preserve Hamming weight, so a circuit that starts in a one-hot
//! state only ever populates n amplitudes out of 2^n. This module tracks
//! exactly those n real amplitudes; everything else in the crate builds on it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};

/// Real amplitude vector over the unary basis e_1 .. e_n (amp[i] on wire i).
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryState {
    amp: Vec<f64>,
}

impl UnaryState {
    /// One-hot state e_{hot+1}.
    pub fn basis(n: usize, hot: usize) -> Result<Self> {
        if hot >= n {
            return Err(Error::QubitOutOfRange { index: hot, n_qubits: n });
        }
        let mut amp = vec![0.0; n];
        amp[hot] = 1.0;
        Ok(UnaryState { amp })
    }

    /// Wraps an explicit amplitude vector; must be unit norm to 1e-6.
    pub fn from_amplitudes(amp: Vec<f64>) -> Result<Self> {
        if amp.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if amp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("unary amplitude".into()));
        }
        let norm = amp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "amplitude vector has norm {norm}, expected 1"
            )));
        }
        Ok(UnaryState { amp })
    }

    pub fn n(&self) -> usize {
        self.amp.len()
    }

    pub fn amp(&self) -> &[f64] {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Measurement probabilities amp[i]^2.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amp.iter().map(|v| v * v).collect()
    }

    /// Applies RBS(a, b, theta) in place: wire `a` is the |10> role, so
    /// amp[b] <- cos*amp[b] + sin*amp[a] and amp[a] <- cos*amp[a] - sin*amp[b].
    pub fn apply_rbs(&mut self, a: usize, b: usize, theta: f64) -> Result<()> {
        let n = self.amp.len();
        if a >= n {
            return Err(Error::QubitOutOfRange { index: a, n_qubits: n });
        }
        if b >= n {
            return Err(Error::QubitOutOfRange { index: b, n_qubits: n });
        }
        if a == b {
            return Err(Error::DuplicateQubit(a));
        }
        let (s, c) = theta.sin_cos();
        let (va, vb) = (self.amp[a], self.amp[b]);
        self.amp[b] = c * vb + s * va;
        self.amp[a] = c * va - s * vb;
        Ok(())
    }
}

/// Runs a circuit of {XInit, RBS} gates in the unary subspace.
///
/// With `initial = None` the register starts in vacuum and the circuit must
/// contain exactly one XInit before any RBS; with an explicit initial state
/// any XInit is rejected, since a second excitation leaves the subspace.
/// Gates outside the native set are rejected rather than approximated.
pub fn run_circuit(c: &Circuit, initial: Option<&UnaryState>) -> Result<UnaryState> {
    let mut state = match initial {
        Some(s) => {
            if s.n() != c.n_qubits() {
                return Err(Error::DimensionMismatch { expected: c.n_qubits(), got: s.n() });
            }
            Some(s.clone())
        }
        None => None,
    };
    let explicit_initial = initial.is_some();
    for gate in c.gates() {
        match *gate {
            Gate::XInit { qubit } => {
                if state.is_some() {
                    let reason = if explicit_initial {
                        "XInit on an already-initialized register"
                    } else {
                        "second XInit raises Hamming weight to 2"
                    };
                    return Err(Error::LeavesUnarySubspace(reason.into()));
                }
                state = Some(UnaryState::basis(c.n_qubits(), qubit)?);
            }
            Gate::Rbs { a, b, theta } => match state.as_mut() {
                Some(s) => s.apply_rbs(a, b, theta)?,
                None => {
                    return Err(Error::LeavesUnarySubspace(
                        "RBS before any excitation; register still in vacuum".into(),
                    ));
                }
            },
            Gate::H { .. } | Gate::Ry { .. } => {
                return Err(Error::UnsupportedGate("single-qubit rotations leave the unary subspace"));
            }
            Gate::Cz { .. } | Gate::Cnot { .. } => {
                return Err(Error::UnsupportedGate("entanglers outside the RBS set are not tracked"));
            }
        }
    }
    state.ok_or_else(|| Error::LeavesUnarySubspace("circuit never excites the register".into()))
}

/// Measured bitstrings with their counts.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeCounts {
    counts: BTreeMap<String, u64>,
    total_shots: u64,
}

impl OutcomeCounts {
    pub fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let total_shots = counts.values().sum();
        OutcomeCounts { counts, total_shots }
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total_shots(&self) -> u64 {
        self.total_shots
    }

    /// Shots whose bit at `qubit` measured `one` (marginalizing the rest).
    pub fn marginal_count(&self, qubit: usize, one: bool) -> Result<u64> {
        let want = if one { b'1' } else { b'0' };
        let mut total = 0;
        for (bits, &count) in &self.counts {
            let byte = bits
                .as_bytes()
                .get(qubit)
                .ok_or_else(|| Error::BadBitstring(bits.clone()))?;
            if !matches!(byte, b'0' | b'1') {
                return Err(Error::BadBitstring(bits.clone()));
            }
            if *byte == want {
                total += count;
            }
        }
        Ok(total)
    }
}

/// Drops every outcome whose Hamming weight is not 1. On noiseless simulator
/// output this is the identity; it exists so shot pipelines keep working if a
/// noise source is ever added upstream.
pub fn postselect_unary(counts: &OutcomeCounts) -> Result<OutcomeCounts> {
    let kept: BTreeMap<String, u64> = counts
        .counts
        .iter()
        .filter(|(bits, _)| bits.bytes().filter(|&b| b == b'1').count() == 1)
        .map(|(bits, &c)| (bits.clone(), c))
        .collect();
    let result = OutcomeCounts::from_counts(kept);
    if result.total_shots == 0 {
        return Err(Error::EmptyPostselection);
    }
    Ok(result)
}

/// Multinomial draw: `out[i]` counts how often category `i` was sampled.
/// Deterministic given the seed.
pub(crate) fn multinomial_counts(probs: &[f64], n_shots: u64, seed: u64) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p / total;
        cumulative.push(acc);
    }
    // one stream per call keeps draws independent without shared state
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..n_shots {
        let u: f64 = rng.random();
        let idx = cumulative.partition_point(|&c| c < u).min(probs.len() - 1);
        counts[idx] += 1;
    }
    counts
}

/// Per-wire hit counts from measuring `state` `n_shots` times. This is the
/// allocation-free core of [`sample_outcomes`] for callers that only need
/// marginals on unary outcomes.
pub fn sample_wire_counts(state: &UnaryState, n_shots: u64, seed: u64) -> Vec<u64> {
    multinomial_counts(&state.probabilities(), n_shots, seed)
}

/// Samples full bitstrings. In the noiseless simulator every outcome is a
/// one-hot string, so this wraps [`sample_wire_counts`] with key formatting.
pub fn sample_outcomes(state: &UnaryState, n_shots: u64, seed: u64) -> OutcomeCounts {
    let wire_counts = sample_wire_counts(state, n_shots, seed);
    let n = state.n();
    let mut counts = BTreeMap::new();
    for (wire, &c) in wire_counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut bits = vec![b'0'; n];
        bits[wire] = b'1';
        counts.insert(String::from_utf8(bits).expect("ascii"), c);
    }
    OutcomeCounts::from_counts(counts)
}
