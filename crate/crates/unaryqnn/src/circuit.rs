//! Gate and circuit types shared by loaders, estimators and pyramid layers.
//!
//! Wire-order convention, inherited by every module: in `RBS(a, b, theta)` wire `a`
//! plays the |10> role and wire `b` the |01> role of the 4x4 matrix [`rbs_matrix`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Folds an angle into the canonical branch (-pi, pi].
pub fn canonicalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::TAU);
    if t > std::f64::consts::PI {
        t - std::f64::consts::TAU
    } else {
        t
    }
}

/// One circuit gate. `XInit` and `Rbs` are the native set; the rest appear only in
/// decomposed or verification circuits and are rejected by the unary simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    XInit { qubit: usize },
    Rbs { a: usize, b: usize, theta: f64 },
    H { qubit: usize },
    Ry { qubit: usize, theta: f64 },
    Cz { a: usize, b: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    /// Qubits the gate acts on (one or two).
    pub fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::XInit { qubit } | Gate::H { qubit } | Gate::Ry { qubit, .. } => (qubit, None),
            Gate::Rbs { a, b, .. } | Gate::Cz { a, b } => (a, Some(b)),
            Gate::Cnot { control, target } => (control, Some(target)),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Gate::XInit { .. } => "x",
            Gate::Rbs { .. } => "rbs",
            Gate::H { .. } => "h",
            Gate::Ry { .. } => "ry",
            Gate::Cz { .. } => "cz",
            Gate::Cnot { .. } => "cnot",
        }
    }
}

/// Ordered gate list on a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Appends a gate after checking its qubit indices.
    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let (q0, q1) = gate.qubits();
        for q in std::iter::once(q0).chain(q1) {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits: self.n_qubits });
            }
        }
        if let Some(q1) = q1 {
            if q0 == q1 {
                return Err(Error::DuplicateQubit(q0));
            }
        }
        if let Gate::Rbs { theta, .. } | Gate::Ry { theta, .. } = gate {
            if !theta.is_finite() {
                return Err(Error::NonFinite(format!("gate angle {theta}")));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    /// Appends all gates of `other`, which must act on the same register width.
    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, got: other.n_qubits });
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    /// Circuit depth by greedy layering: each gate occupies its wires for one
    /// timestep, gates on disjoint wires share a timestep. `XInit` counts as
    /// state preparation at timestep 0 and is excluded, which is what makes the
    /// diagonal loader for d wires depth d-1 rather than d.
    pub fn depth(&self) -> usize {
        let mut busy = vec![0usize; self.n_qubits];
        let mut depth = 0;
        for gate in &self.gates {
            if matches!(gate, Gate::XInit { .. }) {
                continue;
            }
            let (q0, q1) = gate.qubits();
            let mut t = busy[q0];
            if let Some(q1) = q1 {
                t = t.max(busy[q1]);
            }
            t += 1;
            busy[q0] = t;
            if let Some(q1) = q1 {
                busy[q1] = t;
            }
            depth = depth.max(t);
        }
        depth
    }

    pub fn to_json(&self) -> String {
        let dump = CircuitDump {
            n_qubits: self.n_qubits,
            gates: self
                .gates
                .iter()
                .map(|g| {
                    let (q0, q1) = g.qubits();
                    GateDump {
                        kind: g.kind_name().to_string(),
                        qubits: std::iter::once(q0).chain(q1).collect(),
                        theta: match *g {
                            Gate::Rbs { theta, .. } | Gate::Ry { theta, .. } => Some(theta),
                            _ => None,
                        },
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("circuit dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: CircuitDump = serde_json::from_str(text)?;
        let mut c = Circuit::new(dump.n_qubits);
        for g in dump.gates {
            let bad = || Error::InvalidConfig(format!("bad gate record {:?}/{:?}", g.kind, g.qubits));
            let gate = match (g.kind.as_str(), g.qubits.as_slice(), g.theta) {
                ("x", &[q], None) => Gate::XInit { qubit: q },
                ("h", &[q], None) => Gate::H { qubit: q },
                ("ry", &[q], Some(theta)) => Gate::Ry { qubit: q, theta },
                ("rbs", &[a, b], Some(theta)) => Gate::Rbs { a, b, theta },
                ("cz", &[a, b], None) => Gate::Cz { a, b },
                ("cnot", &[c, t], None) => Gate::Cnot { control: c, target: t },
                _ => return Err(bad()),
            };
            c.push(gate)?;
        }
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
struct GateDump {
    kind: String,
    qubits: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CircuitDump {
    n_qubits: usize,
    gates: Vec<GateDump>,
}

/// The RBS gate matrix in basis order |00>, |01>, |10>, |11>:
/// identity on |00>/|11>, and [[cos, sin], [-sin, cos]] on the (|01>, |10>) block.
pub fn rbs_matrix(theta: f64) -> [[f64; 4]; 4] {
    let (s, c) = theta.sin_cos();
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, s, 0.0],
        [0.0, -s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Decomposes RBS(theta) on wires (0, 1) into {H, Ry, CZ}: Hadamard conjugation
/// around Ry(+-theta) rotations separated by two CZ entanglers. The composition
/// equals [`rbs_matrix`] exactly (no global phase is introduced); wire 0 is the
/// |10>-role wire and carries Ry(+theta).
pub fn decompose_rbs(theta: f64) -> Circuit {
    let mut c = Circuit::new(2);
    for gate in [
        Gate::H { qubit: 0 },
        Gate::H { qubit: 1 },
        Gate::Cz { a: 0, b: 1 },
        Gate::Ry { qubit: 0, theta },
        Gate::Ry { qubit: 1, theta: -theta },
        Gate::Cz { a: 0, b: 1 },
        Gate::H { qubit: 0 },
        Gate::H { qubit: 1 },
    ] {
        c.push(gate).expect("static template is well-formed");
    }
    c
}
