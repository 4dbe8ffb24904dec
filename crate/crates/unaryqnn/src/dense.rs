//! Brute-force 2^n state-vector simulator used as a verification oracle.
//!
//! All gates in scope are real orthogonal, so amplitudes stay in f64. Qubit 0
//! is the most significant bit of the basis index: bit(q) = (i >> (n-1-q)) & 1,
//! which makes the unary state e_{j+1} the dense index 1 << (n-1-j).

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};

pub const MAX_DENSE_QUBITS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n: usize,
    amp: Vec<f64>,
}

impl DenseState {
    pub fn vacuum(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    /// Computational basis state by index (big-endian per the module header).
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        if n > MAX_DENSE_QUBITS {
            return Err(Error::TooManyQubits(n));
        }
        if index >= 1 << n {
            return Err(Error::QubitOutOfRange { index, n_qubits: n });
        }
        let mut amp = vec![0.0; 1 << n];
        amp[index] = 1.0;
        Ok(DenseState { n, amp })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amp(&self) -> &[f64] {
        &self.amp
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amp.iter().map(|v| v * v).collect()
    }

    pub fn norm(&self) -> f64 {
        self.amp.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Amplitudes on the unary coordinates e_1 .. e_n, in wire order.
    pub fn unary_amplitudes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.amp[1 << (self.n - 1 - j)]).collect()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n - 1 - qubit)
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        let (q0, q1) = gate.qubits();
        for q in std::iter::once(q0).chain(q1) {
            if q >= self.n {
                return Err(Error::QubitOutOfRange { index: q, n_qubits: self.n });
            }
        }
        let dim = self.amp.len();
        match *gate {
            Gate::XInit { qubit } => {
                let m = self.mask(qubit);
                for i in 0..dim {
                    if i & m == 0 {
                        self.amp.swap(i, i | m);
                    }
                }
            }
            Gate::H { qubit } => {
                let m = self.mask(qubit);
                let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                for i in 0..dim {
                    if i & m == 0 {
                        let (a, b) = (self.amp[i], self.amp[i | m]);
                        self.amp[i] = (a + b) * inv_sqrt2;
                        self.amp[i | m] = (a - b) * inv_sqrt2;
                    }
                }
            }
            Gate::Ry { qubit, theta } => {
                let m = self.mask(qubit);
                let (s, c) = (theta / 2.0).sin_cos();
                for i in 0..dim {
                    if i & m == 0 {
                        let (a, b) = (self.amp[i], self.amp[i | m]);
                        self.amp[i] = c * a - s * b;
                        self.amp[i | m] = s * a + c * b;
                    }
                }
            }
            Gate::Cz { a, b } => {
                let m = self.mask(a) | self.mask(b);
                for i in 0..dim {
                    if i & m == m {
                        self.amp[i] = -self.amp[i];
                    }
                }
            }
            Gate::Cnot { control, target } => {
                let cm = self.mask(control);
                let tm = self.mask(target);
                for i in 0..dim {
                    if i & cm != 0 && i & tm == 0 {
                        self.amp.swap(i, i | tm);
                    }
                }
            }
            Gate::Rbs { a, b, theta } => {
                if a == b {
                    return Err(Error::DuplicateQubit(a));
                }
                let am = self.mask(a);
                let bm = self.mask(b);
                let (s, c) = theta.sin_cos();
                for i in 0..dim {
                    // i has a=0, b=1; partner has a=1, b=0
                    if i & am == 0 && i & bm != 0 {
                        let j = i ^ am ^ bm;
                        let (v01, v10) = (self.amp[i], self.amp[j]);
                        self.amp[i] = c * v01 + s * v10;
                        self.amp[j] = c * v10 - s * v01;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply_circuit(&mut self, c: &Circuit) -> Result<()> {
        if c.n_qubits() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: c.n_qubits() });
        }
        for gate in c.gates() {
            self.apply_gate(gate)?;
        }
        Ok(())
    }
}

/// Evolves vacuum through the whole circuit with exact gate matrices.
pub fn dense_simulate(c: &Circuit) -> Result<DenseState> {
    let mut state = DenseState::vacuum(c.n_qubits())?;
    state.apply_circuit(c)?;
    Ok(state)
}
