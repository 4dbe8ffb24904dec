//! Orthogonal pyramid layers: nearest-neighbor rotation circuits whose unary
//! restriction realizes an n_out x n_in orthogonal matrix.
//!
//! The gate plan is a diamond of wire pairs (i, i+1); each gate applies
//! [[cos, sin], [-sin, cos]] to (v_i, v_{i+1}), the Eq-convention rotation with
//! the upper wire in the first slot. Truncated (rectangular) layers keep only
//! the gates that can influence the designated output wires 0..n_out, which is
//! exactly (2*n_in - 1 - n_out)*n_out/2 of them, matching the degrees of
//! freedom of an orthogonal rectangular matrix.

use serde::{Deserialize, Serialize};

use crate::circuit::canonicalize_angle;
use crate::error::{Error, Result};
use crate::estimators::EstimatorMode;
use crate::unary::multinomial_counts;

/// Degrees of freedom of an n_out x n_in matrix with orthonormal rows; equals
/// the truncated pyramid's gate count.
pub fn param_count(n_in: usize, n_out: usize) -> Result<usize> {
    if n_out == 0 || n_out > n_in {
        return Err(Error::BadLayerDims { n_in, n_out });
    }
    Ok((2 * n_in - 1 - n_out) * n_out / 2)
}

/// Full square pyramid: a diamond with its apex on the bottom wire pair,
/// timesteps 1 ..= 2n-3, sorted by (timestep, upper wire).
fn diamond_plan(n: usize) -> Vec<(usize, usize, usize)> {
    let mut plan = Vec::new();
    if n < 2 {
        return plan;
    }
    for t in 1..=(2 * n - 3) {
        for i in 0..n - 1 {
            if i <= (t - 1).min(2 * n - 3 - t) && i % 2 == (t - 1) % 2 {
                plan.push((n - 2 - i, n - 1 - i, t));
            }
        }
    }
    plan.sort_by_key(|&(upper, _, t)| (t, upper));
    plan
}

/// Keeps the gates that can reach a designated output wire, scanning backwards
/// from the wires 0..n_out.
fn truncate_plan(
    plan: &[(usize, usize, usize)],
    n: usize,
    n_out: usize,
) -> Vec<(usize, usize, usize)> {
    let mut reach: Vec<bool> = (0..n).map(|w| w < n_out).collect();
    let mut kept_rev = Vec::new();
    for &(a, b, t) in plan.iter().rev() {
        if reach[a] || reach[b] {
            kept_rev.push((a, b, t));
            reach[a] = true;
            reach[b] = true;
        }
    }
    kept_rev.reverse();
    kept_rev
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLayer {
    n_in: usize,
    n_out: usize,
    theta: Vec<f64>,
    row_signs: Vec<f64>,
    plan: Vec<(usize, usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct LayerDump {
    n_in: usize,
    n_out: usize,
    theta: Vec<f64>,
    row_signs: Vec<f64>,
}

impl PyramidLayer {
    /// Layer with all-positive row signs.
    pub fn new(n_in: usize, n_out: usize, theta: Vec<f64>) -> Result<Self> {
        let signs = vec![1.0; n_out];
        Self::from_parts(n_in, n_out, theta, signs)
    }

    pub fn from_parts(
        n_in: usize,
        n_out: usize,
        theta: Vec<f64>,
        row_signs: Vec<f64>,
    ) -> Result<Self> {
        let expected = param_count(n_in, n_out)?;
        if theta.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: theta.len() });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("layer angle".into()));
        }
        if row_signs.len() != n_out {
            return Err(Error::DimensionMismatch { expected: n_out, got: row_signs.len() });
        }
        let mut signs = Vec::with_capacity(n_out);
        for &s in &row_signs {
            if (s.abs() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!("row sign {s} is not +-1")));
            }
            signs.push(s.signum());
        }
        let plan = truncate_plan(&diamond_plan(n_in), n_in, n_out);
        debug_assert_eq!(plan.len(), expected);
        Ok(PyramidLayer { n_in, n_out, theta, row_signs: signs, plan })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Result<Self> {
        let count = param_count(n_in, n_out)?;
        Self::new(n_in, n_out, vec![0.0; count])
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn row_signs(&self) -> &[f64] {
        &self.row_signs
    }

    /// Gates as (upper_wire, lower_wire, timestep); lower_wire = upper_wire+1.
    pub fn gate_plan(&self) -> &[(usize, usize, usize)] {
        &self.plan
    }

    fn apply_plan(&self, v: &mut [f64]) {
        for (&(a, b, _), &theta) in self.plan.iter().zip(&self.theta) {
            let (s, c) = theta.sin_cos();
            let (va, vb) = (v[a], v[b]);
            v[a] = c * va + s * vb;
            v[b] = c * vb - s * va;
        }
    }

    /// Rotates a working copy of x through the plan and reads the designated
    /// wires; one 2x2 rotation per parameter, O(n^2) total.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_counted(x)?.0)
    }

    /// forward plus the number of rotation operations spent.
    pub fn forward_counted(&self, x: &[f64]) -> Result<(Vec<f64>, usize)> {
        if x.len() != self.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_in, got: x.len() });
        }
        let mut v = x.to_vec();
        self.apply_plan(&mut v);
        let out = (0..self.n_out).map(|j| self.row_signs[j] * v[j]).collect();
        Ok((out, self.plan.len()))
    }

    /// Full n_in x n_in rotation product with row signs folded into the
    /// designated rows (sign +1 elsewhere). Rows are orthonormal.
    fn full_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_in;
        let mut m: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        for (&(a, b, _), &theta) in self.plan.iter().zip(&self.theta) {
            let (s, c) = theta.sin_cos();
            for col in 0..n {
                let (ra, rb) = (m[a][col], m[b][col]);
                m[a][col] = c * ra + s * rb;
                m[b][col] = c * rb - s * ra;
            }
        }
        for (j, &sign) in self.row_signs.iter().enumerate() {
            if sign < 0.0 {
                for v in &mut m[j] {
                    *v = -*v;
                }
            }
        }
        m
    }

    /// The realized weight matrix: designated rows of the rotation product.
    pub fn angles_to_matrix(&self) -> OrthoMatrix {
        let full = self.full_matrix();
        OrthoMatrix { rows: full.into_iter().take(self.n_out).collect() }
    }

    /// Joint distribution of the sign-recovery measurement: an ancilla bit b
    /// and the hot unary wire j, with Pr[b, e_j] = (1/4)(W_j.x -+ 1/sqrt(n))^2
    /// over all n_in wires (non-designated rows count with sign +1). Validated
    /// against a dense simulation of the ancilla/CNOT construction.
    pub fn inference_distribution(&self, x_hat: &[f64]) -> Result<InferenceDistribution> {
        if x_hat.len() != self.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_in, got: x_hat.len() });
        }
        let norm = x_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "inference input must be unit norm, got {norm}"
            )));
        }
        let n = self.n_in;
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let full = self.full_matrix();
        let mut p0 = Vec::with_capacity(n);
        let mut p1 = Vec::with_capacity(n);
        for row in &full {
            let wx: f64 = row.iter().zip(x_hat).map(|(a, b)| a * b).sum();
            p0.push(0.25 * (wx + inv_sqrt_n).powi(2));
            p1.push(0.25 * (wx - inv_sqrt_n).powi(2));
        }
        Ok(InferenceDistribution { p0, p1 })
    }

    /// Layer output via the estimator interface. Exact mode is [`forward`];
    /// sampled mode draws shots from [`inference_distribution`] and returns
    /// sqrt(n) * (Pr[0,e_j] - Pr[1,e_j]), rescaled by the input norm that was
    /// peeled off classically.
    pub fn estimate_layer_output(&self, x: &[f64], mode: EstimatorMode) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_in, got: x.len() });
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("layer input".into()));
        }
        if norm == 0.0 {
            return Ok(vec![0.0; self.n_out]);
        }
        match mode {
            EstimatorMode::Exact => self.forward(x),
            EstimatorMode::Sampled { n_shots, seed } => {
                if n_shots == 0 {
                    return Err(Error::InvalidConfig("sampled mode needs at least one shot".into()));
                }
                let x_hat: Vec<f64> = x.iter().map(|v| v / norm).collect();
                let dist = self.inference_distribution(&x_hat)?;
                let n = self.n_in;
                let mut probs = dist.p0;
                probs.extend_from_slice(&dist.p1);
                let counts = multinomial_counts(&probs, n_shots, seed);
                let shots = n_shots as f64;
                let scale = (n as f64).sqrt() * norm;
                Ok((0..self.n_out)
                    .map(|j| scale * (counts[j] as f64 - counts[n + j] as f64) / shots)
                    .collect())
            }
        }
    }

    /// Checkpoint as JSON {n_in, n_out, theta, row_signs}; the gate plan is
    /// rebuilt on restore.
    pub fn to_json(&self) -> String {
        let dump = LayerDump {
            n_in: self.n_in,
            n_out: self.n_out,
            theta: self.theta.clone(),
            row_signs: self.row_signs.clone(),
        };
        serde_json::to_string_pretty(&dump).expect("layer dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: LayerDump = serde_json::from_str(text)?;
        Self::from_parts(dump.n_in, dump.n_out, dump.theta, dump.row_signs)
    }
}

/// Ancilla/wire outcome probabilities of the sign-recovery circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceDistribution {
    /// Pr[b=0, e_j] for each wire j.
    pub p0: Vec<f64>,
    /// Pr[b=1, e_j] for each wire j.
    pub p1: Vec<f64>,
}

impl InferenceDistribution {
    pub fn total(&self) -> f64 {
        self.p0.iter().sum::<f64>() + self.p1.iter().sum::<f64>()
    }

    /// sqrt(n) * (Pr[0,e_j] - Pr[1,e_j]) = W_j.x for every wire.
    pub fn signed_marginal(&self) -> Vec<f64> {
        let scale = (self.p0.len() as f64).sqrt();
        self.p0.iter().zip(&self.p1).map(|(a, b)| scale * (a - b)).collect()
    }
}

/// Matrix with orthonormal rows (W W^T = I to 1e-8 on construction).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoMatrix {
    rows: Vec<Vec<f64>>,
}

impl OrthoMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_out = rows.len();
        if n_out == 0 {
            return Err(Error::BadLayerDims { n_in: 0, n_out: 0 });
        }
        let n_in = rows[0].len();
        if n_out > n_in || rows.iter().any(|r| r.len() != n_in) {
            return Err(Error::BadLayerDims { n_in, n_out });
        }
        let m = OrthoMatrix { rows };
        let dev = m.orthogonality_deviation();
        if dev > 1e-8 {
            return Err(Error::NotOrthogonal(dev));
        }
        Ok(m)
    }

    pub fn n_out(&self) -> usize {
        self.rows.len()
    }

    pub fn n_in(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in() {
            return Err(Error::DimensionMismatch { expected: self.n_in(), got: x.len() });
        }
        Ok(self.rows.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect())
    }

    /// max |W W^T - I| entry.
    pub fn orthogonality_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for (i, ri) in self.rows.iter().enumerate() {
            for (j, rj) in self.rows.iter().enumerate() {
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((dot - want).abs());
            }
        }
        dev
    }
}

/// Recovers pyramid angles and row signs from a square orthogonal matrix, the
/// inverse of [`PyramidLayer::angles_to_matrix`].
///
/// Walking the plan forward, each gate multiplies M by the transposed rotation
/// and is tuned to zero one matrix entry; which entry is forced by the sets of
/// terminal rows reachable from each wire through the remaining gates (any
/// other candidate is zeroed automatically, by orthogonality). What survives
/// is a diagonal of +-1: the row signs. Angles come out canonicalized into
/// (-pi, pi], so a round trip reproduces the matrix rather than the literal
/// input angles.
pub fn matrix_to_angles(w: &OrthoMatrix) -> Result<PyramidLayer> {
    let n = w.n_in();
    if w.n_out() != n {
        return Err(Error::InvalidConfig(format!(
            "angle recovery needs a square matrix, got {}x{}",
            w.n_out(),
            n
        )));
    }
    let plan = diamond_plan(n);
    let mut m: Vec<Vec<f64>> = w.rows.to_vec();

    // reach[w] = terminal rows reachable from wire w through remaining gates;
    // filled backwards, snapshotting each gate's two sets before merging them
    let mut reach: Vec<Vec<bool>> =
        (0..n).map(|w| (0..n).map(|r| r == w).collect()).collect();
    let mut reach_after: Vec<(Vec<bool>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); plan.len()];
    for (k, &(a, b, _)) in plan.iter().enumerate().rev() {
        reach_after[k] = (reach[a].clone(), reach[b].clone());
        for r in 0..n {
            let merged = reach[a][r] || reach[b][r];
            reach[a][r] = merged;
            reach[b][r] = merged;
        }
    }

    let mut theta = Vec::with_capacity(plan.len());
    for (k, &(a, b, _)) in plan.iter().enumerate() {
        let (ref ra, ref rb) = reach_after[k];
        // candidates ((row, column)) this gate could zero; square pyramids
        // always yield exactly one
        let mut kill = None;
        for r in 0..n {
            if rb[r] && !ra[r] {
                kill = Some((r, true));
                break;
            }
        }
        if kill.is_none() {
            for r in 0..n {
                if ra[r] && !rb[r] {
                    kill = Some((r, false));
                    break;
                }
            }
        }
        let (r, side_a) = kill.expect("square pyramid gate always has a target entry");
        let t = if side_a {
            (-m[r][a]).atan2(m[r][b])
        } else {
            m[r][b].atan2(m[r][a])
        };
        let (s, c) = t.sin_cos();
        for row in m.iter_mut() {
            let (va, vb) = (row[a], row[b]);
            row[a] = c * va + s * vb;
            row[b] = c * vb - s * va;
        }
        let residual = if side_a { m[r][a] } else { m[r][b] };
        if residual.abs() > 1e-8 {
            return Err(Error::NotOrthogonal(residual.abs()));
        }
        theta.push(canonicalize_angle(t));
    }

    // the eliminated matrix must be a +-1 diagonal
    let mut signs = Vec::with_capacity(n);
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i == j {
                if (v.abs() - 1.0).abs() > 1e-8 {
                    return Err(Error::NotOrthogonal((v.abs() - 1.0).abs()));
                }
            } else if v.abs() > 1e-8 {
                return Err(Error::NotOrthogonal(v.abs()));
            }
        }
        signs.push(row[i].signum());
    }
    PyramidLayer::from_parts(n, n, theta, signs)
}
