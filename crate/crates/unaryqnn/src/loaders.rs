//! Unary data loaders: turn a classical vector into RBS angles and a circuit
//! whose final state carries x/||x|| on the unary basis.
//!
//! Every topology is an ordered list of splits (source_wire, new_wire): the RBS
//! on a split moves part of the source amplitude onto a fresh wire. Walking the
//! splits backwards therefore peels amplitudes off one at a time, which is how
//! [`compute_angles`] recovers the angles in O(d).

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::unary::{run_circuit, UnaryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Binary-tree splits, depth ceil(log2 d), needs all-to-all connectivity.
    Parallel,
    /// Single nearest-neighbor chain from wire 0, depth d-1.
    Diagonal,
    /// Two nearest-neighbor chains growing from the middle, depth ceil(d/2).
    SemiDiagonal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoaderTopology {
    kind: TopologyKind,
    d: usize,
    splits: Vec<(usize, usize)>,
}

impl LoaderTopology {
    pub fn new(kind: TopologyKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("loader dimension must be at least 1".into()));
        }
        let splits = match kind {
            TopologyKind::Diagonal => (0..d.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            TopologyKind::Parallel => {
                let mut splits = Vec::with_capacity(d.saturating_sub(1));
                if d > 1 {
                    parallel_splits(0, d.next_power_of_two(), d, &mut splits);
                }
                splits
            }
            TopologyKind::SemiDiagonal => {
                let mut splits = Vec::with_capacity(d.saturating_sub(1));
                if d > 1 {
                    let root = (d - 1) / 2;
                    splits.push((root, root + 1));
                    // two chains, interleaved so disjoint pairs share timesteps
                    let down = (0..root).rev().map(|i| (i + 1, i));
                    let up = (root + 1..d - 1).map(|i| (i, i + 1));
                    let mut down = down.collect::<Vec<_>>().into_iter();
                    let mut up = up.collect::<Vec<_>>().into_iter();
                    loop {
                        let (a, b) = (down.next(), up.next());
                        splits.extend(a);
                        splits.extend(b);
                        if a.is_none() && b.is_none() {
                            break;
                        }
                    }
                }
                splits
            }
        };
        debug_assert_eq!(splits.len(), d - 1);
        Ok(LoaderTopology { kind, d, splits })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn splits(&self) -> &[(usize, usize)] {
        &self.splits
    }

    /// The wire carrying the initial excitation (never a new_wire).
    pub fn root(&self) -> usize {
        self.splits.first().map_or(0, |&(src, _)| src)
    }
}

/// Preorder walk of the split tree over the next power of two, dropping splits
/// whose new wire falls outside the real dimension. The pruned tree still has
/// exactly d-1 splits and keeps the ceil(log2 d) depth.
fn parallel_splits(start: usize, len: usize, d: usize, out: &mut Vec<(usize, usize)>) {
    if len <= 1 {
        return;
    }
    let mid = start + len / 2;
    if mid < d {
        out.push((start, mid));
    }
    parallel_splits(start, len / 2, d, out);
    if mid < d {
        parallel_splits(mid, len / 2, d, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoaderAngles {
    theta: Vec<f64>,
}

impl LoaderAngles {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

/// Angles whose loader circuit prepares x/||x||, plus the number of amplitude
/// reads spent computing them (the O(d) guarantee: always <= 2d).
pub fn compute_angles_with_stats(
    topology: &LoaderTopology,
    x: &[f64],
) -> Result<(LoaderAngles, usize)> {
    if x.len() != topology.d {
        return Err(Error::DimensionMismatch { expected: topology.d, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loader input component".into()));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut amp: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let mut theta = vec![0.0; topology.splits.len()];
    let mut visits = 0usize;
    // Peel in reverse split order: the last split on each tree path sees the
    // raw signed components (atan2 recovers both signs there); interior splits
    // then only ever see the nonnegative merged norms, so their sines are >= 0.
    for (k, &(src, new)) in topology.splits.iter().enumerate().rev() {
        visits += 2;
        theta[k] = amp[new].atan2(amp[src]);
        amp[src] = amp[src].hypot(amp[new]);
        amp[new] = 0.0;
    }
    Ok((LoaderAngles { theta }, visits))
}

pub fn compute_angles(topology: &LoaderTopology, x: &[f64]) -> Result<LoaderAngles> {
    compute_angles_with_stats(topology, x).map(|(angles, _)| angles)
}

/// XInit on the root wire followed by one RBS per split, in topology order.
pub fn build_loader(topology: &LoaderTopology, angles: &LoaderAngles) -> Result<Circuit> {
    if angles.theta.len() != topology.d - 1 {
        return Err(Error::DimensionMismatch {
            expected: topology.d - 1,
            got: angles.theta.len(),
        });
    }
    let mut c = Circuit::new(topology.d);
    c.push(Gate::XInit { qubit: topology.root() })?;
    for (&(src, new), &theta) in topology.splits.iter().zip(&angles.theta) {
        c.push(Gate::Rbs { a: src, b: new, theta })?;
    }
    Ok(c)
}

/// Inverse of [`build_loader`] without the XInit: gates reversed, angles
/// negated. Appending this after a loader for the same angles returns the
/// excitation to the root wire.
pub fn adjoint_loader(topology: &LoaderTopology, angles: &LoaderAngles) -> Result<Circuit> {
    if angles.theta.len() != topology.d - 1 {
        return Err(Error::DimensionMismatch {
            expected: topology.d - 1,
            got: angles.theta.len(),
        });
    }
    let mut c = Circuit::new(topology.d);
    for (&(src, new), &theta) in topology.splits.iter().zip(&angles.theta).rev() {
        c.push(Gate::Rbs { a: src, b: new, theta: -theta })?;
    }
    Ok(c)
}

/// compute_angles + build_loader + run_circuit in one call.
pub fn load(x: &[f64], topology: &LoaderTopology) -> Result<UnaryState> {
    let angles = compute_angles(topology, x)?;
    let circuit = build_loader(topology, &angles)?;
    run_circuit(&circuit, None)
}
