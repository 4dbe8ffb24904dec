//! Orthogonal neural networks built from pyramid layers.
//!
//! QPC training does gradient descent directly in the space of gate angles:
//! the backward pass pushes errors through each gate's transposed 2x2
//! rotation and reads one angle gradient per gate from the cached pre-gate
//! wire pair, so a layer costs O(param_count) forward and backward. Every
//! layer's effective matrix stays exactly orthogonal at all times because the
//! parameterization cannot leave the group. The SVB baseline trains explicit
//! weight matrices and drags their singular values back into a band around 1
//! after each step.
//!
//! Layer inputs are re-normalized to unit length with the norm reapplied to
//! the output. For a linear layer this is an exact identity; it is written
//! out because the quantum layer acts on normalized loaded states, and the
//! cached wire values are the ones a device would prepare.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimators::{derive_seed, EstimatorMode};
use crate::pyramid::{param_count, PyramidLayer};
use crate::qnn::{EpochStats, TrainConfig};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoNet {
    layers: Vec<PyramidLayer>,
}

/// Reusable forward/backward workspace. Holding it outside the net keeps the
/// training loop allocation-free after the first sample.
#[derive(Debug, Clone)]
pub struct QpcCache {
    /// activations[0] is the raw input; activations[l+1] the sigmoid output
    /// of layer l.
    activations: Vec<Vec<f64>>,
    /// Input norm peeled off before each layer's gates.
    norms: Vec<f64>,
    /// Pre-gate wire pairs per layer, in plan order.
    pre_pairs: Vec<Vec<(f64, f64)>>,
    work: Vec<f64>,
    delta: Vec<f64>,
    fwd_ops: Vec<u64>,
    bwd_ops: Vec<u64>,
}

impl QpcCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn ops_forward(&self) -> &[u64] {
        &self.fwd_ops
    }

    pub fn ops_backward(&self) -> &[u64] {
        &self.bwd_ops
    }

    pub fn ops_total(&self) -> u64 {
        self.fwd_ops.iter().chain(&self.bwd_ops).sum()
    }

    pub fn reset_ops(&mut self) {
        self.fwd_ops.fill(0);
        self.bwd_ops.fill(0);
    }
}

impl OrthoNet {
    /// Fresh network with angles uniform in [-pi/4, pi/4].
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for pair in layer_sizes.windows(2) {
            let count = param_count(pair[0], pair[1])?;
            let theta = (0..count)
                .map(|_| rng.random_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4))
                .collect();
            layers.push(PyramidLayer::new(pair[0], pair[1], theta)?);
        }
        Ok(OrthoNet { layers })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|p| PyramidLayer::zeros(p[0], p[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(OrthoNet { layers })
    }

    pub fn from_layers(layers: Vec<PyramidLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::BadLayerDims {
                    n_in: pair[1].n_in(),
                    n_out: pair[0].n_out(),
                });
            }
        }
        Ok(OrthoNet { layers })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "layer sizes {layer_sizes:?} do not describe a network"
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[PyramidLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [PyramidLayer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].n_in()];
        sizes.extend(self.layers.iter().map(|l| l.n_out()));
        sizes
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("nonempty").n_out()
    }

    pub fn cache(&self) -> QpcCache {
        let mut activations = vec![vec![0.0; self.n_in()]];
        for l in &self.layers {
            activations.push(vec![0.0; l.n_out()]);
        }
        let max_wires = self.layers.iter().map(|l| l.n_in()).max().expect("nonempty");
        QpcCache {
            activations,
            norms: vec![0.0; self.layers.len()],
            pre_pairs: self.layers.iter().map(|l| vec![(0.0, 0.0); l.theta().len()]).collect(),
            work: vec![0.0; max_wires],
            delta: vec![0.0; max_wires],
            fwd_ops: vec![0; self.layers.len()],
            bwd_ops: vec![0; self.layers.len()],
        }
    }

    /// Matching gradient accumulators, one slot per angle.
    pub fn grad_buffer(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.theta().len()]).collect()
    }
}

/// Forward pass filling the cache: per layer, peel the input norm, rotate the
/// normalized vector through the gate plan (caching each pre-gate pair), read
/// the designated wires times norm, then sigmoid.
pub fn qpc_forward(net: &OrthoNet, x: &[f64], cache: &mut QpcCache) -> Result<()> {
    if x.len() != net.n_in() {
        return Err(Error::DimensionMismatch { expected: net.n_in(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    cache.activations[0].copy_from_slice(x);
    for (l, layer) in net.layers.iter().enumerate() {
        let n_in = layer.n_in();
        let (before, after) = cache.activations.split_at_mut(l + 1);
        let input = &before[l];
        let out = &mut after[0];
        let norm = input.iter().map(|v| v * v).sum::<f64>().sqrt();
        cache.norms[l] = norm;
        let v = &mut cache.work[..n_in];
        if norm > 0.0 {
            for (vi, xi) in v.iter_mut().zip(input) {
                *vi = xi / norm;
            }
        } else {
            v.fill(0.0);
        }
        for ((&(a, b, _), &theta), pair) in
            layer.gate_plan().iter().zip(layer.theta()).zip(&mut cache.pre_pairs[l])
        {
            let (va, vb) = (v[a], v[b]);
            *pair = (va, vb);
            let (s, c) = theta.sin_cos();
            v[a] = c * va + s * vb;
            v[b] = c * vb - s * va;
        }
        cache.fwd_ops[l] += layer.theta().len() as u64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = sigmoid(layer.row_signs()[j] * v[j] * norm);
        }
    }
    Ok(())
}

/// Sigmoid cross-entropy of the cached output against a one-hot binary label.
fn output_loss(output: &[f64], label: u8) -> Result<f64> {
    if output.len() != 2 {
        return Err(Error::InvalidConfig("output layer must have two nodes".into()));
    }
    let target = [if label == 0 { 1.0 } else { 0.0 }, if label == 1 { 1.0 } else { 0.0 }];
    let mut loss = 0.0;
    for (a, t) in output.iter().zip(target) {
        let a = a.clamp(1e-12, 1.0 - 1e-12);
        loss -= t * a.ln() + (1.0 - t) * (1.0 - a).ln();
    }
    Ok(loss)
}

/// Backward pass for the sample currently in the cache. Adds this sample's
/// angle gradients into `grads`. Each gate costs one transposed rotation on
/// the error pair plus one dR/dtheta contraction with its cached pre-pair.
fn accumulate_gradients(
    net: &OrthoNet,
    label: u8,
    cache: &mut QpcCache,
    grads: &mut [Vec<f64>],
) -> Result<()> {
    let out = cache.output();
    if out.len() != 2 {
        return Err(Error::InvalidConfig("output layer must have two nodes".into()));
    }
    let target = [if label == 0 { 1.0 } else { 0.0 }, if label == 1 { 1.0 } else { 0.0 }];
    // delta of sigmoid cross-entropy at the pre-activation is output-target
    let mut delta_z: Vec<f64> = out.iter().zip(target).map(|(a, t)| a - t).collect();
    for (l, layer) in net.layers.iter().enumerate().rev() {
        let n_in = layer.n_in();
        let norm = cache.norms[l];
        let delta = &mut cache.delta[..n_in];
        delta.fill(0.0);
        for (j, d) in delta_z.iter().enumerate() {
            delta[j] = layer.row_signs()[j] * d;
        }
        for (g, ((&(a, b, _), &theta), &(va, vb))) in layer
            .gate_plan()
            .iter()
            .zip(layer.theta())
            .zip(&cache.pre_pairs[l])
            .enumerate()
            .rev()
        {
            let (s, c) = theta.sin_cos();
            let (da, db) = (delta[a], delta[b]);
            // dR/dtheta = [[-s, c], [-c, -s]]; pre-pairs were cached on the
            // normalized vector, so the peeled norm scales the gradient back
            grads[l][g] += norm * (da * (-s * va + c * vb) + db * (-c * va - s * vb));
            delta[a] = c * da - s * db;
            delta[b] = s * da + c * db;
        }
        cache.bwd_ops[l] += layer.theta().len() as u64;
        if l > 0 {
            let a_in = &cache.activations[l];
            delta_z = delta[..n_in]
                .iter()
                .zip(a_in)
                .map(|(d, a)| d * a * (1.0 - a))
                .collect();
        }
    }
    Ok(())
}

/// One mini-batch step of angle SGD; returns the batch loss. `lr` may be
/// zero, which evaluates without moving.
pub fn qpc_backward(
    net: &mut OrthoNet,
    xs: &[Vec<f64>],
    ys: &[u8],
    lr: f64,
    cache: &mut QpcCache,
) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidConfig("batch must be nonempty and aligned".into()));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig("learning rate must be finite and nonnegative".into()));
    }
    let mut grads = net.grad_buffer();
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        qpc_forward(net, x, cache)?;
        loss += output_loss(cache.output(), y)?;
        accumulate_gradients(net, y, cache, &mut grads)?;
    }
    let scale = lr / xs.len() as f64;
    for (layer, g) in net.layers.iter_mut().zip(&grads) {
        for (theta, gi) in layer.theta_mut().iter_mut().zip(g) {
            *theta -= scale * gi;
        }
    }
    Ok(loss / xs.len() as f64)
}

/// Shuffled mini-batch training on gate angles; deterministic given the
/// config seed. The estimator mode in the config is ignored here: QPC
/// training is the O(n^2) classical simulation of the circuit, and shot
/// noise enters only through [`infer`].
pub fn qpc_train(
    net: &mut OrthoNet,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    test: Option<(&[Vec<f64>], &[u8])>,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if train_x.is_empty() || train_x.len() != train_y.len() {
        return Err(Error::InvalidConfig("training set empty or misaligned".into()));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cache = net.cache();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<u8> = Vec::new();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            xs.clear();
            ys.clear();
            xs.extend(chunk.iter().map(|&i| train_x[i].clone()));
            ys.extend(chunk.iter().map(|&i| train_y[i]));
            let loss = qpc_backward(net, &xs, &ys, config.learning_rate, &mut cache)?;
            loss_sum += loss * xs.len() as f64;
            seen += xs.len();
        }
        let train_acc = accuracy(net, train_x, train_y)?;
        let test_acc = match test {
            Some((tx, ty)) => Some(accuracy(net, tx, ty)?),
            None => None,
        };
        history.push(EpochStats { epoch, loss: loss_sum / seen as f64, train_acc, test_acc });
    }
    Ok(history)
}

/// Class probabilities with the chosen layer-output estimator. Sampled mode
/// derives one shot-stream seed per layer so stacked layers never share
/// randomness.
pub fn infer(net: &OrthoNet, x: &[f64], mode: EstimatorMode) -> Result<Vec<f64>> {
    let mut a = x.to_vec();
    for (l, layer) in net.layers.iter().enumerate() {
        let layer_mode = match mode {
            EstimatorMode::Exact => EstimatorMode::Exact,
            EstimatorMode::Sampled { n_shots, seed } => {
                EstimatorMode::Sampled { n_shots, seed: derive_seed(seed, l as u64, 0) }
            }
        };
        let z = layer.estimate_layer_output(&a, layer_mode)?;
        a = z.iter().map(|&v| sigmoid(v)).collect();
    }
    Ok(a)
}

/// Signed ranking score: node-1 minus node-0 probability.
pub fn score(net: &OrthoNet, x: &[f64], mode: EstimatorMode) -> Result<f64> {
    let p = infer(net, x, mode)?;
    if p.len() != 2 {
        return Err(Error::InvalidConfig("output layer must have two nodes".into()));
    }
    Ok(p[1] - p[0])
}

/// Argmax decision; a tie goes to class 0.
pub fn classify(net: &OrthoNet, x: &[f64], mode: EstimatorMode) -> Result<u8> {
    Ok(if score(net, x, mode)? > 0.0 { 1 } else { 0 })
}

/// Exact-mode accuracy over a labeled set.
pub fn accuracy(net: &OrthoNet, xs: &[Vec<f64>], ys: &[u8]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidConfig("empty evaluation set".into()));
    }
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        if classify(net, x, EstimatorMode::Exact)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len() as f64)
}

impl OrthoNet {
    pub fn to_json(&self) -> String {
        let layers: Vec<serde_json::Value> = self
            .layers
            .iter()
            .map(|l| serde_json::from_str(&l.to_json()).expect("layer dump parses"))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "layers": layers }))
            .expect("net dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Dump {
            layers: Vec<serde_json::Value>,
        }
        let dump: Dump = serde_json::from_str(text)?;
        let layers = dump
            .layers
            .iter()
            .map(|v| PyramidLayer::from_json(&v.to_string()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvbConfig {
    pub train: TrainConfig,
    /// Singular values are clipped into [1/(1+epsilon), 1+epsilon].
    pub epsilon: f64,
    /// Clip after every this many SGD steps.
    pub clip_every: usize,
}

impl Default for SvbConfig {
    fn default() -> Self {
        SvbConfig { train: TrainConfig::default(), epsilon: 0.01, clip_every: 1 }
    }
}

impl SvbConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.clip_every == 0 {
            return Err(Error::InvalidConfig("clip_every must be positive".into()));
        }
        Ok(())
    }
}

/// Bias-free sigmoid MLP whose weight matrices are held near-orthogonal by
/// singular-value clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct SvbNet {
    layer_sizes: Vec<usize>,
    /// weights[l] is layer_sizes[l+1] x layer_sizes[l], row-major.
    weights: Vec<Vec<Vec<f64>>>,
}

impl SvbNet {
    /// Uniform +-1/sqrt(fan_in) init followed by one clip, so the
    /// singular-value invariant holds from the first step.
    pub fn init(layer_sizes: &[usize], seed: u64, epsilon: f64) -> Result<Self> {
        OrthoNet::check_sizes(layer_sizes)?;
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("zero-width layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            weights.push(
                (0..n_out)
                    .map(|_| (0..n_in).map(|_| rng.random_range(-bound..bound)).collect())
                    .collect::<Vec<Vec<f64>>>(),
            );
        }
        let mut net = SvbNet { layer_sizes: layer_sizes.to_vec(), weights };
        net.clip_all(epsilon, &mut rng);
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<Vec<f64>>] {
        &self.weights
    }

    fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.layer_sizes[0] {
            return Err(Error::DimensionMismatch { expected: self.layer_sizes[0], got: x.len() });
        }
        let mut activations = vec![x.to_vec()];
        for w in &self.weights {
            let a_prev = activations.last().expect("nonempty");
            let a = w
                .iter()
                .map(|row| sigmoid(row.iter().zip(a_prev).map(|(wi, ai)| wi * ai).sum()))
                .collect();
            activations.push(a);
        }
        Ok(activations)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.pop().expect("nonempty"))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let p = self.predict_proba(x)?;
        if p.len() != 2 {
            return Err(Error::InvalidConfig("output layer must have two nodes".into()));
        }
        Ok(p[1] - p[0])
    }

    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(if self.score(x)? > 0.0 { 1 } else { 0 })
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[u8]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::InvalidConfig("empty evaluation set".into()));
        }
        let mut correct = 0usize;
        for (x, &y) in xs.iter().zip(ys) {
            if self.classify(x)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / xs.len() as f64)
    }

    /// One mini-batch SGD step without clipping; returns the batch loss.
    fn sgd_step(&mut self, xs: &[Vec<f64>], ys: &[u8], lr: f64) -> Result<f64> {
        let n_layers = self.weights.len();
        let mut grads: Vec<Vec<Vec<f64>>> =
            self.weights.iter().map(|w| w.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let trace = self.forward_trace(x)?;
            let out = trace.last().expect("nonempty");
            loss += output_loss(out, y)?;
            let target = [if y == 0 { 1.0 } else { 0.0 }, if y == 1 { 1.0 } else { 0.0 }];
            let mut delta: Vec<f64> = out.iter().zip(target).map(|(a, t)| a - t).collect();
            for l in (0..n_layers).rev() {
                let a_prev = &trace[l];
                for (gr, d) in grads[l].iter_mut().zip(&delta) {
                    for (g, ap) in gr.iter_mut().zip(a_prev) {
                        *g += d * ap;
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..w[0].len())
                        .map(|j| {
                            let back: f64 = w.iter().zip(&delta).map(|(row, d)| row[j] * d).sum();
                            back * trace[l][j] * (1.0 - trace[l][j])
                        })
                        .collect();
                }
            }
        }
        let scale = lr / xs.len() as f64;
        for (w, g) in self.weights.iter_mut().flatten().flatten().zip(grads.iter().flatten().flatten())
        {
            *w -= scale * g;
        }
        Ok(loss / xs.len() as f64)
    }

    /// Clip one layer's singular values into [1/(1+eps), 1+eps]. Matrices
    /// already inside the band are left untouched, so eps = inf disables
    /// clipping exactly. A failed decomposition re-randomizes the layer.
    fn clip_layer(w: &mut Vec<Vec<f64>>, epsilon: f64, rng: &mut ChaCha8Rng) {
        let (rows, cols) = (w.len(), w[0].len());
        let lo = 1.0 / (1.0 + epsilon);
        let hi = 1.0 + epsilon;
        let m = DMatrix::from_fn(rows, cols, |i, j| w[i][j]);
        let Some(svd) = m.try_svd(true, true, f64::EPSILON, 1000) else {
            log::warn!("SVD failed on a {rows}x{cols} layer; re-randomizing it");
            let bound = 1.0 / (cols as f64).sqrt();
            for row in w.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-bound..bound);
                }
            }
            return;
        };
        if svd.singular_values.iter().all(|&s| (lo..=hi).contains(&s)) {
            return;
        }
        let mut svd = svd;
        for s in svd.singular_values.iter_mut() {
            *s = s.clamp(lo, hi);
        }
        let rebuilt = svd.recompose().expect("u and v_t were requested");
        for (i, row) in w.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = rebuilt[(i, j)];
            }
        }
    }

    fn clip_all(&mut self, epsilon: f64, rng: &mut ChaCha8Rng) {
        for w in &mut self.weights {
            Self::clip_layer(w, epsilon, rng);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "layer_sizes": self.layer_sizes,
            "weights": self.weights,
        }))
        .expect("net dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Dump {
            layer_sizes: Vec<usize>,
            weights: Vec<Vec<Vec<f64>>>,
        }
        let dump: Dump = serde_json::from_str(text)?;
        OrthoNet::check_sizes(&dump.layer_sizes)?;
        let expected: Vec<(usize, usize)> =
            dump.layer_sizes.windows(2).map(|p| (p[1], p[0])).collect();
        if dump.weights.len() != expected.len() {
            return Err(Error::InvalidConfig("layer count mismatch in checkpoint".into()));
        }
        for (w, &(rows, cols)) in dump.weights.iter().zip(&expected) {
            if w.len() != rows || w.iter().any(|r| r.len() != cols) {
                return Err(Error::InvalidConfig("weight shape mismatch in checkpoint".into()));
            }
            if w.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("checkpoint parameter".into()));
            }
        }
        Ok(SvbNet { layer_sizes: dump.layer_sizes, weights: dump.weights })
    }
}

/// SGD on explicit weights with periodic singular-value clipping;
/// deterministic given the config seed.
pub fn svb_train(
    net: &mut SvbNet,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    test: Option<(&[Vec<f64>], &[u8])>,
    config: &SvbConfig,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if train_x.is_empty() || train_x.len() != train_y.len() {
        return Err(Error::InvalidConfig("training set empty or misaligned".into()));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut clip_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.train.seed, u64::MAX, 0));
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = Vec::with_capacity(config.train.epochs);
    let mut step = 0usize;
    for epoch in 0..config.train.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.train.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let ys: Vec<u8> = chunk.iter().map(|&i| train_y[i]).collect();
            let loss = net.sgd_step(&xs, &ys, config.train.learning_rate)?;
            loss_sum += loss * xs.len() as f64;
            seen += xs.len();
            step += 1;
            if step % config.clip_every == 0 {
                net.clip_all(config.epsilon, &mut clip_rng);
            }
        }
        let train_acc = net.accuracy(train_x, train_y)?;
        let test_acc = match test {
            Some((tx, ty)) => Some(net.accuracy(tx, ty)?),
            None => None,
        };
        history.push(EpochStats { epoch, loss: loss_sum / seen as f64, train_acc, test_acc });
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub wall_time_s: f64,
    pub op_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConfig {
    pub epochs: usize,
    pub n_samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig { epochs: 4, n_samples: 48, batch_size: 12, learning_rate: 0.05, seed: 0 }
    }
}

/// Trains [n, n, 2] networks on synthetic data for a fixed workload and
/// records wall time plus the rotation-op count. The op count is exactly
/// 2 * epochs * n_samples * (0.5 n^2 + 1.5 n - 3): one rotation per angle
/// forward and one backward per sample pass.
pub fn scaling_benchmark(n_list: &[usize], config: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, n as u64, 0));
        let xs: Vec<Vec<f64>> = (0..config.n_samples)
            .map(|_| {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let ys: Vec<u8> = (0..config.n_samples).map(|i| (i % 2) as u8).collect();

        let mut net = OrthoNet::init(&[n, n, 2], derive_seed(config.seed, n as u64, 1))?;
        let mut cache = net.cache();
        cache.reset_ops();
        let started = Instant::now();
        for _ in 0..config.epochs {
            for chunk_start in (0..config.n_samples).step_by(config.batch_size) {
                let end = (chunk_start + config.batch_size).min(config.n_samples);
                qpc_backward(
                    &mut net,
                    &xs[chunk_start..end],
                    &ys[chunk_start..end],
                    config.learning_rate,
                    &mut cache,
                )?;
            }
        }
        let wall_time_s = started.elapsed().as_secs_f64();
        rows.push(ScalingRow { n, wall_time_s, op_count: cache.ops_total() });
    }
    Ok(rows)
}

/// Least-squares slope of log(wall_time) against log(n).
pub fn loglog_slope(rows: &[ScalingRow]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::InvalidConfig("need at least two points for a slope".into()));
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().map(|r| ((r.n as f64).ln(), r.wall_time_s.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}
