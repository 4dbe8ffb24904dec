//! Feedforward sigmoid networks whose matrix products route through the
//! inner-product estimators.
//!
//! The network itself is a plain MLP with per-node sigmoid cross-entropy loss.
//! Both the forward pre-activations W*a and the backward error products W^T*d
//! go through [`estimate_matvec`], so exact mode reproduces classical training
//! to the last bit of the shared arithmetic while sampled mode injects shot
//! noise exactly where a quantum processor would. Biases and the outer-product
//! weight-gradient accumulation stay classical: they are not inner products
//! the estimation circuits compute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_matvec, EstimatorMode};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mode: EstimatorMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 10,
            learning_rate: 0.05,
            mode: EstimatorMode::Exact,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training diagnostics. Accuracies are computed with exact
/// inference (cheap and deterministic); the experiment layer reports final
/// metrics under the configured inference mode separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

/// History as CSV: epoch, loss, train_acc, test_acc (empty when absent).
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_acc,test_acc\n");
    for h in history {
        let test = h.test_acc.map_or(String::new(), |v| v.to_string());
        out.push_str(&format!("{},{},{},{}\n", h.epoch, h.loss, h.train_acc, test));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// weights[l] is layer_sizes[l+1] x layer_sizes[l], row-major.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MlpDump {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

/// Activations from one forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            weights.push(
                (0..n_out)
                    .map(|_| (0..n_in).map(|_| rng.random_range(-bound..bound)).collect())
                    .collect(),
            );
            biases.push(vec![0.0; n_out]);
        }
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|p| vec![vec![0.0; p[0]]; p[1]])
            .collect();
        let biases = layer_sizes.windows(2).map(|p| vec![0.0; p[1]]).collect();
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes {layer_sizes:?} do not describe a network"
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<Vec<f64>>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Forward pass; `counter` advances once per matvec so sampled-mode shot
    /// streams never collide across calls.
    pub fn forward(&self, x: &[f64], mode: EstimatorMode, counter: &mut u64) -> Result<ForwardTrace> {
        if x.len() != self.layer_sizes[0] {
            return Err(Error::DimensionMismatch { expected: self.layer_sizes[0], got: x.len() });
        }
        let mut activations = vec![x.to_vec()];
        let mut pre_activations = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let a_prev = activations.last().expect("nonempty");
            let mut z = estimate_matvec(w, a_prev, mode, *counter)?;
            *counter += 1;
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            let a = z.iter().map(|&v| sigmoid(v)).collect();
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace { pre_activations, activations })
    }

    /// Output-node values (two sigmoid nodes; not a softmax pair).
    pub fn predict_proba(&self, x: &[f64], mode: EstimatorMode) -> Result<Vec<f64>> {
        let mut counter = 0;
        Ok(self.forward(x, mode, &mut counter)?.output().to_vec())
    }

    /// Signed score used for ranking: node-1 minus node-0 output.
    pub fn score(&self, x: &[f64], mode: EstimatorMode) -> Result<f64> {
        let p = self.predict_proba(x, mode)?;
        Ok(p[1] - p[0])
    }

    /// Argmax decision; a tie goes to class 0.
    pub fn classify(&self, x: &[f64], mode: EstimatorMode) -> Result<u8> {
        Ok(if self.score(x, mode)? > 0.0 { 1 } else { 0 })
    }

    /// Batch-averaged gradients and loss. Backward error products go through
    /// the estimator on the transposed weights (built once per layer).
    fn batch_gradients(
        &self,
        xs: &[Vec<f64>],
        ys: &[u8],
        mode: EstimatorMode,
        counter: &mut u64,
    ) -> Result<(Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, f64)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidConfig("batch must be nonempty and aligned".into()));
        }
        let n_layers = self.weights.len();
        let mut grad_w: Vec<Vec<Vec<f64>>> =
            self.weights.iter().map(|w| w.iter().map(|r| vec![0.0; r.len()]).collect()).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0;

        // transposes are rebuilt each step because weights moved last step
        let transposes: Vec<Vec<Vec<f64>>> = self
            .weights
            .iter()
            .map(|w| {
                let (rows, cols) = (w.len(), w[0].len());
                (0..cols).map(|j| (0..rows).map(|i| w[i][j]).collect()).collect()
            })
            .collect();

        for (x, &y) in xs.iter().zip(ys) {
            let trace = self.forward(x, mode, counter)?;
            let target = [if y == 0 { 1.0 } else { 0.0 }, if y == 1 { 1.0 } else { 0.0 }];
            let out = trace.output();
            if out.len() != 2 {
                return Err(Error::InvalidConfig("output layer must have two nodes".into()));
            }
            for (a, t) in out.iter().zip(target) {
                let a = a.clamp(1e-12, 1.0 - 1e-12);
                loss -= t * a.ln() + (1.0 - t) * (1.0 - a).ln();
            }

            // delta at the output of sigmoid cross-entropy is activation-target
            let mut delta: Vec<f64> = out.iter().zip(target).map(|(a, t)| a - t).collect();
            for l in (0..n_layers).rev() {
                let a_prev = &trace.activations[l];
                for (gr, d) in grad_w[l].iter_mut().zip(&delta) {
                    for (g, ap) in gr.iter_mut().zip(a_prev) {
                        *g += d * ap;
                    }
                }
                for (g, d) in grad_b[l].iter_mut().zip(&delta) {
                    *g += d;
                }
                if l > 0 {
                    let back = estimate_matvec(&transposes[l], &delta, mode, *counter)?;
                    *counter += 1;
                    let a = &trace.activations[l];
                    delta = back.iter().zip(a).map(|(b, ai)| b * ai * (1.0 - ai)).collect();
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
        Ok((grad_w, grad_b, loss * scale))
    }

    /// One SGD step on a mini-batch; returns the batch loss.
    pub fn backprop_step(
        &mut self,
        xs: &[Vec<f64>],
        ys: &[u8],
        config: &TrainConfig,
        counter: &mut u64,
    ) -> Result<f64> {
        let (grad_w, grad_b, loss) = self.batch_gradients(xs, ys, config.mode, counter)?;
        let lr = config.learning_rate;
        for (w, g) in self.weights.iter_mut().flatten().flatten().zip(grad_w.iter().flatten().flatten())
        {
            *w -= lr * g;
        }
        for (b, g) in self.biases.iter_mut().flatten().zip(grad_b.iter().flatten()) {
            *b -= lr * g;
        }
        Ok(loss)
    }

    /// Shuffled mini-batch training; deterministic given the config seed.
    pub fn train(
        &mut self,
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
        let mut counter: u64 = 0;
        let mut order: Vec<usize> = (0..train_x.len()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            // Fisher-Yates with the run RNG keeps epochs reproducible
            for i in (1..order.len()).rev() {
                let j = shuffle_rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut loss_sum = 0.0;
            let mut seen = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
                let ys: Vec<u8> = chunk.iter().map(|&i| train_y[i]).collect();
                let loss = self.backprop_step(&xs, &ys, config, &mut counter)?;
                loss_sum += loss * xs.len() as f64;
                seen += xs.len();
            }
            let train_acc = self.accuracy(train_x, train_y)?;
            let test_acc = match test {
                Some((tx, ty)) => Some(self.accuracy(tx, ty)?),
                None => None,
            };
            history.push(EpochStats {
                epoch,
                loss: loss_sum / seen as f64,
                train_acc,
                test_acc,
            });
        }
        Ok(history)
    }

    /// Exact-mode accuracy over a labeled set.
    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[u8]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::InvalidConfig("empty evaluation set".into()));
        }
        let mut correct = 0usize;
        for (x, &y) in xs.iter().zip(ys) {
            if self.classify(x, EstimatorMode::Exact)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / xs.len() as f64)
    }

    pub fn to_json(&self) -> String {
        let dump = MlpDump {
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        serde_json::to_string_pretty(&dump).expect("model dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: MlpDump = serde_json::from_str(text)?;
        Self::check_sizes(&dump.layer_sizes)?;
        let expected: Vec<(usize, usize)> =
            dump.layer_sizes.windows(2).map(|p| (p[1], p[0])).collect();
        if dump.weights.len() != expected.len() || dump.biases.len() != expected.len() {
            return Err(Error::InvalidConfig("layer count mismatch in checkpoint".into()));
        }
        for ((w, b), &(rows, cols)) in dump.weights.iter().zip(&dump.biases).zip(&expected) {
            if w.len() != rows || w.iter().any(|r| r.len() != cols) || b.len() != rows {
                return Err(Error::InvalidConfig("weight shape mismatch in checkpoint".into()));
            }
            if w.iter().flatten().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("checkpoint parameter".into()));
            }
        }
        Ok(Mlp { layer_sizes: dump.layer_sizes, weights: dump.weights, biases: dump.biases })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two separable clusters around (1,0) and (0,1).
    fn toy_set(n_per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n_per_class {
            xs.push(vec![1.0 + rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)]);
            ys.push(0);
            xs.push(vec![rng.random_range(-0.2..0.2), 1.0 + rng.random_range(-0.2..0.2)]);
            ys.push(1);
        }
        (xs, ys)
    }

    #[test]
    fn zero_network_outputs_half_everywhere() {
        let net = Mlp::zeros(&[4, 4, 2]).unwrap();
        let p = net.predict_proba(&[0.3, -0.2, 0.9, 0.0], EstimatorMode::Exact).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(net.classify(&[0.3, -0.2, 0.9, 0.0], EstimatorMode::Exact).unwrap(), 0);
    }

    #[test]
    fn exact_forward_matches_handrolled_mlp() {
        let net = Mlp::init(&[3, 4, 2], 7).unwrap();
        let x = vec![0.2, -0.5, 0.8];
        let got = net.predict_proba(&x, EstimatorMode::Exact).unwrap();

        let mut a = x.clone();
        for (w, b) in net.weights().iter().zip(net.biases()) {
            a = w
                .iter()
                .zip(b)
                .map(|(row, bi)| {
                    sigmoid(row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>() + bi)
                })
                .collect();
        }
        for (g, r) in got.iter().zip(&a) {
            assert!((g - r).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = Mlp::init(&[4, 3, 2], 17).unwrap();
        let xs: Vec<Vec<f64>> =
            (0..6).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();

        let mut counter = 0;
        let (grad_w, grad_b, _) =
            net.batch_gradients(&xs, &ys, EstimatorMode::Exact, &mut counter).unwrap();

        let eps = 1e-6;
        let loss_of = |net: &Mlp| {
            let mut c = 0;
            let (_, _, loss) = net.batch_gradients(&xs, &ys, EstimatorMode::Exact, &mut c).unwrap();
            loss
        };
        let mut checked = 0;
        for l in 0..net.weights.len() {
            for i in 0..net.weights[l].len() {
                for j in 0..net.weights[l][i].len() {
                    let mut plus = net.clone();
                    plus.weights[l][i][j] += eps;
                    let mut minus = net.clone();
                    minus.weights[l][i][j] -= eps;
                    let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                    let analytic = grad_w[l][i][j];
                    let rel = (analytic - numeric).abs() / numeric.abs().max(1e-6);
                    assert!(rel < 1e-5, "w[{l}][{i}][{j}]: {analytic} vs {numeric}");
                    checked += 1;
                }
            }
            for i in 0..net.biases[l].len() {
                let mut plus = net.clone();
                plus.biases[l][i] += eps;
                let mut minus = net.clone();
                minus.biases[l][i] -= eps;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                let rel = (grad_b[l][i] - numeric).abs() / numeric.abs().max(1e-6);
                assert!(rel < 1e-5, "b[{l}][{i}]");
                checked += 1;
            }
        }
        assert_eq!(checked, 4 * 3 + 3 + 3 * 2 + 2);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut net = Mlp::init(&[2, 2], 3).unwrap();
        let before = net.clone();
        let (xs, ys) = toy_set(5, 1);
        let config = TrainConfig { learning_rate: 1e-300, ..TrainConfig::default() };
        // learning_rate must be positive; use a denormal-small rate as the
        // observable stand-in for zero
        let mut counter = 0;
        net.backprop_step(&xs, &ys, &config, &mut counter).unwrap();
        for (w0, w1) in before
            .weights
            .iter()
            .flatten()
            .flatten()
            .zip(net.weights.iter().flatten().flatten())
        {
            assert!((w0 - w1).abs() < 1e-290);
        }
    }

    #[test]
    fn exact_training_separates_toy_data() {
        let (xs, ys) = toy_set(20, 2);
        let mut net = Mlp::init(&[2, 4, 2], 5).unwrap();
        let config = TrainConfig { epochs: 60, learning_rate: 0.5, ..TrainConfig::default() };
        let history = net.train(&xs, &ys, None, &config).unwrap();
        let final_acc = history.last().unwrap().train_acc;
        assert!(final_acc >= 0.95, "accuracy {final_acc}");
        assert!(history.last().unwrap().loss < history[0].loss);
    }

    #[test]
    fn sampled_training_still_reduces_loss_on_toy_data() {
        let (xs, ys) = toy_set(10, 4);
        let mut net = Mlp::init(&[2, 2], 11).unwrap();
        let config = TrainConfig {
            epochs: 10,
            learning_rate: 0.5,
            mode: EstimatorMode::Sampled { n_shots: 400, seed: 21 },
            ..TrainConfig::default()
        };
        let history = net.train(&xs, &ys, None, &config).unwrap();
        assert!(
            history.last().unwrap().loss < history[0].loss,
            "loss did not decrease: {history:?}"
        );
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let (xs, ys) = toy_set(8, 6);
        let config = TrainConfig {
            epochs: 3,
            mode: EstimatorMode::Sampled { n_shots: 50, seed: 9 },
            ..TrainConfig::default()
        };
        let mut a = Mlp::init(&[2, 3, 2], 1).unwrap();
        let ha = a.train(&xs, &ys, None, &config).unwrap();
        let mut b = Mlp::init(&[2, 3, 2], 1).unwrap();
        let hb = b.train(&xs, &ys, None, &config).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn averaged_sampled_matvecs_converge_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let rows: Vec<Vec<f64>> =
            (0..8).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let exact = estimate_matvec(&rows, &x, EstimatorMode::Exact, 0).unwrap();

        let single_runs = 100;
        let mut single_se = 0.0;
        for t in 0..single_runs {
            let got = estimate_matvec(
                &rows,
                &x,
                EstimatorMode::Sampled { n_shots: 400, seed: 1000 + t },
                0,
            )
            .unwrap();
            for (g, e) in got.iter().zip(&exact) {
                single_se += (g - e) * (g - e);
            }
        }
        let single_rmse = (single_se / (single_runs as f64 * 8.0)).sqrt();

        let avg_runs = 25;
        let mut avg_se = 0.0;
        for t in 0..avg_runs {
            let mut mean = vec![0.0; 8];
            for r in 0..100 {
                let got = estimate_matvec(
                    &rows,
                    &x,
                    EstimatorMode::Sampled { n_shots: 400, seed: 50_000 + t * 100 + r },
                    0,
                )
                .unwrap();
                for (m, g) in mean.iter_mut().zip(&got) {
                    *m += g / 100.0;
                }
            }
            for (m, e) in mean.iter().zip(&exact) {
                avg_se += (m - e) * (m - e);
            }
        }
        let avg_rmse = (avg_se / (avg_runs as f64 * 8.0)).sqrt();
        let ratio = single_rmse / avg_rmse;
        assert!((8.0..=12.0).contains(&ratio), "1/sqrt(100) shrink violated: ratio {ratio}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::init(&[4, 4, 2], 23).unwrap();
        let text = net.to_json();
        assert_eq!(Mlp::from_json(&text).unwrap(), net);
        assert!(Mlp::from_json("{\"layer_sizes\":[2],\"weights\":[],\"biases\":[]}").is_err());
    }

    #[test]
    fn history_csv_format() {
        let history = vec![
            EpochStats { epoch: 0, loss: 1.25, train_acc: 0.5, test_acc: Some(0.75) },
            EpochStats { epoch: 1, loss: 0.5, train_acc: 1.0, test_acc: None },
        ];
        let csv = history_csv(&history);
        assert!(csv.starts_with("epoch,loss,train_acc,test_acc\n"));
        assert!(csv.contains("0,1.25,0.5,0.75\n"));
        assert!(csv.contains("1,0.5,1,\n"));
    }

    #[test]
    fn dimension_and_config_validation() {
        let net = Mlp::init(&[4, 2], 1).unwrap();
        assert!(net.predict_proba(&[1.0, 2.0], EstimatorMode::Exact).is_err());
        assert!(Mlp::init(&[4], 1).is_err());
        assert!(Mlp::init(&[4, 0, 2], 1).is_err());
        let bad = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
