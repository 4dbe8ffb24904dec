//! Experiment orchestration: JSON-described runs over (dataset, method,
//! layers, training mode, inference mode), repeated with derived seeds and
//! reduced to mean/std summaries, plus the artifact writers the CLI wraps.
//!
//! Every random choice descends from the config seed through derive_seed,
//! so rerunning a config reproduces metrics.json byte for byte; the wall
//! clock lives in a separate timestamp field.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{
    medmnist_dir, prepare, read_medmnist, subsample_balanced, DatasetKind, PreparedSplit, Task,
};
use crate::error::{Error, Result};
use crate::estimators::{derive_seed, EstimatorMode};
use crate::eval::{evaluate, MetricsReport};
use crate::orthonn::{self, qpc_train, svb_train, OrthoNet, SvbConfig, SvbNet};
use crate::qnn::{history_csv, EpochStats, Mlp, TrainConfig};

pub const FULL_IMAGE_DIM: usize = 784;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qnn,
    Orthonn,
}

/// Training algorithm. Exact/Sampled route matrix products through the
/// estimators (qnn); Qpc/Svb are the orthogonal-net trainers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainModeSpec {
    Exact,
    Sampled { n_shots: u64 },
    Qpc,
    Svb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferModeSpec {
    Exact,
    Sampled { n_shots: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// SVB only: singular-value band half-width.
    pub svb_epsilon: f64,
    /// SVB only: clip after every this many steps.
    pub clip_every: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            epochs: 30,
            batch_size: 10,
            learning_rate: 0.05,
            svb_epsilon: 0.01,
            clip_every: 1,
        }
    }
}

fn default_repetitions() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label; doubles as the artifact directory name.
    pub name: String,
    pub dataset: DatasetKind,
    /// Binarization rule; defaults to the dataset's natural task.
    #[serde(default)]
    pub task: Option<Task>,
    /// PCA dimension; omit for raw /255-scaled pixels.
    #[serde(default)]
    pub pca_k: Option<usize>,
    pub method: Method,
    pub layers: Vec<usize>,
    pub train_mode: TrainModeSpec,
    pub infer_mode: InferModeSpec,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Balanced training subsample, per class; omit for the full split.
    #[serde(default)]
    pub subsample_per_class: Option<usize>,
    /// Archive directory; falls back to MEDMNIST_DIR.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write model_rep<i>.json checkpoints next to the metrics.
    #[serde(default)]
    pub save_models: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn task_or_default(&self) -> Task {
        self.task.unwrap_or_else(|| self.dataset.default_task())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(
                "name must be nonempty and free of path separators".into(),
            ));
        }
        if self.layers.len() < 2 {
            return Err(Error::InvalidConfig("layers must list at least input and output".into()));
        }
        let expected_in = self.pca_k.unwrap_or(FULL_IMAGE_DIM);
        if self.layers[0] != expected_in {
            return Err(Error::InvalidConfig(format!(
                "first layer is {} but the feature dimension is {expected_in}",
                self.layers[0]
            )));
        }
        if *self.layers.last().expect("nonempty") != 2 {
            return Err(Error::InvalidConfig("last layer must have 2 output nodes".into()));
        }
        if let Some(k) = self.pca_k {
            if k == 0 || k > FULL_IMAGE_DIM {
                return Err(Error::InvalidConfig(format!(
                    "pca_k {k} must be in 1..={FULL_IMAGE_DIM}"
                )));
            }
        }
        match (self.method, self.train_mode) {
            (Method::Qnn, TrainModeSpec::Exact | TrainModeSpec::Sampled { .. }) => {}
            (Method::Orthonn, TrainModeSpec::Qpc | TrainModeSpec::Svb) => {}
            (m, t) => {
                return Err(Error::InvalidConfig(format!(
                    "train mode {t:?} does not apply to method {m:?}"
                )))
            }
        }
        if self.train_mode == TrainModeSpec::Svb && self.infer_mode != InferModeSpec::Exact {
            return Err(Error::InvalidConfig(
                "the SVB baseline is classical; inference must be exact".into(),
            ));
        }
        if let TrainModeSpec::Sampled { n_shots: 0 } = self.train_mode {
            return Err(Error::InvalidConfig("sampled training needs at least one shot".into()));
        }
        if let InferModeSpec::Sampled { n_shots: 0 } = self.infer_mode {
            return Err(Error::InvalidConfig("sampled inference needs at least one shot".into()));
        }
        let h = &self.hyperparameters;
        if h.epochs == 0 || h.batch_size == 0 || h.clip_every == 0 {
            return Err(Error::InvalidConfig("epochs, batch_size, clip_every must be positive".into()));
        }
        if !(h.learning_rate > 0.0 && h.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(h.svb_epsilon > 0.0) {
            return Err(Error::InvalidConfig("svb_epsilon must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve_data_dir(&self) -> Result<PathBuf> {
        self.data_dir
            .clone()
            .or_else(medmnist_dir)
            .ok_or_else(|| Error::Dataset("no data directory: set data_dir or MEDMNIST_DIR".into()))
    }

    pub fn artifact_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

/// One repetition's outcome. Everything here is a pure function of the
/// config, so artifacts stay byte-stable; wall-clock timing goes to the log
/// stream instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub final_loss: f64,
    pub train: MetricsReport,
    pub test: MetricsReport,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train_auc_mean: f64,
    pub train_auc_std: f64,
    pub train_acc_mean: f64,
    pub train_acc_std: f64,
    pub test_auc_mean: f64,
    pub test_auc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub reps: Vec<RepResult>,
    pub summary: Summary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(reps: &[RepResult]) -> Summary {
    let pick = |f: fn(&RepResult) -> f64| -> (f64, f64) {
        mean_std(&reps.iter().map(f).collect::<Vec<_>>())
    };
    let (train_auc_mean, train_auc_std) = pick(|r| r.train.auc);
    let (train_acc_mean, train_acc_std) = pick(|r| r.train.acc);
    let (test_auc_mean, test_auc_std) = pick(|r| r.test.auc);
    let (test_acc_mean, test_acc_std) = pick(|r| r.test.acc);
    Summary {
        train_auc_mean,
        train_auc_std,
        train_acc_mean,
        train_acc_std,
        test_auc_mean,
        test_auc_std,
        test_acc_mean,
        test_acc_std,
    }
}

enum TrainedModel {
    Mlp(Mlp),
    Ortho(OrthoNet),
    Svb(SvbNet),
}

impl TrainedModel {
    fn score(&self, x: &[f64], mode: EstimatorMode) -> Result<f64> {
        match self {
            TrainedModel::Mlp(m) => m.score(x, mode),
            TrainedModel::Ortho(net) => orthonn::score(net, x, mode),
            TrainedModel::Svb(net) => net.score(x),
        }
    }

    fn to_json(&self) -> String {
        match self {
            TrainedModel::Mlp(m) => m.to_json(),
            TrainedModel::Ortho(net) => net.to_json(),
            TrainedModel::Svb(net) => net.to_json(),
        }
    }
}

/// Scores and argmax decisions for one split. Sampled inference derives an
/// independent shot seed per sample; `salt` separates the splits.
fn eval_split(
    model: &TrainedModel,
    xs: &[Vec<f64>],
    infer: InferModeSpec,
    rep_seed: u64,
    salt: u64,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::with_capacity(xs.len());
    let mut predictions = Vec::with_capacity(xs.len());
    for (i, x) in xs.iter().enumerate() {
        let mode = match infer {
            InferModeSpec::Exact => EstimatorMode::Exact,
            InferModeSpec::Sampled { n_shots } => EstimatorMode::Sampled {
                n_shots,
                seed: derive_seed(rep_seed, i as u64, salt),
            },
        };
        let score = model.score(x, mode)?;
        scores.push(score);
        predictions.push(u8::from(score > 0.0));
    }
    Ok((scores, predictions))
}

struct LoadedData {
    train_x: Vec<Vec<f64>>,
    train_y: Vec<u8>,
    test_x: Vec<Vec<f64>>,
    test_y: Vec<u8>,
}

fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    let dir = config.resolve_data_dir()?;
    let raw = read_medmnist(&config.dataset.archive_path(&dir))?;
    let prepared = prepare(&raw, config.task_or_default(), config.pca_k, true)?;
    let train: PreparedSplit = match config.subsample_per_class {
        Some(per_class) => {
            subsample_balanced(&prepared.train, per_class, derive_seed(config.seed, u64::MAX, 1))?
        }
        None => prepared.train,
    };
    Ok(LoadedData {
        train_x: train.scaled_features(),
        train_y: train.labels,
        test_x: prepared.test.scaled_features(),
        test_y: prepared.test.labels,
    })
}

fn train_one_rep(
    config: &ExperimentConfig,
    data: &LoadedData,
    rep_seed: u64,
) -> Result<(TrainedModel, Vec<EpochStats>)> {
    let h = &config.hyperparameters;
    let train_config = TrainConfig {
        epochs: h.epochs,
        batch_size: h.batch_size,
        learning_rate: h.learning_rate,
        mode: match config.train_mode {
            TrainModeSpec::Sampled { n_shots } => EstimatorMode::Sampled { n_shots, seed: rep_seed },
            _ => EstimatorMode::Exact,
        },
        seed: rep_seed,
    };
    let test = Some((data.test_x.as_slice(), data.test_y.as_slice()));
    match (config.method, config.train_mode) {
        (Method::Qnn, _) => {
            let mut model = Mlp::init(&config.layers, rep_seed)?;
            let history = model.train(&data.train_x, &data.train_y, test, &train_config)?;
            Ok((TrainedModel::Mlp(model), history))
        }
        (Method::Orthonn, TrainModeSpec::Qpc) => {
            let mut net = OrthoNet::init(&config.layers, rep_seed)?;
            let history = qpc_train(&mut net, &data.train_x, &data.train_y, test, &train_config)?;
            Ok((TrainedModel::Ortho(net), history))
        }
        (Method::Orthonn, TrainModeSpec::Svb) => {
            let mut net = SvbNet::init(&config.layers, rep_seed, h.svb_epsilon)?;
            let svb_config = SvbConfig {
                train: train_config,
                epsilon: h.svb_epsilon,
                clip_every: h.clip_every,
            };
            let history = svb_train(&mut net, &data.train_x, &data.train_y, test, &svb_config)?;
            Ok((TrainedModel::Svb(net), history))
        }
        (m, t) => Err(Error::InvalidConfig(format!("train mode {t:?} with method {m:?}"))),
    }
}

/// Runs every repetition of one configured experiment. Models are returned
/// via optional checkpoints; metrics carry everything the tables need.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let data = load_data(config)?;
    let mut reps = Vec::with_capacity(config.repetitions);
    let mut checkpoints = Vec::new();
    for rep in 0..config.repetitions {
        let rep_seed = derive_seed(config.seed, rep as u64, 0);
        let started = Instant::now();
        let (model, history) = train_one_rep(config, &data, rep_seed)?;
        let (train_scores, train_predictions) =
            eval_split(&model, &data.train_x, config.infer_mode, rep_seed, 1)?;
        let (test_scores, test_predictions) =
            eval_split(&model, &data.test_x, config.infer_mode, rep_seed, 2)?;
        let rep_result = RepResult {
            rep,
            seed: rep_seed,
            final_loss: history.last().map_or(f64::NAN, |h| h.loss),
            train: evaluate("train", &train_scores, &train_predictions, &data.train_y)?,
            test: evaluate("test", &test_scores, &test_predictions, &data.test_y)?,
            history,
        };
        log::info!(
            "{}: rep {rep} test acc {:.4} auc {:.4} ({:.1}s)",
            config.name,
            rep_result.test.acc,
            rep_result.test.auc,
            started.elapsed().as_secs_f64()
        );
        reps.push(rep_result);
        if config.save_models {
            checkpoints.push(model.to_json());
        }
    }
    let summary = summarize(&reps);
    let result = ExperimentResult { config: config.clone(), reps, summary };
    if config.save_models {
        let dir = config.artifact_dir();
        fs::create_dir_all(&dir)?;
        for (rep, dump) in checkpoints.iter().enumerate() {
            fs::write(dir.join(format!("model_rep{rep}.json")), dump)?;
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricsArtifact {
    /// Unix seconds at write time; excluded from determinism comparisons.
    timestamp: u64,
    #[serde(flatten)]
    result: ExperimentResult,
}

/// Writes metrics.json plus per-rep history CSVs under the experiment's
/// artifact directory; returns the metrics path.
pub fn write_metrics(result: &ExperimentResult) -> Result<PathBuf> {
    let dir = result.config.artifact_dir();
    fs::create_dir_all(&dir)?;
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let artifact = MetricsArtifact { timestamp, result: result.clone() };
    let path = dir.join("metrics.json");
    fs::write(&path, serde_json::to_string_pretty(&artifact)?)?;
    for rep in &result.reps {
        fs::write(dir.join(format!("history_rep{}.csv", rep.rep)), history_csv(&rep.history))?;
    }
    Ok(path)
}

/// Loads a previously written metrics.json.
pub fn read_metrics(path: &Path) -> Result<ExperimentResult> {
    let artifact: MetricsArtifact = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(artifact.result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Shared artifact root; each cell writes under output_dir/<name>.
    pub output_dir: PathBuf,
    pub cells: Vec<ExperimentConfig>,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let suite: SuiteConfig = serde_json::from_str(text)?;
        let mut names = std::collections::BTreeSet::new();
        for cell in &suite.cells {
            cell.validate()?;
            if !names.insert(cell.name.clone()) {
                return Err(Error::InvalidConfig(format!("duplicate cell name {:?}", cell.name)));
            }
        }
        Ok(suite)
    }
}

/// Runs a suite of experiments, resuming any cell whose metrics.json is
/// already present. Cells fan out over `jobs` worker threads; results come
/// back in suite order.
pub fn table1_runner(suite: &SuiteConfig, jobs: usize, resume: bool) -> Result<Vec<ExperimentResult>> {
    let configs: Vec<ExperimentConfig> = suite
        .cells
        .iter()
        .map(|c| ExperimentConfig { output_dir: suite.output_dir.clone(), ..c.clone() })
        .collect();
    let jobs = jobs.max(1).min(configs.len().max(1));

    let run_cell = |config: &ExperimentConfig| -> Result<ExperimentResult> {
        let metrics_path = config.artifact_dir().join("metrics.json");
        if resume && metrics_path.is_file() {
            log::info!("{}: reusing {}", config.name, metrics_path.display());
            return read_metrics(&metrics_path);
        }
        let result = run_experiment(config)?;
        write_metrics(&result)?;
        Ok(result)
    };

    if jobs <= 1 {
        return configs.iter().map(run_cell).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<ExperimentResult>>> = Vec::new();
    slots.resize_with(configs.len(), || None);
    let slots = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let outcome = run_cell(&configs[i]);
                slots.lock().expect("no poisoned workers")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .iter_mut()
        .map(|slot| slot.take().expect("every cell ran"))
        .collect()
}

/// Combined results table: one line per cell, eight metric
/// columns (train/test x AUC/ACC x mean/std).
pub fn table1_to_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from(
        "name,dataset,method,layers,training,inference,\
         train_auc_mean,train_auc_std,train_acc_mean,train_acc_std,\
         test_auc_mean,test_auc_std,test_acc_mean,test_acc_std\n",
    );
    for r in results {
        let c = &r.config;
        let layers = c.layers.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x");
        let s = &r.summary;
        out.push_str(&format!(
            "{},{:?},{:?},{layers},{:?},{:?},{},{},{},{},{},{},{},{}\n",
            c.name,
            c.dataset,
            c.method,
            c.train_mode,
            c.infer_mode,
            s.train_auc_mean,
            s.train_auc_std,
            s.train_acc_mean,
            s.train_acc_std,
            s.test_auc_mean,
            s.test_auc_std,
            s.test_acc_mean,
            s.test_acc_std,
        ));
    }
    out
}

/// Rough circuit-invocation count for --dry-run: how many shot-based
/// estimates one run would dispatch. Exact modes cost zero circuits.
pub fn estimated_circuit_invocations(config: &ExperimentConfig, n_train: usize, n_test: usize) -> u64 {
    let n_train = config.subsample_per_class.map_or(n_train, |p| 2 * p) as u64;
    let n_test = n_test as u64;
    let epochs = config.hyperparameters.epochs as u64;
    let train_circuits = match (config.method, config.train_mode) {
        (Method::Qnn, TrainModeSpec::Sampled { .. }) => {
            // forward: one circuit per output row per layer; backward: one
            // per transposed row for each hidden layer
            let forward: u64 = config.layers[1..].iter().map(|&r| r as u64).sum();
            let backward: u64 = config.layers[1..config.layers.len() - 1]
                .iter()
                .map(|&r| r as u64)
                .sum();
            epochs * n_train * (forward + backward)
        }
        _ => 0,
    };
    let infer_circuits = match config.infer_mode {
        InferModeSpec::Exact => 0,
        InferModeSpec::Sampled { .. } => {
            let per_sample = match config.method {
                // one matvec circuit batch per layer output row
                Method::Qnn => config.layers[1..].iter().map(|&r| r as u64).sum::<u64>(),
                // one layer-distribution measurement per layer
                Method::Orthonn => (config.layers.len() - 1) as u64,
            };
            (n_train + n_test) * per_sample
        }
    };
    train_circuits + infer_circuits
}

/// Official archive sizes, used only to annotate --dry-run estimates.
pub fn nominal_split_sizes(dataset: DatasetKind) -> (usize, usize) {
    match dataset {
        DatasetKind::Pneumonia => (4708, 624),
        DatasetKind::Retina => (1080, 400),
    }
}
