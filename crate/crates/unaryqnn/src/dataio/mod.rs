//! MedMNIST ingestion and pre-processing: NPZ archives in, binarized and
//! PCA-reduced unit-norm feature sets out.
//!
//! Pixels are scaled to [0, 1] before any statistics. PCA is always fitted
//! on the training split alone and the model's components follow a
//! largest-entry-positive sign convention so runs are reproducible across
//! machines. Per-sample norms peeled off during normalization are kept next
//! to the features; the estimator stack multiplies them back.

pub mod npy;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write as _};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use npy::{parse_npy, write_npy, NpyArray};

/// Environment variable naming the directory that holds the official
/// `pneumoniamnist.npz` / `retinamnist.npz` archives.
pub const MEDMNIST_DIR_VAR: &str = "MEDMNIST_DIR";

pub fn medmnist_dir() -> Option<PathBuf> {
    std::env::var_os(MEDMNIST_DIR_VAR).map(PathBuf::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Pneumonia,
    Retina,
}

impl DatasetKind {
    pub fn archive_name(self) -> &'static str {
        match self {
            DatasetKind::Pneumonia => "pneumoniamnist.npz",
            DatasetKind::Retina => "retinamnist.npz",
        }
    }

    pub fn default_task(self) -> Task {
        match self {
            DatasetKind::Pneumonia => Task::Binary,
            DatasetKind::Retina => Task::ZeroVsRest,
        }
    }

    pub fn archive_path(self, dir: &Path) -> PathBuf {
        dir.join(self.archive_name())
    }
}

/// Label binarization rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Labels are already 0/1 and pass through unchanged.
    Binary,
    /// Class 0 stays 0; classes 1 through 4 map to 1.
    ZeroVsRest,
}

pub fn binarize(labels: &[u8], task: Task) -> Result<Vec<u8>> {
    labels
        .iter()
        .map(|&l| match (task, l) {
            (Task::Binary, 0 | 1) => Ok(l),
            (Task::ZeroVsRest, 0) => Ok(0),
            (Task::ZeroVsRest, 1..=4) => Ok(1),
            _ => Err(Error::Dataset(format!("unexpected label value {l} for {task:?}"))),
        })
        .collect()
}

/// One split of raw images: n images of rows x cols unsigned 8-bit pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSplit {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    /// C-order pixel bytes, n * rows * cols long.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawSplit {
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.images[i * d..(i + 1) * d]
    }

    pub fn class_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedmnistData {
    pub train: RawSplit,
    pub test: RawSplit,
    /// Parsed when present; the experiments use train/test only.
    pub val: Option<RawSplit>,
}

fn npz_member(archive: &mut zip::ZipArchive<BufReader<File>>, key: &str) -> Result<Option<NpyArray>> {
    for name in [format!("{key}.npy"), key.to_string()] {
        match archive.by_name(&name) {
            Ok(mut file) => {
                let mut bytes = Vec::new();
                file.read_to_end(&mut bytes)?;
                return Ok(Some(parse_npy(&bytes)?));
            }
            Err(zip::result::ZipError::FileNotFound) => continue,
            Err(e) => return Err(Error::Npz(e.to_string())),
        }
    }
    Ok(None)
}

fn split_from_arrays(key: &str, images: NpyArray, labels: NpyArray) -> Result<RawSplit> {
    let (n, rows, cols) = match images.shape.as_slice() {
        [n, r, c] => (*n, *r, *c),
        other => {
            return Err(Error::Dataset(format!(
                "{key}_images has shape {other:?}, expected (n, rows, cols)"
            )))
        }
    };
    let label_n = match labels.shape.as_slice() {
        [n] => *n,
        [n, 1] => *n,
        other => {
            return Err(Error::Dataset(format!(
                "{key}_labels has shape {other:?}, expected (n,) or (n, 1)"
            )))
        }
    };
    if label_n != n {
        return Err(Error::Dataset(format!(
            "{key}: {n} images but {label_n} labels"
        )));
    }
    Ok(RawSplit { n, rows, cols, images: images.data, labels: labels.data })
}

/// Reads a MedMNIST-layout NPZ archive (a zip of NPY members named
/// train_images, train_labels, test_images, test_labels, optionally val_*).
pub fn read_medmnist(path: &Path) -> Result<MedmnistData> {
    let file = File::open(path)?;
    let mut archive =
        zip::ZipArchive::new(BufReader::new(file)).map_err(|e| Error::Npz(e.to_string()))?;
    let mut fetch = |key: &str| -> Result<NpyArray> {
        npz_member(&mut archive, key)?
            .ok_or_else(|| Error::Npz(format!("archive has no member {key:?}")))
    };
    let train = split_from_arrays("train", fetch("train_images")?, fetch("train_labels")?)?;
    let test = split_from_arrays("test", fetch("test_images")?, fetch("test_labels")?)?;
    let val = match npz_member(&mut archive, "val_images")? {
        Some(images) => {
            let labels = npz_member(&mut archive, "val_labels")?
                .ok_or_else(|| Error::Npz("val_images present without val_labels".into()))?;
            Some(split_from_arrays("val", images, labels)?)
        }
        None => None,
    };
    Ok(MedmnistData { train, test, val })
}

/// Writes the same layout back; labels are stored with shape (n, 1) as the
/// official archives do.
pub fn write_medmnist_npz(data: &MedmnistData, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = zip::ZipWriter::new(file);
    let options = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated);
    let mut put = |name: &str, shape: &[usize], bytes: &[u8]| -> Result<()> {
        writer.start_file(name, options).map_err(|e| Error::Npz(e.to_string()))?;
        writer.write_all(&write_npy(shape, bytes)?)?;
        Ok(())
    };
    for (key, split) in [("train", &data.train), ("test", &data.test)]
        .into_iter()
        .chain(data.val.iter().map(|v| ("val", v)))
    {
        put(&format!("{key}_images.npy"), &[split.n, split.rows, split.cols], &split.images)?;
        put(&format!("{key}_labels.npy"), &[split.n, 1], &split.labels)?;
    }
    writer.finish().map_err(|e| Error::Npz(e.to_string()))?;
    Ok(())
}

/// Mean and top-k principal axes of a pixel set, fitted on /255-scaled data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k rows, each a unit-norm principal axis in pixel space.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept axes, non-increasing.
    pub explained_variance: Vec<f64>,
}

pub fn fit_pca(pixels: &[u8], n_samples: usize, dim: usize, k: usize) -> Result<PcaModel> {
    if pixels.len() != n_samples * dim {
        return Err(Error::DimensionMismatch { expected: n_samples * dim, got: pixels.len() });
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidConfig(format!(
            "PCA dimension {k} must be in 1..={dim}"
        )));
    }
    if n_samples < 2 {
        return Err(Error::Dataset("PCA needs at least two samples".into()));
    }
    let mut mean = vec![0.0; dim];
    for sample in pixels.chunks_exact(dim) {
        for (m, &p) in mean.iter_mut().zip(sample) {
            *m += p as f64 / 255.0;
        }
    }
    for m in &mut mean {
        *m /= n_samples as f64;
    }
    let centered = DMatrix::from_fn(n_samples, dim, |i, j| {
        pixels[i * dim + j] as f64 / 255.0 - mean[j]
    });
    let cov = centered.transpose() * &centered / (n_samples as f64 - 1.0);
    let eigen = nalgebra::SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).expect("finite eigenvalues")
    });
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eigen.eigenvectors.column(idx);
        let mut axis: Vec<f64> = col.iter().copied().collect();
        // deterministic sign: the largest-magnitude entry points positive
        let mut max_at = 0;
        for (j, v) in axis.iter().enumerate() {
            if v.abs() > axis[max_at].abs() {
                max_at = j;
            }
        }
        if axis[max_at] < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        components.push(axis);
        explained_variance.push(eigen.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel { mean, components, explained_variance })
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects /255-scaled, mean-centered pixels onto the kept axes.
    pub fn transform(&self, pixels: &[u8], n_samples: usize) -> Result<Vec<Vec<f64>>> {
        let dim = self.dim();
        if pixels.len() != n_samples * dim {
            return Err(Error::DimensionMismatch { expected: n_samples * dim, got: pixels.len() });
        }
        let mut out = Vec::with_capacity(n_samples);
        let mut centered = vec![0.0; dim];
        for sample in pixels.chunks_exact(dim) {
            for ((c, &p), m) in centered.iter_mut().zip(sample).zip(&self.mean) {
                *c = p as f64 / 255.0 - m;
            }
            out.push(
                self.components
                    .iter()
                    .map(|axis| axis.iter().zip(&centered).map(|(a, c)| a * c).sum())
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Max deviation of components * componentsT from the identity.
    pub fn orthonormality_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.components.iter().enumerate() {
            for (j, b) in self.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Features ready for the estimator stack: unit rows plus the norms that
/// were peeled off.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub features: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub labels: Vec<u8>,
}

impl PreparedSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows with their norms multiplied back: the model-space inputs.
    pub fn scaled_features(&self) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .zip(&self.norms)
            .map(|(row, &n)| row.iter().map(|v| v * n).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub train: PreparedSplit,
    pub test: PreparedSplit,
    pub pca: Option<PcaModel>,
    /// Hash of the preparation config, for artifact bookkeeping.
    pub provenance: String,
}

fn fnv1a64(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn prepare_split(rows: Vec<Vec<f64>>, labels: Vec<u8>, normalize: bool) -> Result<PreparedSplit> {
    let mut features = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Dataset(format!("sample {i} maps to the zero vector")));
        }
        if normalize {
            features.push(row.iter().map(|v| v / norm).collect());
            norms.push(norm);
        } else {
            features.push(row);
            norms.push(1.0);
        }
    }
    Ok(PreparedSplit { features, norms, labels })
}

/// Full pipeline: binarize labels, optionally PCA-reduce (fitting on the
/// training split only), then unit-normalize rows keeping their norms.
/// `pca_k` of None feeds /255-scaled raw pixels through unchanged.
pub fn prepare(
    data: &MedmnistData,
    task: Task,
    pca_k: Option<usize>,
    normalize: bool,
) -> Result<PreparedDataset> {
    let train_labels = binarize(&data.train.labels, task)?;
    let test_labels = binarize(&data.test.labels, task)?;
    let dim = data.train.dim();
    if data.test.dim() != dim {
        return Err(Error::Dataset("train and test image sizes differ".into()));
    }
    let (train_rows, test_rows, pca) = match pca_k {
        Some(k) => {
            let model = fit_pca(&data.train.images, data.train.n, dim, k)?;
            let train_rows = model.transform(&data.train.images, data.train.n)?;
            let test_rows = model.transform(&data.test.images, data.test.n)?;
            (train_rows, test_rows, Some(model))
        }
        None => {
            let scale = |split: &RawSplit| {
                split
                    .images
                    .chunks_exact(dim)
                    .map(|s| s.iter().map(|&p| p as f64 / 255.0).collect())
                    .collect::<Vec<Vec<f64>>>()
            };
            (scale(&data.train), scale(&data.test), None)
        }
    };
    let provenance = format!(
        "{:016x}",
        fnv1a64(&format!(
            "task={task:?};k={pca_k:?};normalize={normalize};train={};test={};dim={dim}",
            data.train.n, data.test.n
        ))
    );
    Ok(PreparedDataset {
        train: prepare_split(train_rows, train_labels, normalize)?,
        test: prepare_split(test_rows, test_labels, normalize)?,
        pca,
        provenance,
    })
}

/// Seeded balanced subsample without replacement, `per_class` from each of
/// the two classes. Selected indices are emitted in ascending order.
pub fn subsample_balanced(split: &PreparedSplit, per_class: usize, seed: u64) -> Result<PreparedSplit> {
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(2 * per_class);
    for class in 0..2u8 {
        let mut pool: Vec<usize> = (0..split.len()).filter(|&i| split.labels[i] == class).collect();
        if pool.len() < per_class {
            return Err(Error::Dataset(format!(
                "class {class} has {} samples, need {per_class}",
                pool.len()
            )));
        }
        for i in 0..per_class {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        chosen.extend_from_slice(&pool[..per_class]);
    }
    chosen.sort_unstable();
    Ok(PreparedSplit {
        features: chosen.iter().map(|&i| split.features[i].clone()).collect(),
        norms: chosen.iter().map(|&i| split.norms[i]).collect(),
        labels: chosen.iter().map(|&i| split.labels[i]).collect(),
    })
}

const CSV_PIXELS: usize = 784;

/// Writes the CSV fallback layout: header then one row per image holding
/// split name, label, and 784 pixel bytes.
pub fn write_csv(data: &MedmnistData, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["split".to_string(), "label".to_string()];
    header.extend((0..CSV_PIXELS).map(|i| format!("px{i}")));
    writer.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    for (name, split) in [("train", &data.train), ("test", &data.test)]
        .into_iter()
        .chain(data.val.iter().map(|v| ("val", v)))
    {
        if split.dim() != CSV_PIXELS {
            return Err(Error::Csv(format!(
                "CSV layout is fixed to {CSV_PIXELS} pixels, image has {}",
                split.dim()
            )));
        }
        for i in 0..split.n {
            let mut record = vec![name.to_string(), split.labels[i].to_string()];
            record.extend(split.image(i).iter().map(|p| p.to_string()));
            writer.write_record(&record).map_err(|e| Error::Csv(e.to_string()))?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads the CSV fallback layout back into 28x28 raw splits. A header row
/// is detected by its non-numeric label column and skipped.
pub fn read_csv(path: &Path) -> Result<MedmnistData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(File::open(path)?));
    let mut splits: BTreeMap<String, (Vec<u8>, Vec<u8>)> = BTreeMap::new();
    let mut saw_row = false;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if line == 0 && record.get(1).is_some_and(|f| f.parse::<u8>().is_err()) {
            continue; // header row
        }
        saw_row = true;
        if record.len() != 2 + CSV_PIXELS {
            return Err(Error::Csv(format!(
                "row {} has {} fields, expected {}",
                line + 1,
                record.len(),
                2 + CSV_PIXELS
            )));
        }
        let split_name = record.get(0).expect("checked length").to_string();
        let parse_u8 = |field: usize| -> Result<u8> {
            record
                .get(field)
                .expect("checked length")
                .trim()
                .parse()
                .map_err(|_| {
                    Error::Csv(format!(
                        "row {}, field {}: {:?} is not a byte",
                        line + 1,
                        field,
                        record.get(field).unwrap_or("")
                    ))
                })
        };
        let label = parse_u8(1)?;
        let entry = splits.entry(split_name).or_default();
        entry.0.push(label);
        for f in 0..CSV_PIXELS {
            entry.1.push(parse_u8(2 + f)?);
        }
    }
    if !saw_row {
        return Err(Error::Csv("no data rows".into()));
    }
    let mut take = |name: &str| -> Option<RawSplit> {
        splits.remove(name).map(|(labels, images)| RawSplit {
            n: labels.len(),
            rows: 28,
            cols: 28,
            images,
            labels,
        })
    };
    let train = take("train").ok_or_else(|| Error::Csv("no rows with split=train".into()))?;
    let test = take("test").ok_or_else(|| Error::Csv("no rows with split=test".into()))?;
    let val = take("val");
    if let Some(name) = splits.keys().next() {
        return Err(Error::Csv(format!("unknown split name {name:?}")));
    }
    Ok(MedmnistData { train, test, val })
}

/// Converts between the NPZ archive format and the CSV fallback, direction
/// chosen by file extension.
pub fn convert_csv(path_in: &Path, path_out: &Path) -> Result<()> {
    let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).unwrap_or("").to_lowercase();
    match (ext(path_in).as_str(), ext(path_out).as_str()) {
        ("npz", "csv") => write_csv(&read_medmnist(path_in)?, path_out),
        ("csv", "npz") => write_medmnist_npz(&read_csv(path_in)?, path_out),
        (from, to) => Err(Error::InvalidConfig(format!(
            "cannot convert .{from} to .{to}; supported: npz->csv, csv->npz"
        ))),
    }
}
