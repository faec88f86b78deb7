//! Fully connected rectifier networks trained by minibatch SGD on softmax
//! cross-entropy.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{rng, weights, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    pub sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to `l + 1`, shape out x in.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for AnnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 0.02,
            batch_size: 64,
            momentum: 0.9,
            lr_decay: 0.8,
            seed: 1,
        }
    }
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl AnnModel {
    /// He-normal weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParams(format!("bad architecture {sizes:?}")));
        }
        let mut rng = rng::seeded(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_fn((w[1], w[0]), |_| {
                normal.sample(&mut rng)
            }));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Pre-activations of every layer for a batch (rows = samples).
    pub fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut zs = Vec::with_capacity(self.n_layers());
        let mut a = x.to_owned();
        for l in 0..self.n_layers() {
            let z = a.dot(&self.weights[l].t()) + &self.biases[l];
            a = if l + 1 < self.n_layers() {
                z.mapv(relu)
            } else {
                z.clone()
            };
            zs.push(z);
        }
        zs
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x).pop().expect("at least one layer")
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    /// Mean cross-entropy and its gradients over a batch.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: &[usize]) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let zs = self.forward(x);
        let logits = zs.last().expect("at least one layer");
        let (loss, mut delta) = softmax_xent(logits, y);
        delta /= n;
        let mut gw = vec![Array2::zeros((0, 0)); self.n_layers()];
        let mut gb = vec![Array1::zeros(0); self.n_layers()];
        for l in (0..self.n_layers()).rev() {
            let input = if l == 0 {
                x.to_owned()
            } else {
                zs[l - 1].mapv(relu)
            };
            gw[l] = delta.t().dot(&input);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                back.zip_mut_with(&zs[l - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (
            loss / n,
            Gradients {
                weights: gw,
                biases: gb,
            },
        )
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let zs = self.forward(x);
        softmax_xent(zs.last().expect("at least one layer"), y).0 / x.nrows() as f64
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    /// Write `<path>` (JSON) and its parameter sidecar.
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        let side = path.with_extension("weights.bin");
        let params = self.flat_parameters();
        let file = AnnFile {
            format: ANN_FORMAT.into(),
            version: 1,
            activation: "relu".into(),
            sizes: self.sizes.clone(),
            weights_file: side
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            weights_count: params.len(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        weights::save(&side, &params)?;
        Ok(side)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: AnnFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != ANN_FORMAT {
            return Err(Error::WeightsFormat(format!(
                "unknown model format `{}`",
                file.format
            )));
        }
        let values = weights::load(&path.with_file_name(&file.weights_file))?;
        let expected: usize = file.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if values.len() != expected || values.len() != file.weights_count {
            return Err(Error::WeightsFormat(format!(
                "sidecar holds {} values, architecture {:?} needs {expected}",
                values.len(),
                file.sizes
            )));
        }
        let mut at = 0;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in file.sizes.windows(2) {
            let n = w[0] * w[1];
            weights.push(
                Array2::from_shape_vec((w[1], w[0]), values[at..at + n].to_vec())
                    .expect("sized above"),
            );
            at += n;
            biases.push(Array1::from(values[at..at + w[1]].to_vec()));
            at += w[1];
        }
        Ok(Self {
            sizes: file.sizes,
            weights,
            biases,
        })
    }
}

const ANN_FORMAT: &str = "oesnn-ann";

#[derive(Serialize, Deserialize)]
struct AnnFile {
    format: String,
    version: u32,
    activation: String,
    sizes: Vec<usize>,
    weights_file: String,
    weights_count: usize,
}

#[inline]
fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// Summed cross-entropy and `softmax - onehot`.
fn softmax_xent(logits: &Array2<f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let mut p = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in p.rows_mut().into_iter().zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - m).exp());
        let sum = row.sum();
        row /= sum;
        let pl = row[label];
        loss -= if pl.is_nan() {
            pl
        } else {
            pl.max(f64::MIN_POSITIVE).ln()
        };
        row[label] -= 1.0;
    }
    (loss, p)
}

/// Batch of images as a `(n, dim)` matrix scaled to `[0, 1]`.
pub fn batch_matrix(data: &Dataset, idx: &[usize]) -> Array2<f64> {
    let dim = data.dim();
    let mut x = Array2::zeros((idx.len(), dim));
    for (r, &i) in idx.iter().enumerate() {
        for (dst, &p) in x.row_mut(r).iter_mut().zip(data.raw(i)) {
            *dst = p as f64 / 255.0;
        }
    }
    x
}

/// Minibatch SGD with momentum; per-epoch shuffling from `cfg.seed`.
pub fn train_ann(data: &Dataset, sizes: &[usize], cfg: &AnnTrainConfig) -> Result<AnnModel> {
    train_ann_with(data, sizes, cfg, |_, _| {})
}

/// As [`train_ann`], reporting `(epoch, mean loss)` after every epoch.
pub fn train_ann_with(
    data: &Dataset,
    sizes: &[usize],
    cfg: &AnnTrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<AnnModel> {
    if sizes.first() != Some(&data.dim()) {
        return Err(Error::ShapeMismatch(format!(
            "architecture input {:?} does not match data dimension {}",
            sizes.first(),
            data.dim()
        )));
    }
    if sizes.last().is_some_and(|&c| c < data.n_classes()) {
        return Err(Error::ShapeMismatch(format!(
            "{} outputs for {} classes",
            sizes.last().unwrap(),
            data.n_classes()
        )));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParams(
            "batch size and learning rate must be > 0".into(),
        ));
    }
    let mut model = AnnModel::init(sizes, cfg.seed)?;
    if cfg.epochs == 0 {
        return Ok(model);
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut vel_w: Vec<Array2<f64>> = model
        .weights
        .iter()
        .map(|w| Array2::zeros(w.raw_dim()))
        .collect();
    let mut vel_b: Vec<Array1<f64>> = model
        .biases
        .iter()
        .map(|b| Array1::zeros(b.raw_dim()))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::substream(cfg.seed, 1);
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_matrix(data, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
            let (loss, g) = model.loss_and_gradients(x.view(), &y);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            for l in 0..model.n_layers() {
                vel_w[l].zip_mut_with(&g.weights[l], |v, &d| *v = cfg.momentum * *v - lr * d);
                vel_b[l].zip_mut_with(&g.biases[l], |v, &d| *v = cfg.momentum * *v - lr * d);
                model.weights[l] += &vel_w[l];
                model.biases[l] += &vel_b[l];
            }
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch, loss: mean });
        }
        progress(epoch, mean);
        lr *= cfg.lr_decay;
    }
    Ok(model)
}

/// Test-set predictions in batches.
pub fn predict_dataset(model: &AnnModel, data: &Dataset) -> Vec<usize> {
    let idx: Vec<usize> = (0..data.len()).collect();
    idx.chunks(1000)
        .flat_map(|c| model.predict(batch_matrix(data, c).view()))
        .collect()
}

/// Per-layer maximum activation (rectified hidden layers, raw output
/// logits) over the given samples.
pub fn max_activations(model: &AnnModel, data: &Dataset, n: usize) -> Vec<f64> {
    let idx: Vec<usize> = (0..n.min(data.len())).collect();
    let mut maxima = vec![0.0f64; model.n_layers()];
    for c in idx.chunks(1000) {
        let zs = model.forward(batch_matrix(data, c).view());
        for (m, z) in maxima.iter_mut().zip(&zs) {
            *m = z.fold(*m, |a, &b| a.max(b));
        }
    }
    maxima
}
