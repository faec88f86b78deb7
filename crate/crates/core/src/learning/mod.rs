//! Offline training: trace STDP for the winner-take-all network, rectifier
//! ANN training, ANN-to-SNN conversion and classification scoring.

pub mod ann;
pub mod convert;
pub mod evaluate;
pub mod stdp;

pub use ann::{train_ann, train_ann_with, AnnModel, AnnTrainConfig};

pub use convert::{
    convert_ann_to_snn, fit_rate_curve, rate_coding_neuron, rate_curve, ConversionConfig,
    Converted, NormalizationMode, RateFit,
};
pub use evaluate::{evaluate, evaluate_ann, Evaluation};
pub use stdp::{
    normalize_row, stdp_update, train_stdp, train_stdp_with, LabelAssignment, StdpConfig,
    StdpTrained,
};

use crate::{Error, Result};

/// Labelled images stored as 8-bit intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(dim: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || pixels.len() != dim * labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for {} samples of dimension {dim}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            dim,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.dim..(i + 1) * self.dim]
    }

    /// Intensities scaled to `[0, 1]`.
    pub fn image(&self, i: usize) -> Vec<f64> {
        self.raw(i).iter().map(|&p| p as f64 / 255.0).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// The first `n` samples (or all of them when fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            dim: self.dim,
            pixels: self.pixels[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}
